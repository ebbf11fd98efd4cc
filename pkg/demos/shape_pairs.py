"""Partial and complete scans of one rock, their coverage and their Chamfer gap.

Run with ``python3 demos/shape_pairs.py [out_dir]``.
"""
import sys

from aggkit.evalkit import chamfer_l1, shape_percentage
from aggkit.shapepairs import PairConfig, generate_pairs, orientation_clouds, orientation_rotations, scan_partial
from aggkit.shapes import synthetic_rock

out = sys.argv[1] if len(sys.argv) > 1 else "out/demo_pairs"

# a 10 cm rock scanned by sensor disks with 5 mm spacing; fewer points than the
# defaults, so the output sizes are scaled down to match
rock = synthetic_rock(21, size=0.1)
cfg = PairConfig(arc_spacing=0.005, ring_spacing=0.005, partial_n=256, complete_n=2048, orientations=4)

R = orientation_rotations(cfg)[0]
partials, complete = orientation_clouds(rock, R, cfg)
turned = rock.transformed(R)
# shape percentage is taken on the raw hits; the sampled clouds are too sparse
# for a 3 degree tolerance
print(f"complete cloud: {len(complete)} points, SP {shape_percentage(scan_partial(turned, 16, cfg)):.1f} %")
for k, p in partials.items():
    sp = shape_percentage(scan_partial(turned, k, cfg))
    print(f"  {k} sensors: SP {sp:5.1f} %, Chamfer to complete {chamfer_l1(p, complete) * 1000:.2f} mm")

man = generate_pairs([("rock_21", rock)], cfg, out)
print(f"{man['n_pairs']} pairs written under {out}")
