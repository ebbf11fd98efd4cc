"""Photo to mask to size and shape, then three silhouettes to a volume.

Run with ``python3 demos/particle_morphology.py``. Everything is synthetic,
so no input files are needed.
"""
import numpy as np

from aggkit.imgseg import segment
from aggkit.morph2d import morph_report, calibrate_scale, gradation_report, split_particles
from aggkit.morph3d import morph_report_3d, project_silhouette
from aggkit.shapes import ellipsoid, icosphere
from aggkit.triview import ViewTriplet, reconstruct_volume

rng = np.random.default_rng(0)

# a tan rock on a blue backdrop, lit from one side
h, w = 300, 400
yy, xx = np.mgrid[:h, :w]
img = np.empty((h, w, 3))
img[:] = [40, 90, 170]
rock = ((xx - 200) / 90.0) ** 2 + ((yy - 150) / 55.0) ** 2 <= 1
img[rock] = [190, 160, 120]
img *= (0.6 + 0.4 * xx / w)[..., None]
img = np.clip(img + rng.normal(0, 4, img.shape), 0, 255).astype(np.uint8)

mask = segment(img)
print("foreground pixels:", mask.area_px, "(true", int(rock.sum()), ")")

# a 5.7 cm calibration ball imaged 80 px across gives the pixel size
ball = ((xx - 200) ** 2 + (yy - 150) ** 2) <= 40 ** 2
scale = calibrate_scale(ball, 5.7)
rep = morph_report(mask, scale)
print(f"ESD {rep.esd:.2f} cm, FER {rep.fer2d:.2f}, circularity {rep.circularity:.3f}")

# a tray of discs gives a gradation curve
ty, tx = np.mgrid[:400, :400]
tray = np.zeros((400, 400), bool)
for k, r in enumerate(rng.uniform(8, 30, 12)):
    cy, cx = 60 + 100 * (k // 4), 50 + 100 * (k % 4)
    tray |= (ty - cy) ** 2 + (tx - cx) ** 2 <= r ** 2
grad = gradation_report(split_particles(tray), scale=0.1, bins=5)
for lo, hi, c, cum in zip(grad.edges[:-1], grad.edges[1:], grad.counts, grad.cumulative[1:]):
    print(f"  {lo:5.2f}-{hi:5.2f} cm: {c:2d} particles, {cum:5.1f} % passing")

# three orthogonal silhouettes of an ellipsoid and a unit ball rendered alongside;
# the ball spans 90 px, enough for the resolution correction to hold
rock3d = ellipsoid((3.0, 2.0, 1.5), subdivisions=4)
ppu = 90.0
top = project_silhouette(rock3d, [0, 1, 0], ppu).data
front = project_silhouette(rock3d, [0, 0, 1], ppu).data
side = project_silhouette(rock3d, [1, 0, 0], ppu).data
ball_px = 2 * np.sqrt(project_silhouette(icosphere(4, 0.5), [0, 1, 0], ppu).data.sum() / np.pi)
rec = reconstruct_volume(ViewTriplet(top, front, side, ball_px, ball_px, ball_px, 1.0), resolution=256)
true = 4 / 3 * np.pi * 3.0 * 2.0 * 1.5
print(f"raw {rec.raw_volume:.2f}, corrected {rec.corrected_volume:.2f}, true {true:.2f} (ball units)")

r3 = morph_report_3d(rock3d)
print(f"3-D box {r3.a:.2f} x {r3.b:.2f} x {r3.c:.2f}, FER {r3.fer3d:.2f}, sphericity {r3.sphericity:.3f}")
