"""Command-line front end.

Every command writes its artifacts plus ``run.json`` (the resolved
parameters) into ``--out``. Parameters come from built-in defaults, then the
``--config`` JSON file, then explicit flags. Exit status is 0 on success, 1
on a domain error and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AggkitError

log = logging.getLogger("aggkit")

MESH_SUFFIXES = (".obj", ".ply")


class UsageError(Exception):
    pass


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _load_library(path, unit_scale: float = 1.0):
    from .geomcore import load_mesh

    p = Path(path)
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in MESH_SUFFIXES) if p.is_dir() else [p]
    if not files:
        raise AggkitError(f"no .obj or .ply meshes in {path}")
    return [(f.stem, load_mesh(f, unit_scale)) for f in files]


def _load_mask(path):
    from .imgseg import read_image, read_pgm, segment

    p = Path(path)
    if p.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(p).data
    return segment(read_image(p)).data


# ---------------------------------------------------------------------------
# commands; each takes the resolved parameter dict and the output directory


def cmd_segment(p, out: Path) -> dict:
    from .imgseg import read_image, segment, write_pgm

    mask = segment(read_image(p["image"]), gamma=p["gamma"], method=p["method"], value=p["value"],
                   window=p["window"], offset=p["offset"], largest_only=p["largest_only"],
                   clear_border=not p["keep_border"])
    write_pgm(mask, out / "mask.pgm")
    return {"foreground_px": mask.area_px, "components": mask.n_components(), "mask": "mask.pgm"}


def cmd_triview(p, out: Path) -> dict:
    from .morph2d import equivalent_diameter_px
    from .triview import ViewTriplet, reconstruct_volume
    from .evalkit import WATER_DENSITY

    masks = [_load_mask(f) for f in p["views"]]
    if p["ball_masks"]:
        balls = [equivalent_diameter_px(_load_mask(f)) for f in p["ball_masks"]]
    elif p["ball_px"]:
        balls = list(p["ball_px"])
    else:
        raise UsageError("give --ball-px or --ball-masks")
    if len(balls) != 3:
        raise UsageError("need three ball sizes (top, front, side)")
    units = p["units"]
    if units not in WATER_DENSITY:
        raise AggkitError(f"unknown unit {units!r}")
    rec = reconstruct_volume(ViewTriplet(*masks, *balls, p["ball_diameter"]), c1=p["c1"],
                             resolution=p["resolution"], specific_gravity=p["specific_gravity"],
                             water_density=WATER_DENSITY[units][0])
    rep = rec.report(units)
    rep["weight_units"] = WATER_DENSITY[units][1]
    rep["dims"] = list(rec.dims)
    _dump(rep, out / "volume.json")
    return rep


def cmd_morph2d(p, out: Path) -> dict:
    from .imgseg import read_pgm
    from .morph2d import (calibrate_scale, estimate_volume_2d, gradation_report, morph_report,
                          split_particles)

    scale = p["scale"]
    if p["ball_mask"]:
        if not p["ball_diameter"]:
            raise UsageError("--ball-mask needs --ball-diameter")
        scale = calibrate_scale(read_pgm(p["ball_mask"]), p["ball_diameter"])
    scale = scale or 1.0
    rows, particles = [], []
    for f in p["masks"]:
        for k, m in enumerate(split_particles(_load_mask(f), exclude_border=not p["include_border"])):
            r = morph_report(m, scale).as_dict()
            r["volume_estimate"] = estimate_volume_2d(r["l_max"], r["l_min"], p["fer3d"])
            r.update(source=str(f), particle=k)
            rows.append(r)
            particles.append(m)
    if not rows:
        raise AggkitError("no complete particles found")
    grad = gradation_report(particles, scale, p["metric"], bins=p["bins"])
    grad.to_csv(out / "gradation.csv")
    rep = {"scale": scale, "particles": rows}
    _dump(rep, out / "morph2d.json")
    return {"scale": scale, "n_particles": len(rows), "report": "morph2d.json", "gradation": "gradation.csv"}


def cmd_morph3d(p, out: Path) -> dict:
    from .geomcore import load_mesh
    from .morph3d import morph_report_3d, multiview_2d_stats

    mesh = load_mesh(p["mesh"], p["unit_scale"])
    rep = morph_report_3d(mesh).as_dict()
    if p["views"]:
        st = multiview_2d_stats(mesh, p["views"], p["seed"])
        st.to_csv(out / "views.csv")
        rep["multiview"] = st.summary()
    _dump(rep, out / "morph3d.json")
    return rep


def cmd_mesh_stats(p, out: Path) -> dict:
    from .geomcore import load_mesh, mesh_measures

    mesh = load_mesh(p["mesh"], p["unit_scale"])
    m = mesh_measures(mesh)
    lo, hi = mesh.bounds
    rep = {"n_vertices": mesh.n_vertices, "n_faces": mesh.n_faces, "watertight": mesh.is_watertight,
           "volume": m.volume, "surface_area": m.surface_area,
           "centroid": None if m.centroid is None else list(m.centroid),
           "bounds": [list(lo), list(hi)]}
    if p["voxel"]:
        from .geomcore import voxelize
        rep["voxel_volume"] = voxelize(mesh, p["voxel"]).volume
    _dump(rep, out / "mesh_stats.json")
    return rep


def _stockpile_config(p):
    from .stockgen import PRESETS, StockpileConfig

    preset = p["preset"]
    if preset not in PRESETS:
        raise AggkitError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[preset].to_dict()
    base.update(p["module_config"])
    if p["seed_given"]:
        base["seed"] = p["seed"]
    return StockpileConfig.from_dict(base)


def cmd_gen_stockpile(p, out: Path) -> dict:
    from .stockgen import generate_stockpile, synthetic_library

    cfg = _stockpile_config(p)
    if p["library"]:
        named = _load_library(p["library"], p["unit_scale"])
        names, lib = [n for n, _ in named], [m for _, m in named]
    else:
        lib = synthetic_library(p["n_models"], p["rock_size"] or 0.75 * cfg.cell_pitch, cfg.seed)
        names = [f"rock_{i:03d}" for i in range(len(lib))]
    cloud, settled, _ = generate_stockpile(lib, cfg, out, names, p["layers"])
    return {"n_points": len(cloud), "n_instances": len(settled.poses), "config": cfg.to_dict()}


def cmd_gen_pairs(p, out: Path) -> dict:
    from .shapepairs import PairConfig, generate_pairs
    from .shapes import synthetic_rock
    from .rng import stream

    base = PairConfig().to_dict()
    base.update(p["module_config"])
    if p["seed_given"]:
        base["seed"] = p["seed"]
    cfg = PairConfig.from_dict(base)
    if p["library"]:
        lib = _load_library(p["library"], p["unit_scale"])
    else:
        lib = [(f"rock_{i:03d}", synthetic_rock(int(stream(cfg.seed, "pair_library", i).integers(2**31)),
                                                size=p["rock_size"] or 0.1))
               for i in range(p["n_models"])]
    man = generate_pairs(lib, cfg, out)
    return {"n_models": man["n_models"], "n_pairs": man["n_pairs"], "config": cfg.to_dict()}


def cmd_eval_seg(p, out: Path) -> dict:
    from .cloudio import read_cloud_ply
    from .evalkit import InstanceSet, cluster_baseline, match_and_score

    cloud = read_cloud_ply(p["cloud"])
    truth = InstanceSet.from_labels(cloud.xyz, cloud.instance_id)
    if p["pred"]:
        pred_labels = read_cloud_ply(p["pred"]).instance_id
        if len(pred_labels) != len(cloud):
            raise AggkitError("prediction and truth clouds differ in length")
        pred = InstanceSet.from_labels(cloud.xyz, pred_labels)
    else:
        pred = cluster_baseline(cloud.xyz, p["radius"], p["min_size"])
    res = match_and_score(pred, truth, p["threshold"], p["iou_mode"])
    rep = {"completeness": res.completeness, "iou_ap": res.iou_ap, "n_pred": len(pred),
           "n_truth": len(truth), "n_matched": len(res.matches)}
    with open(out / "matches.csv", "w") as fh:
        fh.write("pred,truth,iou\n")
        for i, j, v in res.matches:
            fh.write(f"{i},{j},{v!r}\n")
    _dump(rep, out / "scores.json")
    return rep


def cmd_eval_cd(p, out: Path) -> dict:
    from .cloudio import read_points
    from .evalkit import chamfer_l1

    rep = {"chamfer_l1": chamfer_l1(read_points(p["a"]), read_points(p["b"]))}
    _dump(rep, out / "chamfer.json")
    return rep


def cmd_sp(p, out: Path) -> dict:
    from .cloudio import read_cloud_ply, read_points
    from .evalkit import sp_filter

    path = Path(p["cloud"])
    kw = dict(n_rays=p["n_rays"], angular_tol_deg=p["tol"], seed=p["seed"])
    if path.suffix.lower() == ".ply" and p["per_instance"]:
        c = read_cloud_ply(path)
        groups = {int(i): c.xyz[c.instance_id == i] for i in np.unique(c.instance_id) if i >= 0}
        groups = {k: v for k, v in groups.items() if len(v) >= 10}
    else:
        groups = {path.stem: read_points(path)}
    recs = sp_filter(groups, p["threshold"], **kw)
    rows = [{"instance": r.instance, "sp": r.sp, "pass": bool(r.passed)} for r in recs]
    rep = {"threshold": p["threshold"], "records": rows, "n_pass": sum(r["pass"] for r in rows)}
    _dump(rep, out / "sp.json")
    return {"threshold": p["threshold"], "n": len(rows), "n_pass": rep["n_pass"]}


def cmd_cluster(p, out: Path) -> dict:
    from .cloudio import LabeledPointCloud, read_cloud_ply, read_points, write_cloud_ply
    from .evalkit import cluster_baseline

    path = Path(p["cloud"])
    if path.suffix.lower() == ".ply":
        cloud = read_cloud_ply(path)
    else:
        xyz = read_points(path)
        cloud = LabeledPointCloud(xyz, np.full((len(xyz), 3), 128), np.zeros(len(xyz)), np.full(len(xyz), -1))
    inst = cluster_baseline(cloud.xyz, p["radius"], p["min_size"])
    labels = np.full(len(cloud), -1, dtype=np.int32)
    for k, g in enumerate(inst.groups):
        labels[g] = k
    write_cloud_ply(LabeledPointCloud(cloud.xyz, cloud.rgb, cloud.lidar_id, labels), out / "clusters.ply")
    rep = {"n_instances": len(inst), "sizes": [len(g) for g in inst.groups]}
    _dump(rep, out / "clusters.json")
    return rep


# ---------------------------------------------------------------------------
# parser


COMMANDS = {}


def _command(sub, name, func, help_, defaults, module_config=False):
    ps = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
    ps.add_argument("--seed", type=int, help="master seed (default 0)")
    ps.add_argument("--threads", type=int, help="worker threads for parallel kernels")
    ps.add_argument("--config", help="JSON file of parameters; flags take precedence")
    ps.add_argument("--out", help=f"output directory (default out/{name})")
    COMMANDS[name] = (func, defaults, module_config)
    ps.set_defaults(_command=name)
    return ps


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aggkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"aggkit {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", metavar="COMMAND")

    s = _command(sub, "segment", cmd_segment, "segment a rock photo taken against a colored backdrop",
                 dict(gamma=2.0, method="otsu", value=None, window=None, offset=0.02,
                      largest_only=False, keep_border=False))
    s.add_argument("image")
    s.add_argument("--gamma", type=float)
    s.add_argument("--method", choices=["otsu", "fixed", "adaptive"])
    s.add_argument("--value", type=float, help="threshold for --method fixed")
    s.add_argument("--window", type=int)
    s.add_argument("--offset", type=float)
    s.add_argument("--largest-only", action="store_true")
    s.add_argument("--keep-border", action="store_true")

    s = _command(sub, "triview", cmd_triview, "rock volume from top, front and side silhouettes",
                 dict(ball_px=None, ball_masks=None, ball_diameter=None, c1=0.954, resolution=1024,
                      specific_gravity=2.66, units="cm"))
    s.add_argument("views", nargs=3, metavar="VIEW", help="top, front, side (PGM mask or photo)")
    s.add_argument("--ball-px", type=float, nargs=3, metavar="PX")
    s.add_argument("--ball-masks", nargs=3, metavar="PGM")
    s.add_argument("--ball-diameter", type=float)
    s.add_argument("--c1", type=float)
    s.add_argument("--resolution", type=int)
    s.add_argument("--specific-gravity", type=float)
    s.add_argument("--units", help="length unit of --ball-diameter (cm, mm, m, in)")

    s = _command(sub, "morph2d", cmd_morph2d, "2-D size and shape of silhouette particles",
                 dict(scale=None, ball_mask=None, ball_diameter=None, include_border=False,
                      fer3d=2.0, metric="esd", bins=10))
    s.add_argument("masks", nargs="+")
    s.add_argument("--scale", type=float, help="length per pixel")
    s.add_argument("--ball-mask")
    s.add_argument("--ball-diameter", type=float)
    s.add_argument("--include-border", action="store_true")
    s.add_argument("--fer3d", type=float, help="assumed 3-D elongation for volume estimates")
    s.add_argument("--metric", choices=["esd", "fer"])
    s.add_argument("--bins", type=int)

    s = _command(sub, "morph3d", cmd_morph3d, "3-D form descriptors of a mesh",
                 dict(unit_scale=1.0, views=0))
    s.add_argument("mesh")
    s.add_argument("--unit-scale", type=float)
    s.add_argument("--views", type=int, help="also report 2-D statistics over this many views")

    s = _command(sub, "gen-stockpile", cmd_gen_stockpile, "synthesize and scan a labeled stockpile",
                 dict(library=None, preset="RR4", layers=None, n_models=20, rock_size=None, unit_scale=1.0),
                 module_config=True)
    s.add_argument("--library", help="directory of .obj/.ply rock meshes (default: synthetic rocks)")
    s.add_argument("--preset", help="RR3, RR4 or MIX")
    s.add_argument("--layers", type=int, help="fix the number of layers")
    s.add_argument("--n-models", type=int)
    s.add_argument("--rock-size", type=float)
    s.add_argument("--unit-scale", type=float)

    s = _command(sub, "gen-pairs", cmd_gen_pairs, "generate partial/complete shape pairs",
                 dict(library=None, n_models=1, rock_size=None, unit_scale=1.0), module_config=True)
    s.add_argument("--library")
    s.add_argument("--n-models", type=int)
    s.add_argument("--rock-size", type=float)
    s.add_argument("--unit-scale", type=float)

    s = _command(sub, "eval-seg", cmd_eval_seg, "score instance segmentation of a labeled cloud",
                 dict(pred=None, radius=0.01, min_size=10, threshold=0.5, iou_mode="aabb"))
    s.add_argument("cloud", help="labeled PLY with ground-truth instance_id")
    s.add_argument("--pred", help="PLY whose instance_id holds predictions (default: clustering baseline)")
    s.add_argument("--radius", type=float)
    s.add_argument("--min-size", type=int)
    s.add_argument("--threshold", type=float)
    s.add_argument("--iou-mode", choices=["aabb", "points"])

    s = _command(sub, "eval-cd", cmd_eval_cd, "L1 Chamfer distance between two clouds", {})
    s.add_argument("a")
    s.add_argument("b")

    s = _command(sub, "sp", cmd_sp, "shape percentage of partial clouds",
                 dict(threshold=75.0, n_rays=1000, tol=3.0, per_instance=False))
    s.add_argument("cloud")
    s.add_argument("--threshold", type=float)
    s.add_argument("--n-rays", type=int)
    s.add_argument("--tol", type=float, help="angular tolerance in degrees")
    s.add_argument("--per-instance", action="store_true")

    s = _command(sub, "cluster", cmd_cluster, "radius-graph clustering baseline",
                 dict(radius=0.01, min_size=10))
    s.add_argument("cloud")
    s.add_argument("--radius", type=float)
    s.add_argument("--min-size", type=int)

    s = _command(sub, "mesh-stats", cmd_mesh_stats, "volume, area and watertightness of a mesh",
                 dict(unit_scale=1.0, voxel=None))
    s.add_argument("mesh")
    s.add_argument("--unit-scale", type=float)
    s.add_argument("--voxel", type=float, help="also report the solid voxel volume at this cell size")
    return ap


def _resolve(ns: argparse.Namespace):
    name = ns._command
    func, defaults, module_config = COMMANDS[name]
    given = {k: v for k, v in vars(ns).items() if not k.startswith("_") and k not in ("cmd", "verbose")}
    file_cfg = {}
    if "config" in given:
        try:
            file_cfg = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {given['config']}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
    params = dict(defaults)
    params.update(seed=0, threads=None)
    mod_cfg = {}
    for k, v in file_cfg.items():
        key = k.replace("-", "_")
        if key in params:
            params[key] = v
        elif module_config:
            mod_cfg[k] = v
        else:
            raise UsageError(f"unknown config key {k!r} for {name}")
    explicit = {k: v for k, v in given.items() if k not in ("config", "out")}
    params.update(explicit)
    params["seed_given"] = "seed" in explicit or "seed" in file_cfg
    if module_config:
        params["module_config"] = mod_cfg
    out = Path(given.get("out", Path("out") / name))
    return name, func, params, out, given.get("config")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not getattr(ns, "_command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        name, func, params, out, cfg_path = _resolve(ns)
        if params.get("threads"):
            import numba
            numba.set_num_threads(max(1, min(int(params["threads"]), numba.config.NUMBA_NUM_THREADS)))
        out.mkdir(parents=True, exist_ok=True)
        result = func(params, out)
    except UsageError as exc:
        print(f"aggkit {ns._command}: {exc}", file=sys.stderr)
        return 2
    except (AggkitError, OSError) as exc:
        print(f"aggkit {ns._command}: error: {exc}", file=sys.stderr)
        return 1
    run = {"command": name, "version": __version__, "seed": params["seed"],
           "params": {k: v for k, v in params.items() if k not in ("seed_given", "threads")},
           "config_file": cfg_path}
    _dump(run, out / "run.json")
    print(json.dumps(result, indent=1, sort_keys=True, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
