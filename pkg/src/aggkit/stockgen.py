"""Synthetic stockpile scenes: instance layout, settling, multi-LiDAR scanning, dataset export.

Scenes are Y-up and right-handed with the ground at y = 0. The ground itself
is never part of the ray index, so every recorded point belongs to a rock.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .cloudio import LabeledPointCloud, write_cloud_csv, write_cloud_ply
from .errors import AggkitError
from .geomcore import TriMesh, voxelize
from .raycast import Instance, SceneIndex, cast_rays, grid_endpoints, rays_to_points, ring_positions
from .rng import stream

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "aggkit.stockpile/1"


@dataclass(frozen=True)
class StockpileConfig:
    cx: float = 0.0
    cz: float = 0.0
    Lx: float = 2.0
    Lz: float = 2.0
    n_g: int = 7
    L_min: int = 6
    L_max: int = 8
    N: int = 36
    H: float = 1.0
    r: float = 3.0
    N1: int = 6
    N2: int = 8
    H1: float = 1.5
    H2: float = 1.0
    r1: float = 0.7
    r2: float = 1.5
    d: float = 0.02
    enlargement: float = 1.2
    grid_fraction: float = 0.8
    jitter_probes: int = 8
    tilt_deg: float = 15.0
    seed: int = 0

    def __post_init__(self):
        for k in ("Lx", "Lz", "H", "r", "H1", "H2", "r1", "r2", "d", "enlargement", "grid_fraction"):
            if not getattr(self, k) > 0:
                raise AggkitError(f"config field {k} must be positive")
        for k in ("n_g", "L_min", "N", "N1", "N2", "jitter_probes"):
            if int(getattr(self, k)) < 1:
                raise AggkitError(f"config field {k} must be >= 1")
        if self.L_min > self.L_max:
            raise AggkitError("L_min must not exceed L_max")

    @classmethod
    def from_dict(cls, data: dict) -> "StockpileConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise AggkitError(f"unknown stockpile config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "StockpileConfig":
        return dataclasses.replace(self, **kw)

    @property
    def n_lidars(self) -> int:
        return self.N1 + self.N2 + 1

    @property
    def cell_pitch(self) -> float:
        return self.grid_fraction * min(self.Lx, self.Lz) / self.n_g


PRESETS = {
    "RR3": StockpileConfig(n_g=9, H=0.5, r=2.5, H1=0.8, H2=0.6, r1=0.5, r2=1.3),
    "RR4": StockpileConfig(n_g=7, H=1.0, r=3.0, H1=1.5, H2=1.0, r1=0.7, r2=1.5),
    "MIX": StockpileConfig(n_g=7, H=0.8, r=3.0, H1=1.2, H2=0.7, r1=0.7, r2=1.5),
}


class Pose(NamedTuple):
    """World placement ``R @ v + t`` of library mesh ``source``."""

    instance_id: int
    source: int
    rotation: np.ndarray
    translation: np.ndarray


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def bounding_diameter(mesh: TriMesh) -> float:
    from scipy.spatial import ConvexHull, QhullError
    from scipy.spatial.distance import pdist

    v = mesh.vertices
    try:
        v = v[ConvexHull(v).vertices]
    except QhullError:
        pass
    return float(pdist(v).max()) if len(v) > 1 else 0.0


class _Footprint(NamedTuple):
    ix: np.ndarray      # occupied columns, offsets in heightmap cells
    iz: np.ndarray
    bottom: np.ndarray  # lowest / highest solid face per column, local frame
    top: np.ndarray
    ox: float           # local coordinate of column offset 0
    oz: float


def _footprint(mesh: TriMesh, h: float) -> _Footprint:
    g = voxelize(mesh, h)
    occ = g.occupancy
    cols = occ.any(axis=1)
    ix, iz = np.nonzero(cols)
    ny = occ.shape[1]
    sub = occ[ix, :, iz]
    first = np.argmax(sub, axis=1)
    last = ny - 1 - np.argmax(sub[:, ::-1], axis=1)
    oy = g.origin[1]
    return _Footprint(ix, iz, oy + first * h, oy + (last + 1) * h, g.origin[0], g.origin[2])


class Settled(NamedTuple):
    poses: list
    heightmap: np.ndarray
    cell: float


def assemble_scene(library: Sequence[TriMesh], config: StockpileConfig, layers: int | None = None) -> Settled:
    """Lay instances out on a grid and drop them one by one onto a heightmap.

    ``layers`` (default: drawn from ``[L_min, L_max]``) grid passes of
    ``n_g**2`` instances are sampled with replacement from ``library``. Each
    instance gets a random yaw and a small roll and pitch, is voxelized, and
    rests at the lowest height where no solid column overlaps what is
    already there. Up to ``jitter_probes`` lateral positions near its grid
    cell are tried and the lowest kept.
    """
    if not library:
        raise AggkitError("mesh library is empty")
    rng = stream(config.seed, "stockgen", "assemble")
    pitch = config.cell_pitch
    diam = [bounding_diameter(m) for m in library]
    too_big = [i for i, d in enumerate(diam) if d > pitch]
    if too_big:
        raise AggkitError(f"library meshes {too_big} exceed the grid cell size {pitch:.4g}")
    sizes = [float(np.max(m.extent)) for m in library]
    h = float(np.median(sizes)) / 50.0
    if layers is None:
        layers = int(rng.integers(config.L_min, config.L_max + 1))
    half_x = config.Lx * config.enlargement / 2.0 + pitch
    half_z = config.Lz * config.enlargement / 2.0 + pitch
    hx0, hz0 = config.cx - half_x, config.cz - half_z
    nx, nz = int(np.ceil(2 * half_x / h)) + 1, int(np.ceil(2 * half_z / h)) + 1
    H = np.zeros((nx, nz))
    centers = (np.arange(config.n_g) + 0.5) * pitch - config.n_g * pitch / 2.0
    tilt = np.radians(config.tilt_deg)
    poses = []
    means = [m.vertices.mean(axis=0) for m in library]
    for layer in range(layers):
        for gi in range(config.n_g):
            for gj in range(config.n_g):
                src = int(rng.integers(len(library)))
                R = _rot_y(rng.uniform(0, 2 * np.pi)) @ _rot_x(rng.uniform(-tilt, tilt)) @ _rot_z(rng.uniform(-tilt, tilt))
                local = library[src].transformed(R, -R @ means[src])
                fp = _footprint(local, h)
                px = config.cx + centers[gi]
                pz = config.cz + centers[gj]
                jit = rng.uniform(-0.5, 0.5, size=(config.jitter_probes - 1, 2)) * pitch
                probes = np.vstack([[0.0, 0.0], jit])
                best = None
                for dx, dz in probes:
                    # snap so the instance's columns land exactly on heightmap cells
                    cx0 = int(round((px + dx + fp.ox - hx0) / h))
                    cz0 = int(round((pz + dz + fp.oz - hz0) / h))
                    cx_ = np.clip(cx0 + fp.ix, 0, nx - 1)
                    cz_ = np.clip(cz0 + fp.iz, 0, nz - 1)
                    rest = float(np.max(H[cx_, cz_] - fp.bottom))
                    if best is None or rest < best[0]:
                        best = (rest, cx0, cz0, cx_, cz_)
                rest, cx0, cz0, cx_, cz_ = best
                np.maximum.at(H, (cx_, cz_), rest + fp.top)
                t = np.array([hx0 + cx0 * h - fp.ox, rest, hz0 + cz0 * h - fp.oz])
                poses.append(Pose(len(poses), src, R, t - R @ means[src]))
    return Settled(poses, H, h)


def scene_instances(library: Sequence[TriMesh], poses: Sequence[Pose]) -> list[Instance]:
    return [Instance(library[p.source], p.instance_id, p.rotation, p.translation) for p in poses]


def lidar_positions(config: StockpileConfig) -> np.ndarray:
    """Emitters: inner ring, outer ring, then one above the ROI center at the inner height."""
    c = (config.cx, config.cz)
    ring1 = ring_positions(c, config.Lx, config.Lz, config.N1, config.H1, config.r1)
    ring2 = ring_positions(c, config.Lx, config.Lz, config.N2, config.H2, config.r2)
    central = np.array([[config.cx, config.H1, config.cz]])
    return np.vstack([ring1, ring2, central])


def camera_poses(config: StockpileConfig) -> list[dict]:
    pos = ring_positions((config.cx, config.cz), config.Lx, config.Lz, config.N, config.H, config.r)
    return [{"position": p.tolist(), "look_at": [config.cx, 0.0, config.cz]} for p in pos]


def scan_stockpile(index: SceneIndex, config: StockpileConfig, emitters=None) -> LabeledPointCloud:
    """Cast every emitter at the enlarged ground grid; nearest hits keep their labels."""
    ends = grid_endpoints((config.cx, config.cz), config.Lx, config.Lz, config.enlargement, config.d)
    emitters = lidar_positions(config) if emitters is None else np.asarray(emitters, dtype=float).reshape(-1, 3)
    parts = []
    for lid, e in enumerate(emitters):
        o, d = rays_to_points(e, ends)
        parts.append(LabeledPointCloud.from_hits(cast_rays(index, e[None, :], d, lidar_id=lid)))
    cloud = LabeledPointCloud.concatenate(parts)
    if len(cloud) == 0:
        log.warning("scan produced an empty cloud")
    return cloud


def _f(x) -> list:
    return [float(v) for v in np.asarray(x).ravel()]


def write_scene(cloud: LabeledPointCloud, poses: Sequence[Pose], config: StockpileConfig, out_dir,
                sources: Sequence[str] | None = None, extra: dict | None = None) -> dict:
    """Write ``cloud.ply``, ``cloud.csv`` and ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cloud_ply(cloud, out / "cloud.ply")
    write_cloud_csv(cloud, out / "cloud.csv")
    ids, counts = np.unique(cloud.instance_id, return_counts=True)
    hits = dict(zip(ids.tolist(), counts.tolist()))
    instances = [{
        "instance_id": p.instance_id,
        "source": sources[p.source] if sources else p.source,
        "rotation": _f(p.rotation),
        "translation": _f(p.translation),
        "n_points": int(hits.get(p.instance_id, 0)),
    } for p in poses]
    visible = [i for i in instances if i["n_points"] > 0]
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "seed": config.seed,
        "config": config.to_dict(),
        "n_points": len(cloud),
        "n_instances": len(instances),
        "n_visible_instances": len(visible),
        "mean_points_per_visible_instance": (len(cloud) / len(visible)) if visible else 0.0,
        "lidars": [{"lidar_id": i, "position": _f(p)} for i, p in enumerate(lidar_positions(config))],
        "cameras": camera_poses(config),
        "instances": instances,
        "files": {"cloud_ply": "cloud.ply", "cloud_csv": "cloud.csv"},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def synthetic_library(n: int, size: float, seed: int) -> list[TriMesh]:
    """``n`` convex rock meshes about ``size`` across."""
    from .shapes import synthetic_rock

    return [synthetic_rock(int(stream(seed, "library", k).integers(2**31)), size=size) for k in range(n)]


def generate_stockpile(library: Sequence[TriMesh], config: StockpileConfig, out_dir=None,
                       sources: Sequence[str] | None = None, layers: int | None = None):
    """Assemble, settle, index and scan; optionally write the dataset.

    Returns ``(cloud, settled, index)``.
    """
    settled = assemble_scene(library, config, layers)
    index = SceneIndex.build(scene_instances(library, settled.poses))
    cloud = scan_stockpile(index, config)
    if out_dir is not None:
        m = write_scene(cloud, settled.poses, config, out_dir, sources)
        log.info("stockpile: %d points, %d/%d instances visible, %.0f points per visible instance",
                 m["n_points"], m["n_visible_instances"], m["n_instances"], m["mean_points_per_visible_instance"])
    return cloud, settled, index
