"""Partial / complete point-cloud pairs for shape-completion datasets.

A model is surrounded by ``sensor_total`` virtual scanners on a sphere. Each
active scanner shoots a disk of rays at the model; the union over a subset
of scanners is a partial view and the union over all of them the complete
shape. Clouds are regularized to fixed sizes by farthest point sampling.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .cloudio import write_points_ply
from .errors import AggkitError
from .geomcore import TriMesh, mesh_measures, recenter
from .raycast import SceneIndex, cast_rays, disk_rays, sphere_directions
from .rng import stream

MANIFEST_SCHEMA = "aggkit.shapepairs/1"


@dataclass(frozen=True)
class PairConfig:
    sensor_total: int = 16
    subset_sizes: tuple = (3, 4, 5, 6, 7, 8, 9)
    orientations: int = 16
    sphere_radius_factor: float = 5.0
    arc_spacing: float = 0.002
    ring_spacing: float = 0.002
    disk_radius_factor: float = 1.5
    partial_n: int = 2048
    complete_n: int = 16384
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subset_sizes", tuple(int(k) for k in self.subset_sizes))
        if not self.subset_sizes or min(self.subset_sizes) < 1 or max(self.subset_sizes) > self.sensor_total:
            raise AggkitError("subset sizes must lie in [1, sensor_total]")
        if not 0 < self.partial_n < self.complete_n:
            raise AggkitError("need 0 < partial_n < complete_n")
        if self.orientations < 1:
            raise AggkitError("need at least one orientation")
        for k in ("sphere_radius_factor", "arc_spacing", "ring_spacing", "disk_radius_factor"):
            if not getattr(self, k) > 0:
                raise AggkitError(f"config field {k} must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "PairConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise AggkitError(f"unknown pair config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["subset_sizes"] = list(self.subset_sizes)
        return d

    def replace(self, **kw) -> "PairConfig":
        return dataclasses.replace(self, **kw)


@numba.njit(cache=True)
def _fps(P, n, start):
    m = P.shape[0]
    out = np.empty(n, dtype=np.int64)
    d = np.full(m, np.inf)
    cur = start
    for k in range(n):
        out[k] = cur
        px, py, pz = P[cur, 0], P[cur, 1], P[cur, 2]
        best = -1.0
        nxt = 0
        for i in range(m):
            dx = P[i, 0] - px
            dy = P[i, 1] - py
            dz = P[i, 2] - pz
            v = dx * dx + dy * dy + dz * dz
            if v < d[i]:
                d[i] = v
            # strict comparison keeps the lowest index among ties
            if d[i] > best:
                best = d[i]
                nxt = i
        cur = nxt
    return out


def fps_indices(points, n: int, seed: int | None = 0, start: int | None = None) -> np.ndarray:
    """Farthest point sampling order; the first index is ``start`` or drawn from ``seed``."""
    P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if n > len(P):
        raise AggkitError(f"cannot sample {n} points from {len(P)}")
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    if start is None:
        start = int(stream(seed or 0, "fps").integers(len(P)))
    return _fps(P, int(n), int(start))


def fps_downsample(points, n: int, seed: int | None = 0, start: int | None = None) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return P[fps_indices(P, n, seed, start)]


def equivalent_radius(mesh: TriMesh) -> float:
    v = mesh_measures(mesh).volume
    if v is None or v <= 0:
        raise AggkitError("equivalent radius needs a closed mesh with positive volume")
    return float((3.0 * v / (4.0 * np.pi)) ** (1.0 / 3.0))


def sensor_positions(mesh: TriMesh, config: PairConfig) -> np.ndarray:
    """Sensors on a sphere of ``sphere_radius_factor`` equivalent radii, in canonical order."""
    return sphere_directions(config.sensor_total, config.seed) * config.sphere_radius_factor * equivalent_radius(mesh)


def _scan_sensors(mesh: TriMesh, config: PairConfig) -> list[np.ndarray]:
    """Hit points per sensor for a recentered mesh."""
    index = SceneIndex.build([mesh])
    disk_r = config.disk_radius_factor * float(np.max(np.linalg.norm(mesh.vertices, axis=1)))
    out = []
    for s in sensor_positions(mesh, config):
        o, d = disk_rays(s, np.zeros(3), disk_r, config.arc_spacing, config.ring_spacing)
        out.append(cast_rays(index, s[None, :], d).point)
    return out


def scan_partial(mesh: TriMesh, k: int, config: PairConfig) -> np.ndarray:
    """Union of the hits of the first ``k`` sensors on the recentered mesh."""
    if not 1 <= k <= config.sensor_total:
        raise AggkitError("sensor subset size out of range")
    pts = np.concatenate(_scan_sensors(recenter(mesh), config)[:k])
    if len(pts) == 0:
        raise AggkitError("no sensor ray hit the mesh; check disk size and spacing")
    return pts


def rotation_to(direction) -> np.ndarray:
    """Rotation taking +Y onto ``direction`` with no roll (Rodrigues)."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    y = np.array([0.0, 1.0, 0.0])
    c = float(y @ d)
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(y, d)
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + K + K @ K / (1.0 + c)


def orientation_rotations(config: PairConfig) -> np.ndarray:
    dirs = sphere_directions(config.orientations, stream(config.seed, "orientations").integers(2**31))
    return np.array([rotation_to(d) for d in dirs])


class PairEntry(NamedTuple):
    model: str
    orientation: int
    visibility: int
    partial: str
    complete: str


def plan_pairs(model_names: Sequence[str], config: PairConfig) -> list[PairEntry]:
    """Dataset layout: one entry per model, orientation and visibility level."""
    out = []
    for name in model_names:
        for j in range(config.orientations):
            base = f"{name}/orient_{j:02d}"
            for k in config.subset_sizes:
                out.append(PairEntry(name, j, k, f"{base}/partial_k{k}.ply", f"{base}/complete.ply"))
    return out


def orientation_clouds(mesh: TriMesh, rotation: np.ndarray, config: PairConfig, seed_key=()) -> tuple[dict, np.ndarray]:
    """FPS-regularized partial clouds per visibility level and the complete cloud."""
    m = recenter(mesh).transformed(rotation)
    hits = _scan_sensors(m, config)
    union = np.concatenate(hits)
    if len(union) < config.complete_n:
        raise AggkitError(f"complete scan has {len(union)} points, fewer than {config.complete_n}; "
                          "reduce spacing or complete_n")
    rng = stream(config.seed, "pairs", *seed_key)
    complete = fps_downsample(union, config.complete_n, start=int(rng.integers(len(union))))
    partials = {}
    for k in config.subset_sizes:
        part = np.concatenate(hits[:k])
        if len(part) < config.partial_n:
            raise AggkitError(f"partial scan with {k} sensors has {len(part)} points, fewer than {config.partial_n}")
        partials[k] = fps_downsample(part, config.partial_n, start=int(rng.integers(len(part))))
    return partials, complete


def generate_pairs(library: Sequence[tuple[str, TriMesh]], config: PairConfig, out_dir) -> dict:
    """Write every pair of the plan to ``out_dir`` with a manifest; returns the manifest."""
    out = Path(out_dir)
    names = [n for n, _ in library]
    if len(set(names)) != len(names):
        raise AggkitError("model names must be unique")
    rots = orientation_rotations(config)
    entries = []
    for mi, (name, mesh) in enumerate(library):
        for j, R in enumerate(rots):
            d = out / name / f"orient_{j:02d}"
            d.mkdir(parents=True, exist_ok=True)
            partials, complete = orientation_clouds(mesh, R, config, (name, j))
            write_points_ply(complete, d / "complete.ply")
            for k, p in partials.items():
                write_points_ply(p, d / f"partial_k{k}.ply")
                entries.append({"model": name, "orientation": j, "visibility": k,
                                "partial": f"{name}/orient_{j:02d}/partial_k{k}.ply",
                                "complete": f"{name}/orient_{j:02d}/complete.ply",
                                "partial_points": len(p), "complete_points": len(complete)})
    manifest = {"schema": MANIFEST_SCHEMA, "seed": config.seed, "config": config.to_dict(),
                "n_models": len(library), "n_pairs": len(entries), "pairs": entries}
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
