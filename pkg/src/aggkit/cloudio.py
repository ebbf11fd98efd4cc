"""Labeled point clouds and their PLY / CSV serialization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AggkitError
from .geomcore import read_ply_elements

UNLABELED = -1

_RECORD = np.dtype([
    ("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ("lidar_id", "<u2"), ("instance_id", "<i4"),
])
_PLY_TYPE = {"<f8": "double", "|u1": "uchar", "<u2": "ushort", "<i4": "int", "<f4": "float"}


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """Points with color, emitter id and ground-truth instance id (-1 when unlabeled)."""

    xyz: np.ndarray
    rgb: np.ndarray
    lidar_id: np.ndarray
    instance_id: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = len(xyz)
        rgb = np.asarray(self.rgb, dtype=np.uint8).reshape(n, 3)
        lid = np.asarray(self.lidar_id, dtype=np.uint16).reshape(n)
        iid = np.asarray(self.instance_id, dtype=np.int32).reshape(n)
        if not np.all(np.isfinite(xyz)):
            raise AggkitError("point coordinates must be finite")
        for name, val in (("xyz", xyz), ("rgb", rgb), ("lidar_id", lid), ("instance_id", iid)):
            object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.xyz)

    @classmethod
    def empty(cls) -> "LabeledPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    @classmethod
    def concatenate(cls, parts) -> "LabeledPointCloud":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.xyz for p in parts]), np.concatenate([p.rgb for p in parts]),
                   np.concatenate([p.lidar_id for p in parts]), np.concatenate([p.instance_id for p in parts]))

    @classmethod
    def from_hits(cls, hits) -> "LabeledPointCloud":
        return cls(hits.point, hits.rgb, hits.lidar_id, hits.instance_id)

    def records(self) -> np.ndarray:
        r = np.empty(len(self), dtype=_RECORD)
        r["x"], r["y"], r["z"] = self.xyz.T
        r["red"], r["green"], r["blue"] = self.rgb.T
        r["lidar_id"] = self.lidar_id
        r["instance_id"] = self.instance_id
        return r

    def select(self, mask) -> "LabeledPointCloud":
        return LabeledPointCloud(self.xyz[mask], self.rgb[mask], self.lidar_id[mask], self.instance_id[mask])


def _header(dtype: np.dtype, n: int) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    for name in dtype.names:
        lines.append(f"property {_PLY_TYPE[dtype[name].str]} {name}")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_cloud_ply(cloud: LabeledPointCloud, path) -> None:
    rec = cloud.records()
    with open(path, "wb") as fh:
        fh.write(_header(rec.dtype, len(rec)))
        fh.write(rec.tobytes())


def read_cloud_ply(path) -> LabeledPointCloud:
    v = read_ply_elements(path).get("vertex")
    if v is None:
        raise AggkitError(f"{path}: no vertex element")
    n = len(v["x"])
    rgb = np.stack([v[k] for k in ("red", "green", "blue")], 1) if "red" in v else np.full((n, 3), 128)
    return LabeledPointCloud(
        np.stack([v["x"], v["y"], v["z"]], 1), rgb,
        v.get("lidar_id", np.zeros(n)), v.get("instance_id", np.full(n, UNLABELED)),
    )


def write_cloud_csv(cloud: LabeledPointCloud, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("x,y,z,r,g,b,lidar_id,instance_id\n")
        for p, c, l, i in zip(cloud.xyz.tolist(), cloud.rgb.tolist(), cloud.lidar_id.tolist(),
                              cloud.instance_id.tolist()):
            fh.write(f"{p[0]!r},{p[1]!r},{p[2]!r},{c[0]},{c[1]},{c[2]},{l},{i}\n")


def read_cloud_csv(path) -> LabeledPointCloud:
    a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return LabeledPointCloud(a[:, :3], a[:, 3:6], a[:, 6], a[:, 7])


def write_points_ply(points, path) -> None:
    """Plain xyz cloud (double precision)."""
    p = np.ascontiguousarray(points, dtype="<f8").reshape(-1, 3)
    dt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8")])
    with open(path, "wb") as fh:
        fh.write(_header(dt, len(p)))
        fh.write(p.tobytes())


def read_points(path) -> np.ndarray:
    """xyz of any PLY, CSV (header row, first three columns) or whitespace XYZ file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        v = read_ply_elements(path).get("vertex")
        if v is None:
            raise AggkitError(f"{path}: no vertex element")
        return np.stack([v["x"], v["y"], v["z"]], 1).astype(np.float64)
    try:
        if suffix == ".csv":
            a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        else:
            a = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise AggkitError(f"{path}: cannot parse points: {exc}") from exc
    if a.shape[1] < 3:
        raise AggkitError(f"{path}: need at least three columns")
    return a[:, :3].astype(np.float64)
