"""3-D form descriptors and projected-silhouette statistics of particle meshes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.transform import Rotation

from .errors import DegenerateInputError, NotWatertightError
from .geomcore import TriMesh, mesh_measures
from .imgseg import BinaryMask
from .morph2d import circularity, feret
from .raycast.patterns import sphere_directions

_GRID_STEP_DEG = 6.0
_N_REFINE = 4


class BoundingBox(NamedTuple):
    a: float
    b: float
    c: float
    rotation: np.ndarray  # columns are the box axes for a, b, c
    center: np.ndarray
    degenerate: bool

    @property
    def volume(self) -> float:
        return self.a * self.b * self.c

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


def _extents(pts: np.ndarray, R: np.ndarray) -> np.ndarray:
    p = pts @ R
    return p.max(axis=0) - p.min(axis=0)


def _min_rect_rotation(p2: np.ndarray) -> float:
    """Angle of the minimum-area enclosing rectangle of 2-D points (rotating calipers)."""
    try:
        h = p2[ConvexHull(p2).vertices]
    except QhullError:
        return 0.0
    e = np.roll(h, -1, axis=0) - h
    ang = np.unique(np.mod(np.arctan2(e[:, 1], e[:, 0]), np.pi / 2))
    c, s = np.cos(ang), np.sin(ang)
    x = h[:, 0, None] * c + h[:, 1, None] * s
    y = -h[:, 0, None] * s + h[:, 1, None] * c
    area = (x.max(0) - x.min(0)) * (y.max(0) - y.min(0))
    return float(ang[int(np.argmin(area))])


def _face_candidates(pts: np.ndarray, hull: ConvexHull) -> list[np.ndarray]:
    out = []
    normals = np.unique(np.round(hull.equations[:, :3], 9), axis=0)
    for n in normals:
        n = n / np.linalg.norm(n)
        helper = np.eye(3)[int(np.argmin(np.abs(n)))]
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        th = _min_rect_rotation(np.stack([pts @ u, pts @ v], 1))
        c, s = np.cos(th), np.sin(th)
        out.append(np.stack([c * u + s * v, -s * u + c * v, n], axis=1))
    return out


def _euler_grid() -> np.ndarray:
    a = np.radians(np.arange(0.0, 90.0, _GRID_STEP_DEG))
    g = np.stack(np.meshgrid(a, a, a, indexing="ij"), -1).reshape(-1, 3)
    return Rotation.from_euler("xyz", g).as_matrix()


_GRID = None


def _flat_box(pts: np.ndarray, vt: np.ndarray) -> BoundingBox:
    """Coplanar or collinear input: minimum-area rectangle in the best-fit plane."""
    axes = np.zeros((3, 3))
    axes[: len(vt)] = vt
    u, v = axes[0], axes[1]
    if not np.any(v):
        v = np.cross(u, np.eye(3)[int(np.argmin(np.abs(u)))])
        v /= np.linalg.norm(v)
    n = np.cross(u, v)
    th = _min_rect_rotation(np.stack([pts @ u, pts @ v], 1)) if len(pts) >= 3 else 0.0
    c, s = np.cos(th), np.sin(th)
    R = np.stack([c * u + s * v, -s * u + c * v, n], axis=1)
    return _box_from_rotation(pts, R)


def min_bounding_box(obj) -> BoundingBox:
    """Approximately minimum-volume oriented box around points or a mesh.

    Candidates from an Euler-angle grid, principal axes and hull-face
    rotating calipers are ranked by volume and the best few refined with
    Nelder-Mead. Dimensions are returned in ascending order.
    """
    global _GRID
    pts = np.asarray(obj.vertices if isinstance(obj, TriMesh) else obj, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        raise DegenerateInputError("bounding box needs at least two points")
    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if len(sv) < 3 or sv[2] <= 1e-12 * max(sv[0], 1e-300):
        return _flat_box(pts, vt)
    cands = [np.eye(3)]
    try:
        hull = ConvexHull(pts)
        pts = pts[hull.vertices]
        cands += _face_candidates(pts, hull)
    except QhullError:
        return _flat_box(pts, vt)
    cands.append(vt.T if np.linalg.det(vt.T) > 0 else vt.T * np.array([1, 1, -1]))
    if _GRID is None:
        _GRID = _euler_grid()
    proj = np.einsum("ij,rjk->rik", pts, _GRID)
    vols = np.prod(proj.max(axis=1) - proj.min(axis=1), axis=1)
    cands += list(_GRID[np.argsort(vols)[:_N_REFINE]])
    cands.sort(key=lambda R: np.prod(_extents(pts, R)))
    best_R, best_v = cands[0], np.prod(_extents(pts, cands[0]))
    scale = float(np.max(np.ptp(pts, axis=0))) or 1.0
    for R0 in cands[:_N_REFINE]:
        def f(w, R0=R0):
            return np.prod(_extents(pts, Rotation.from_rotvec(w).as_matrix() @ R0)) / scale ** 3
        res = minimize(f, np.zeros(3), method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 400, "initial_simplex":
                                np.vstack([np.zeros(3), np.eye(3) * np.radians(3.0)])})
        R = Rotation.from_rotvec(res.x).as_matrix() @ R0
        v = np.prod(_extents(pts, R))
        if v < best_v:
            best_R, best_v = R, v
    return _box_from_rotation(pts, best_R)


def _box_from_rotation(pts: np.ndarray, best_R: np.ndarray) -> BoundingBox:
    p = pts @ best_R
    ext = p.max(axis=0) - p.min(axis=0)
    center = best_R @ ((p.max(axis=0) + p.min(axis=0)) / 2.0)
    order = np.argsort(ext, kind="stable")
    R = best_R[:, order]
    if np.linalg.det(R) < 0:
        R[:, 0] = -R[:, 0]
    a, b, c = (float(x) for x in ext[order])
    return BoundingBox(a, b, c, R, center, degenerate=a <= 1e-9 * max(c, 1e-300))


def sphericity(mesh: TriMesh) -> float:
    """Surface area of the equal-volume sphere over the actual surface area."""
    m = mesh_measures(mesh)
    if m.volume is None:
        raise NotWatertightError("sphericity needs a closed surface")
    return float((36.0 * np.pi * m.volume ** 2) ** (1.0 / 3.0) / m.surface_area)


@dataclass(frozen=True, eq=False)
class MorphReport3D:
    a: float
    b: float
    c: float
    fer3d: float
    sphericity: float
    volume: float
    surface_area: float
    box_rotation: np.ndarray

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["box_rotation"] = self.box_rotation.tolist()
        return d


def morph_report_3d(mesh: TriMesh) -> MorphReport3D:
    m = mesh_measures(mesh)
    if m.volume is None:
        raise NotWatertightError("3-D report needs a closed surface")
    box = min_bounding_box(mesh)
    return MorphReport3D(
        a=box.a, b=box.b, c=box.c,
        fer3d=box.c / box.a if box.a > 0 else float("inf"),
        sphericity=float((36.0 * np.pi * m.volume ** 2) ** (1.0 / 3.0) / m.surface_area),
        volume=m.volume, surface_area=m.surface_area, box_rotation=box.rotation,
    )


def view_basis(direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Image axes (u, v) for looking along ``direction``; u flips when the direction does."""
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if not n > 0:
        raise DegenerateInputError("view direction has zero length")
    d = d / n
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, d)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v, d


@numba.njit(cache=True)
def _raster(P, F, cu, cv, px, n_rows, n_cols, out):
    for f in range(F.shape[0]):
        i0, i1, i2 = F[f, 0], F[f, 1], F[f, 2]
        x0, y0 = P[i0, 0], P[i0, 1]
        x1, y1 = P[i1, 0], P[i1, 1]
        x2, y2 = P[i2, 0], P[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        sgn = 1.0 if area > 0 else -1.0
        xmin = min(x0, x1, x2)
        xmax = max(x0, x1, x2)
        ymin = min(y0, y1, y2)
        ymax = max(y0, y1, y2)
        c_lo = max(0, int(np.floor((xmin - cu) * px + n_cols / 2.0 - 0.5)))
        c_hi = min(n_cols - 1, int(np.ceil((xmax - cu) * px + n_cols / 2.0 - 0.5)))
        r_lo = max(0, int(np.floor((ymin - cv) * px + n_rows / 2.0 - 0.5)))
        r_hi = min(n_rows - 1, int(np.ceil((ymax - cv) * px + n_rows / 2.0 - 0.5)))
        for r in range(r_lo, r_hi + 1):
            y = cv + (r + 0.5 - n_rows / 2.0) / px
            for c in range(c_lo, c_hi + 1):
                if out[r, c]:
                    continue
                x = cu + (c + 0.5 - n_cols / 2.0) / px
                e0 = sgn * ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0))
                e1 = sgn * ((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1))
                e2 = sgn * ((x0 - x2) * (y - y2) - (y0 - y2) * (x - x2))
                if e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0:
                    out[r, c] = True


def project_silhouette(mesh: TriMesh, direction, px_per_unit: float, pad: int = 2) -> BinaryMask:
    """Orthographic silhouette of a mesh seen along ``direction``.

    Pixels are filled when their center lies in a projected triangle, edges
    included. The raster is centered on the projected bounding box, so
    opposite directions give mirror images of each other.
    """
    u, v, _ = view_basis(direction)
    P = np.ascontiguousarray(np.stack([mesh.vertices @ u, mesh.vertices @ v], axis=1))
    lo, hi = P.min(axis=0), P.max(axis=0)
    cu, cv = (lo + hi) / 2.0
    n_cols = 2 * (int(np.ceil((hi[0] - lo[0]) * px_per_unit / 2.0)) + pad)
    n_rows = 2 * (int(np.ceil((hi[1] - lo[1]) * px_per_unit / 2.0)) + pad)
    out = np.zeros((n_rows, n_cols), dtype=np.bool_)
    _raster(P, np.ascontiguousarray(mesh.faces, dtype=np.int64), cu, cv, float(px_per_unit), n_rows, n_cols, out)
    return BinaryMask(out, 1.0 / px_per_unit)


def _summary(x: np.ndarray) -> dict:
    mean = float(x.mean())
    std = float(x.std())
    return {"mean": mean, "min": float(x.min()), "max": float(x.max()),
            "std": std, "cov": std / mean if mean else 0.0}


@dataclass(frozen=True, eq=False)
class MultiViewStats:
    directions: np.ndarray
    fer2d: np.ndarray
    circularity: np.ndarray

    def summary(self) -> dict:
        return {"n_views": len(self.fer2d), "fer2d": _summary(self.fer2d),
                "circularity": _summary(self.circularity)}

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("view,dx,dy,dz,fer2d,circularity\n")
            for i, (d, f, c) in enumerate(zip(self.directions, self.fer2d, self.circularity)):
                fh.write(f"{i},{d[0]:.6f},{d[1]:.6f},{d[2]:.6f},{f:.6f},{c:.6f}\n")


def multiview_2d_stats(mesh: TriMesh, n_views: int = 30, seed: int = 0, resolution: int = 256) -> MultiViewStats:
    """2-D FER and circularity of the mesh seen from near-uniform directions.

    Each silhouette is rendered so the mesh's largest extent spans about
    ``resolution`` pixels.
    """
    if n_views < 2:
        raise DegenerateInputError("need at least two views")
    dirs = sphere_directions(n_views, seed)
    px = resolution / float(np.max(mesh.extent))
    fer, circ = [], []
    for d in dirs:
        m = project_silhouette(mesh, d, px)
        fer.append(feret(m).fer2d)
        circ.append(circularity(m))
    return MultiViewStats(dirs, np.array(fer), np.array(circ))
