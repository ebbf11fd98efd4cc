"""Volume of a single rock from three orthogonal silhouettes and a reference ball.

Axis convention: the top view images (rows, cols) = (x, z), the front view
(y, x) and the side view (y, z). Voxel ``[x, y, z]`` is solid when all three
silhouettes cover its projections.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AggkitError, DegenerateInputError
from .geomcore import VoxelGrid
from .imgseg import BinaryMask

C1_DEFAULT = 0.954
SPECIFIC_GRAVITY_DEFAULT = 2.66
WORKING_RESOLUTION = 1024

# fixed incidence of the six measured sides onto (x0, y0, z0)
INCIDENCE = np.array([
    [0, 0, 1],  # w_top
    [1, 0, 0],  # h_top
    [1, 0, 0],  # w_front
    [0, 1, 0],  # h_front
    [0, 0, 1],  # w_side
    [0, 1, 0],  # h_side
], dtype=float)


def _arr(m) -> np.ndarray:
    a = m.data if isinstance(m, BinaryMask) else np.asarray(m, dtype=bool)
    if a.ndim != 2:
        raise AggkitError("silhouette must be 2-D")
    return a


@dataclass(frozen=True, eq=False)
class ViewTriplet:
    """Top, front and side silhouettes with the ball's equivalent pixel diameter in each."""

    top: np.ndarray
    front: np.ndarray
    side: np.ndarray
    ball_top: float
    ball_front: float
    ball_side: float
    ball_diameter: float

    def __post_init__(self):
        for name in ("top", "front", "side"):
            a = _arr(getattr(self, name))
            if not a.any():
                raise DegenerateInputError(f"{name} silhouette is empty")
            object.__setattr__(self, name, a)
        if min(self.ball_top, self.ball_front, self.ball_side) <= 1:
            raise DegenerateInputError("ball must span more than one pixel in every view")
        if self.ball_diameter <= 0:
            raise DegenerateInputError("ball diameter must be positive")

    @property
    def balls(self) -> np.ndarray:
        return np.array([self.ball_top, self.ball_front, self.ball_side], dtype=float)

    @property
    def masks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.top, self.front, self.side


class CalibratedDims(NamedTuple):
    x0: float
    y0: float
    z0: float


def orthogonality_calibrate(w_top, h_top, w_front, h_front, w_side, h_side) -> CalibratedDims:
    """Least-squares body dimensions from the six measured silhouette sides.

    Each body axis is seen twice, so the solution is the mean of its two readings.
    """
    b = np.array([w_top, h_top, w_front, h_front, w_side, h_side], dtype=float)
    if np.any(b <= 0):
        raise DegenerateInputError("silhouette dimensions must be positive")
    x, *_ = np.linalg.lstsq(INCIDENCE, b, rcond=None)
    return CalibratedDims(*map(float, x))


def crop(mask) -> np.ndarray:
    a = _arr(mask)
    rows = np.flatnonzero(a.any(axis=1))
    cols = np.flatnonzero(a.any(axis=0))
    if rows.size == 0:
        raise DegenerateInputError("cannot crop an empty silhouette")
    return a[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def resize_nearest(mask, shape) -> np.ndarray:
    """Nearest-neighbor resize by pixel-center sampling; identity at equal size."""
    a = _arr(mask)
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise DegenerateInputError(f"resize target {shape} has a zero-size axis")
    ri = np.minimum(((np.arange(h) + 0.5) * a.shape[0] / h).astype(np.int64), a.shape[0] - 1)
    ci = np.minimum(((np.arange(w) + 0.5) * a.shape[1] / w).astype(np.int64), a.shape[1] - 1)
    return a[np.ix_(ri, ci)]


def intersect_silhouettes(top, front, side, cell_size: float = 1.0) -> VoxelGrid:
    """Intersection of the three silhouettes swept along their viewing axes.

    Shapes must agree: top (X, Z), front (Y, X), side (Y, Z).
    """
    t, f, s = _arr(top), _arr(front), _arr(side)
    X, Z = t.shape
    Y = f.shape[0]
    if f.shape != (Y, X) or s.shape != (Y, Z):
        raise AggkitError(f"inconsistent silhouette shapes top {t.shape}, front {f.shape}, side {s.shape}")
    occ = t[:, None, :] & f.T[:, :, None] & s[None, :, :]
    return VoxelGrid(np.zeros(3), float(cell_size), occ)


def intersection_count(top, front, side) -> int:
    """Voxel count of :func:`intersect_silhouettes` without building the grid."""
    t, f, s = _arr(top), _arr(front), _arr(side)
    if f.shape != (s.shape[0], t.shape[0]) or s.shape[1] != t.shape[1]:
        raise AggkitError(f"inconsistent silhouette shapes top {t.shape}, front {f.shape}, side {s.shape}")
    # per (x, y): number of z covered by both top[x] and side[y]; exact in float32 below 2**24
    xy = t.astype(np.float32) @ s.T.astype(np.float32)
    return int(np.rint(xy[f.T]).astype(np.int64).sum())


def reproject(grid: VoxelGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top, front and side projections of a voxel set, in the input conventions."""
    o = grid.occupancy
    return o.any(axis=1), o.any(axis=2).T, o.any(axis=0)


def resolution_correction(r_ball: float, t: float) -> float:
    """Factor undoing the one-pixel boundary loss on both ball and rock.

    ``r_ball`` is the ball radius in pixels and ``t`` the rock-to-ball size ratio.
    """
    if not r_ball > 1:
        raise DegenerateInputError("ball radius must exceed one pixel")
    if not t >= 1:
        raise DegenerateInputError("size ratio must be >= 1")
    return float((1.0 - (t - 1.0) / (t * r_ball - 1.0)) ** 3)


class Reconstruction(NamedTuple):
    raw_volume: float
    c1: float
    c2: float
    corrected_volume: float
    weight: float | None
    dims: CalibratedDims  # body dimensions in length units
    grid: VoxelGrid | None

    def report(self, units: str = "") -> dict:
        return {
            "raw_volume": self.raw_volume, "c1": self.c1, "c2": self.c2,
            "corrected_volume": self.corrected_volume, "weight": self.weight,
            "units": units,
        }


def reconstruct_volume(views: ViewTriplet, c1: float = C1_DEFAULT, resolution: int = WORKING_RESOLUTION,
                       specific_gravity: float | None = None, water_density: float = 1.0,
                       keep_grid: bool = False) -> Reconstruction:
    """Raw and corrected rock volume from a calibrated view triplet.

    Each silhouette is cropped and measured in ball diameters, the three
    views are reconciled by least squares, resampled so the longest body
    axis spans ``resolution`` voxels, and intersected. The voxel count is
    converted to volume through the known ball diameter. The corrected
    volume applies ``c1`` and the resolution factor. A weight is returned
    when ``specific_gravity`` is given. The voxel grid itself is only
    materialized with ``keep_grid``.
    """
    crops = [crop(m) for m in views.masks]
    balls = views.balls
    # (w, h) of each view in ball diameters
    wh = [(c.shape[1] / b, c.shape[0] / b) for c, b in zip(crops, balls)]
    dims = orthogonality_calibrate(*wh[0], *wh[1], *wh[2])
    k = resolution / max(dims)  # voxels per ball diameter
    X, Y, Z = (max(1, int(round(d * k))) for d in dims)
    top = resize_nearest(crops[0], (X, Z))
    front = resize_nearest(crops[1], (Y, X))
    side = resize_nearest(crops[2], (Y, Z))
    cell = views.ball_diameter / k
    grid = intersect_silhouettes(top, front, side, cell) if keep_grid else None
    raw = intersection_count(top, front, side) * cell ** 3
    r_ball = float(balls.mean()) / 2.0
    ratios = [2.0 * np.sqrt(m.sum() / np.pi) / b for m, b in zip(crops, balls)]
    t = max(1.0, float(np.mean(ratios)))
    c2 = resolution_correction(r_ball, t)
    corrected = raw * c1 * c2
    weight = corrected * specific_gravity * water_density if specific_gravity is not None else None
    body = CalibratedDims(*(d * views.ball_diameter for d in dims))
    return Reconstruction(raw, c1, c2, corrected, weight, body, grid)
