"""Size and shape descriptors of binary particle silhouettes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError
from skimage import measure

from .errors import AggkitError, DegenerateInputError
from .imgseg import BinaryMask

_STRUCT = np.ones((3, 3), dtype=bool)
_N_DIRECTIONS = 180
# Douglas-Peucker tolerance (px) for the smoothed contour; removes the
# staircase of slanted pixel edges without cutting true corners
_CONTOUR_TOL = 1.25


def _mask_array(mask) -> np.ndarray:
    m = mask.data if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise AggkitError("mask must be 2-D")
    return m


def _scale_of(mask, scale):
    if scale is not None:
        return float(scale)
    if isinstance(mask, BinaryMask) and mask.scale is not None:
        return float(mask.scale)
    return 1.0


def _require_nonempty(m):
    if not m.any():
        raise DegenerateInputError("mask has no foreground pixels")


def _n_components(m) -> int:
    return int(ndimage.label(m, structure=_STRUCT)[1])


def equivalent_diameter_px(mask) -> float:
    m = _mask_array(mask)
    return 2.0 * np.sqrt(m.sum() / np.pi)


def calibrate_scale(ball_mask, ball_diameter: float) -> float:
    """Length per pixel from the silhouette of a reference ball of known diameter."""
    m = _mask_array(ball_mask)
    _require_nonempty(m)
    if _n_components(m) != 1:
        raise AggkitError("calibration mask must hold exactly one component")
    return float(ball_diameter) / equivalent_diameter_px(m)


def esd(mask, scale: float | None = None) -> float:
    """Diameter of the circle with the same area as the silhouette."""
    m = _mask_array(mask)
    _require_nonempty(m)
    s = _scale_of(mask, scale)
    return float(2.0 * np.sqrt(m.sum() * s * s / np.pi))


def _corner_hull(m: np.ndarray) -> np.ndarray:
    """Hull vertices of the union of pixel squares, as (x, y) = (col, row)."""
    # only boundary pixels can contribute hull corners
    edge = m & ~ndimage.binary_erosion(m, _STRUCT, border_value=0)
    r, c = np.nonzero(edge)
    pts = np.concatenate([
        np.stack([c, r], 1), np.stack([c + 1, r], 1),
        np.stack([c, r + 1], 1), np.stack([c + 1, r + 1], 1)]).astype(float)
    pts = np.unique(pts, axis=0)
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:
        return pts


def caliper_width(points: np.ndarray, theta: float) -> float:
    proj = points @ np.array([np.cos(theta), np.sin(theta)])
    return float(proj.max() - proj.min())


class Feret(NamedTuple):
    l_max: float
    l_min: float
    fer2d: float
    angle: float  # direction of l_max, radians in image (x=col, y=row) axes


def feret(mask, scale: float | None = None) -> Feret:
    """Longest caliper and the caliper perpendicular to it.

    Calipers are measured on the hull of the pixel squares. The longest one
    is found over 180 directions and refined by bounded golden-section
    search; the short dimension is then taken at right angles to it.
    """
    m = _mask_array(mask)
    _require_nonempty(m)
    s = _scale_of(mask, scale)
    pts = _corner_hull(m)
    thetas = np.arange(_N_DIRECTIONS) * (np.pi / _N_DIRECTIONS)
    dirs = np.stack([np.cos(thetas), np.sin(thetas)])
    proj = pts @ dirs
    widths = proj.max(axis=0) - proj.min(axis=0)
    k = int(np.argmax(widths))
    step = np.pi / _N_DIRECTIONS
    res = minimize_scalar(lambda t: -caliper_width(pts, t),
                          bounds=(thetas[k] - step, thetas[k] + step), method="bounded",
                          options={"xatol": 1e-7})
    theta = float(res.x) if -res.fun >= widths[k] else float(thetas[k])
    l_max = caliper_width(pts, theta)
    l_min = caliper_width(pts, theta + np.pi / 2)
    if l_min <= 0:
        return Feret(l_max * s, l_max * s, 1.0, theta % np.pi)
    return Feret(l_max * s, l_min * s, max(1.0, l_max / l_min), theta % np.pi)


def contour_polygon(mask) -> np.ndarray:
    """Outer sub-pixel contour of a single component, simplified; (row, col) vertices."""
    m = _mask_array(mask)
    _require_nonempty(m)
    # work in bounding-box coordinates so the simplification does not depend on position
    r, c = np.nonzero(m)
    r0, c0 = r.min(), c.min()
    p = np.pad(m[r0:r.max() + 1, c0:c.max() + 1], 1).astype(float)
    contours = measure.find_contours(p, 0.5)
    poly = measure.approximate_polygon(max(contours, key=len), _CONTOUR_TOL)
    return poly + np.array([r0 - 1.0, c0 - 1.0])


def _polygon_length(c: np.ndarray) -> float:
    closed = c if np.array_equal(c[0], c[-1]) else np.vstack([c, c[:1]])
    return float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())


def perimeter(mask, scale: float | None = None) -> float:
    return _polygon_length(contour_polygon(mask)) * _scale_of(mask, scale)


def circularity(mask, clamp: bool = True) -> float:
    """``4*pi*A / P**2`` with the pixel area and the simplified-contour perimeter.

    Raw values on well-resolved circles come out slightly under 1 and may
    exceed it on tiny blobs; ``clamp`` caps the result at 1.
    """
    m = _mask_array(mask)
    _require_nonempty(m)
    if _n_components(m) != 1:
        raise AggkitError("circularity needs a single connected component")
    c = contour_polygon(m)
    P = _polygon_length(c)
    if P == 0:
        return 1.0
    val = 4.0 * np.pi * float(m.sum()) / P ** 2
    return min(1.0, val) if clamp else val


@dataclass(frozen=True)
class MorphReport2D:
    esd: float
    l_max: float
    l_min: float
    fer2d: float
    circularity: float
    area: float
    perimeter: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def morph_report(mask, scale: float | None = None) -> MorphReport2D:
    m = _mask_array(mask)
    _require_nonempty(m)
    s = _scale_of(mask, scale)
    f = feret(m, s)
    return MorphReport2D(
        esd=esd(m, s), l_max=f.l_max, l_min=f.l_min, fer2d=f.fer2d,
        circularity=circularity(m), area=float(m.sum()) * s * s,
        perimeter=perimeter(m, s),
    )


def split_particles(mask, exclude_border: bool = True) -> list[np.ndarray]:
    """One full-size boolean mask per connected particle.

    Particles cut by the image frame are dropped unless ``exclude_border`` is off.
    """
    m = _mask_array(mask)
    lab, n = ndimage.label(m, structure=_STRUCT)
    edge_ids = set()
    if exclude_border:
        edge_ids = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
    return [lab == k for k in range(1, n + 1) if k not in edge_ids]


def estimate_volume_2d(l_max: float, l_min: float, assumed_fer3d: float) -> float:
    """Ellipsoid volume from the two silhouette dimensions and an assumed 3-D elongation.

    The long semi-axis is ``l_max / 2``. If the silhouette is already at least
    as elongated as ``assumed_fer3d``, the two short semi-axes both equal
    ``l_min / 2``; otherwise the middle one is ``l_min / 2`` and the shortest is
    ``c / assumed_fer3d``.
    """
    if not (l_max >= l_min > 0):
        raise DegenerateInputError("need l_max >= l_min > 0")
    if assumed_fer3d < 1:
        raise DegenerateInputError("assumed 3-D elongation ratio must be >= 1")
    c = l_max / 2.0
    b = l_min / 2.0
    a = b if l_max / l_min >= assumed_fer3d else c / assumed_fer3d
    return 4.0 / 3.0 * np.pi * a * b * c


@dataclass(frozen=True, eq=False)
class GradationReport:
    metric: str
    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    cumulative: np.ndarray  # percent of values <= each edge

    def cumulative_at(self, x: float) -> float:
        return float(100.0 * np.mean(self.values <= x))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("bin_lo,bin_hi,count,cumulative_percent\n")
            for i, n in enumerate(self.counts):
                fh.write(f"{self.edges[i]:.6g},{self.edges[i + 1]:.6g},{int(n)},{self.cumulative[i + 1]:.4f}\n")


def gradation_report(masks: Sequence, scale: float | None = None, metric: str = "esd",
                     bins: int | Sequence[float] = 10) -> GradationReport:
    """Histogram and cumulative percent curve of ESD or 2-D FER over particles.

    The cumulative curve uses the inclusive convention: its value at ``x`` is
    the share of particles with metric at or below ``x``.
    """
    if not masks:
        raise AggkitError("gradation needs at least one particle")
    if metric == "esd":
        vals = np.array([esd(m, scale) for m in masks])
    elif metric == "fer":
        vals = np.array([feret(m, scale).fer2d for m in masks])
    else:
        raise AggkitError(f"unknown gradation metric {metric!r}")
    return gradation_from_values(vals, metric, bins)


def gradation_from_values(values, metric: str = "esd", bins=10) -> GradationReport:
    vals = np.asarray(values, dtype=float)
    if np.ndim(bins) == 0 and vals.size and np.ptp(vals) <= 1e-9 * max(1.0, abs(vals[0])):
        # numpy cannot split a near-zero range into bins
        bins = np.linspace(vals[0] - 0.5, vals[0] + 0.5, int(bins) + 1)
    counts, edges = np.histogram(vals, bins=bins)
    cum = np.array([100.0 * np.mean(vals <= e) for e in edges])
    cum[-1] = 100.0
    return GradationReport(metric, vals, edges, counts, cum)
