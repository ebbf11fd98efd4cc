"""Evaluation metrics: percentage errors, instance matching, Chamfer distance,
shape percentage, a clustering baseline and volume-to-weight conversion."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import AggkitError, DegenerateInputError
from .raycast.patterns import sphere_directions

# mass of one cubic unit of water, by length unit
WATER_DENSITY = {"cm": (1.0, "g"), "mm": (1e-3, "g"), "m": (1000.0, "kg"), "in": (16.387064, "g")}


def error_stats(estimates, truths, kind: str = "mape") -> float:
    """Mean absolute (``mape``) or signed (``mpe``) percentage error."""
    e = np.asarray(estimates, dtype=float).ravel()
    m = np.asarray(truths, dtype=float).ravel()
    if e.size == 0 or e.shape != m.shape:
        raise AggkitError("estimates and truths must be non-empty and equally long")
    if np.any(m == 0):
        raise DegenerateInputError("percentage error undefined for a zero truth value")
    rel = (e - m) / m
    if kind == "mape":
        return float(np.mean(np.abs(rel)) * 100.0)
    if kind == "mpe":
        return float(np.mean(rel) * 100.0)
    raise AggkitError(f"unknown error kind {kind!r}")


class Box(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.prod(np.clip(self.hi - self.lo, 0.0, None)))


def aabb(points) -> Box:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise DegenerateInputError("bounding box of an empty point set")
    return Box(p.min(axis=0), p.max(axis=0))


def iou3d_aabb(a: Box, b: Box) -> float:
    """Intersection over union of two axis-aligned boxes."""
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    union = a.volume + b.volume - inter
    if union <= 0:
        same = np.array_equal(a.lo, b.lo) and np.array_equal(a.hi, b.hi)
        return 1.0 if same else 0.0
    return inter / union


@dataclass(frozen=True, eq=False)
class InstanceSet:
    """Disjoint groups of point indices into one cloud."""

    points: np.ndarray
    groups: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        groups = tuple(np.asarray(g, dtype=np.int64).ravel() for g in self.groups)
        seen = np.zeros(len(pts), dtype=bool)
        for g in groups:
            if g.size == 0:
                raise AggkitError("instance groups must be non-empty")
            if g.min() < 0 or g.max() >= len(pts):
                raise AggkitError("instance index out of range")
            if seen[g].any() or len(np.unique(g)) != len(g):
                raise AggkitError("instance groups overlap")
            seen[g] = True
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.groups)

    @classmethod
    def from_labels(cls, points, labels, ignore: int = -1) -> "InstanceSet":
        """Groups from a per-point label array; ``ignore`` marks unlabeled points."""
        labels = np.asarray(labels).ravel()
        ids = [v for v in np.unique(labels) if v != ignore]
        return cls(points, tuple(np.flatnonzero(labels == v) for v in ids))

    def boxes(self) -> list[Box]:
        return [aabb(self.points[g]) for g in self.groups]


def iou_matrix(pred: InstanceSet, truth: InstanceSet, mode: str = "aabb") -> np.ndarray:
    """Pairwise IoU, rows predicted and columns truth.

    ``aabb`` compares bounding boxes; ``points`` compares index sets, which
    requires both sets to index the same cloud.
    """
    if mode == "aabb":
        pb, tb = pred.boxes(), truth.boxes()
        return np.array([[iou3d_aabb(p, t) for t in tb] for p in pb]).reshape(len(pb), len(tb))
    if mode == "points":
        n = max(len(pred.points), len(truth.points))
        lp = np.full(n, -1)
        lt = np.full(n, -1)
        for i, g in enumerate(pred.groups):
            lp[g] = i
        for j, g in enumerate(truth.groups):
            lt[g] = j
        both = (lp >= 0) & (lt >= 0)
        inter = np.zeros((len(pred), len(truth)))
        np.add.at(inter, (lp[both], lt[both]), 1.0)
        sp = np.array([len(g) for g in pred.groups], dtype=float)
        st = np.array([len(g) for g in truth.groups], dtype=float)
        union = sp[:, None] + st[None, :] - inter
        return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    raise AggkitError(f"unknown IoU mode {mode!r}")


class MatchResult(NamedTuple):
    completeness: float
    iou_ap: float
    matches: list  # (pred_index, truth_index, iou) for true positives


def greedy_match(iou: np.ndarray, threshold: float = 0.5) -> list[tuple[int, int, float]]:
    """Pairs taken in descending IoU, each side used at most once; IoU must exceed ``threshold``."""
    iou = np.asarray(iou, dtype=float)
    if iou.size == 0:
        return []
    flat = np.argsort(-iou, axis=None, kind="stable")
    used_p, used_t, out = set(), set(), []
    for k in flat:
        i, j = np.unravel_index(k, iou.shape)
        v = float(iou[i, j])
        if v <= threshold:
            break
        if i in used_p or j in used_t:
            continue
        used_p.add(int(i))
        used_t.add(int(j))
        out.append((int(i), int(j), v))
    return out


def match_and_score(pred: InstanceSet, truth: InstanceSet, iou_threshold: float = 0.5,
                    mode: str = "aabb") -> MatchResult:
    """Completeness (share of truths matched) and mean matched IoU, both in percent."""
    if len(truth) == 0:
        raise AggkitError("truth set is empty")
    m = greedy_match(iou_matrix(pred, truth, mode), iou_threshold)
    comp = 100.0 * len(m) / len(truth)
    ap = 100.0 * float(np.mean([v for _, _, v in m])) if m else 0.0
    return MatchResult(comp, ap, m)


def chamfer_l1(s1, s2) -> float:
    """Mean nearest-neighbor Euclidean distance from each set to the other, summed."""
    a = np.asarray(s1, dtype=float).reshape(-1, 3)
    b = np.asarray(s2, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise DegenerateInputError("Chamfer distance needs two non-empty sets")
    dab = cKDTree(b).query(a, k=1)[0]
    dba = cKDTree(a).query(b, k=1)[0]
    return float(dab.mean() + dba.mean())


def shape_percentage(points, n_rays: int = 1000, angular_tol_deg: float = 3.0, seed: int | None = 0,
                     center=None) -> float:
    """Share of directions from the centroid that meet the cloud, in percent.

    A direction meets the cloud when some point lies within
    ``angular_tol_deg`` of it as seen from the centroid (or ``center``).
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 10:
        raise DegenerateInputError("shape percentage needs at least 10 points")
    c = p.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    v = p - c
    r = np.linalg.norm(v, axis=1)
    ok = r > 1e-12 * max(float(r.max()), 1e-300)
    if not ok.any():
        raise DegenerateInputError("all points coincide with the center")
    u = v[ok] / r[ok, None]
    dirs = sphere_directions(n_rays, seed)
    chord = 2.0 * np.sin(np.radians(angular_tol_deg) / 2.0)
    d, _ = cKDTree(u).query(dirs, k=1)
    # small slack so a point exactly at the tolerance angle counts as a hit
    hits = np.count_nonzero(d <= chord * (1 + 1e-12))
    return 100.0 * hits / n_rays


class SPRecord(NamedTuple):
    instance: object
    sp: float
    passed: bool


def sp_filter(clouds: Mapping | Iterable, threshold: float = 75.0, **kwargs) -> list[SPRecord]:
    """Shape percentage and pass flag (``sp >= threshold``) per instance cloud."""
    items = clouds.items() if isinstance(clouds, Mapping) else enumerate(clouds)
    out = []
    for key, pts in items:
        sp = shape_percentage(pts, **kwargs)
        out.append(SPRecord(key, sp, sp >= threshold))
    return out


def cluster_baseline(points, radius: float, min_size: int = 1) -> InstanceSet:
    """Connected components of the fixed-radius neighbor graph.

    Components smaller than ``min_size`` are dropped; the rest are ordered
    by their smallest point index.
    """
    if not radius > 0:
        raise AggkitError("clustering radius must be positive")
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(p)
    if n == 0:
        return InstanceSet(p, ())
    pairs = cKDTree(p).query_pairs(radius, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    groups = []
    for k in np.unique(lab):
        idx = np.flatnonzero(lab == k)
        if len(idx) >= min_size:
            groups.append(idx)
    groups.sort(key=lambda g: int(g[0]))
    return InstanceSet(p, tuple(groups))


def weight_from_volume(volume: float, specific_gravity: float = 2.65, units: str = "cm") -> float:
    """Mass of a particle of given volume; ``units`` picks the water density (see WATER_DENSITY)."""
    if volume < 0 or specific_gravity <= 0:
        raise AggkitError("volume must be >= 0 and specific gravity > 0")
    if units not in WATER_DENSITY:
        raise AggkitError(f"unknown length unit {units!r}")
    return float(volume) * specific_gravity * WATER_DENSITY[units][0]
