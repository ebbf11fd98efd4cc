"""Bounding-volume hierarchy over instanced triangle scenes and nearest-hit casting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np
from numba import prange

from ..errors import AggkitError
from ..geomcore import TriMesh

_LEAF_SIZE = 4
_N_BINS = 12
_STACK = 128
# barycentric slack so rays through shared edges cannot slip between triangles
_BARY_EPS = 1e-10


class Instance(NamedTuple):
    mesh: TriMesh
    instance_id: int
    rotation: np.ndarray | None = None
    translation: np.ndarray | None = None


class Hits(NamedTuple):
    """Nearest hits of the rays that struck geometry; misses are dropped."""

    ray_index: np.ndarray   # (k,) index into the input ray arrays
    t: np.ndarray           # (k,) ray parameter
    point: np.ndarray       # (k, 3)
    rgb: np.ndarray         # (k, 3) uint8, vertex-interpolated
    instance_id: np.ndarray  # (k,) int32
    lidar_id: np.ndarray    # (k,) uint16
    triangle: np.ndarray    # (k,) triangle index in SceneIndex.triangles order

    def __len__(self):
        return len(self.t)


@numba.njit(cache=True)
def _surface(lo, hi):
    d0 = hi[0] - lo[0]
    d1 = hi[1] - lo[1]
    d2 = hi[2] - lo[2]
    if d0 < 0.0:
        return 0.0
    return d0 * d1 + d1 * d2 + d2 * d0


@numba.njit(cache=True)
def _build(tmin, tmax, cent):
    n = cent.shape[0]
    order = np.arange(n)
    cap = max(2 * n, 1)
    nmin = np.empty((cap, 3))
    nmax = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int32)
    start = np.zeros(cap, dtype=np.int32)
    count = np.zeros(cap, dtype=np.int32)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    sp = 1
    n_nodes = 1
    bin_min = np.empty((_N_BINS, 3))
    bin_max = np.empty((_N_BINS, 3))
    bin_cnt = np.zeros(_N_BINS, dtype=np.int64)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        bmin = np.full(3, np.inf)
        bmax = np.full(3, -np.inf)
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for k in range(lo, hi):
            t = order[k]
            for a in range(3):
                bmin[a] = min(bmin[a], tmin[t, a])
                bmax[a] = max(bmax[a], tmax[t, a])
                cmin[a] = min(cmin[a], cent[t, a])
                cmax[a] = max(cmax[a], cent[t, a])
        nmin[node] = bmin
        nmax[node] = bmax
        cnt = hi - lo
        axis = 0
        ext = cmax[0] - cmin[0]
        for a in range(1, 3):
            if cmax[a] - cmin[a] > ext:
                ext = cmax[a] - cmin[a]
                axis = a
        if cnt <= _LEAF_SIZE or ext <= 0.0:
            start[node] = lo
            count[node] = cnt
            continue
        # binned SAH along the widest centroid axis
        for b in range(_N_BINS):
            bin_cnt[b] = 0
            for a in range(3):
                bin_min[b, a] = np.inf
                bin_max[b, a] = -np.inf
        scale = _N_BINS / ext
        for k in range(lo, hi):
            t = order[k]
            b = int((cent[t, axis] - cmin[axis]) * scale)
            if b >= _N_BINS:
                b = _N_BINS - 1
            bin_cnt[b] += 1
            for a in range(3):
                bin_min[b, a] = min(bin_min[b, a], tmin[t, a])
                bin_max[b, a] = max(bin_max[b, a], tmax[t, a])
        best_cost = np.inf
        best_split = -1
        for s in range(1, _N_BINS):
            lmin = np.full(3, np.inf)
            lmax = np.full(3, -np.inf)
            rmin = np.full(3, np.inf)
            rmax = np.full(3, -np.inf)
            nl = 0
            nr = 0
            for b in range(_N_BINS):
                if bin_cnt[b] == 0:
                    continue
                if b < s:
                    nl += bin_cnt[b]
                    for a in range(3):
                        lmin[a] = min(lmin[a], bin_min[b, a])
                        lmax[a] = max(lmax[a], bin_max[b, a])
                else:
                    nr += bin_cnt[b]
                    for a in range(3):
                        rmin[a] = min(rmin[a], bin_min[b, a])
                        rmax[a] = max(rmax[a], bin_max[b, a])
            if nl == 0 or nr == 0:
                continue
            cost = nl * _surface(lmin, lmax) + nr * _surface(rmin, rmax)
            if cost < best_cost:
                best_cost = cost
                best_split = s
        mid = lo
        if best_split > 0:
            i = lo
            j = hi - 1
            while i <= j:
                b = int((cent[order[i], axis] - cmin[axis]) * scale)
                if b >= _N_BINS:
                    b = _N_BINS - 1
                if b < best_split:
                    i += 1
                else:
                    tmp = order[i]
                    order[i] = order[j]
                    order[j] = tmp
                    j -= 1
            mid = i
        if mid == lo or mid == hi:
            sub = order[lo:hi].copy()
            keys = np.empty(cnt)
            for k in range(cnt):
                keys[k] = cent[sub[k], axis]
            srt = np.argsort(keys, kind="mergesort")
            for k in range(cnt):
                order[lo + k] = sub[srt[k]]
            mid = lo + cnt // 2
        left[node] = n_nodes
        st_node[sp] = n_nodes
        st_lo[sp] = lo
        st_hi[sp] = mid
        sp += 1
        st_node[sp] = n_nodes + 1
        st_lo[sp] = mid
        st_hi[sp] = hi
        sp += 1
        n_nodes += 2
    return order, nmin[:n_nodes].copy(), nmax[:n_nodes].copy(), left[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy()


@numba.njit(cache=True, inline="always")
def _slab(ox, oy, oz, ix, iy, iz, lo, hi, tmax):
    t0 = (lo[0] - ox) * ix
    t1 = (hi[0] - ox) * ix
    tn = min(t0, t1)
    tf = max(t0, t1)
    t0 = (lo[1] - oy) * iy
    t1 = (hi[1] - oy) * iy
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    t0 = (lo[2] - oz) * iz
    t1 = (hi[2] - oz) * iz
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    if tf >= max(tn, 0.0) and tn <= tmax:
        return tn
    return np.inf


@numba.njit(cache=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, V, t):
    """Moller-Trumbore; returns (t, u, v) with t = inf on miss."""
    ax, ay, az = V[t, 0, 0], V[t, 0, 1], V[t, 0, 2]
    e1x, e1y, e1z = V[t, 1, 0] - ax, V[t, 1, 1] - ay, V[t, 1, 2] - az
    e2x, e2y, e2z = V[t, 2, 0] - ax, V[t, 2, 1] - ay, V[t, 2, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return np.inf, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return np.inf, 0.0, 0.0
    tt = (e2x * qx + e2y * qy + e2z * qz) * inv
    return tt, u, v


@numba.njit(cache=True, parallel=True, error_model="numpy")
def _cast(orig, dirs, eps, V, nmin, nmax, left, start, count, out_t, out_tri, out_u, out_v, counter):
    nr = orig.shape[0]
    for r in prange(nr):
        ox, oy, oz = orig[r, 0], orig[r, 1], orig[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix, iy, iz = 1.0 / dx, 1.0 / dy, 1.0 / dz
        best = np.inf
        best_tri = -1
        bu = 0.0
        bv = 0.0
        tests = 0
        stack = np.empty(_STACK, dtype=np.int32)
        sp = 0
        if _slab(ox, oy, oz, ix, iy, iz, nmin[0], nmax[0], best) < np.inf:
            stack[0] = 0
            sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            c = left[node]
            if c < 0:
                s0 = start[node]
                for k in range(s0, s0 + count[node]):
                    tests += 1
                    tt, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, V, k)
                    if tt > eps and (tt < best or (tt == best and k < best_tri)):
                        best = tt
                        best_tri = k
                        bu = u
                        bv = v
                continue
            ta = _slab(ox, oy, oz, ix, iy, iz, nmin[c], nmax[c], best)
            tb = _slab(ox, oy, oz, ix, iy, iz, nmin[c + 1], nmax[c + 1], best)
            # push the far child first so the near one is popped next
            if ta <= tb:
                if tb < np.inf:
                    stack[sp] = c + 1
                    sp += 1
                if ta < np.inf:
                    stack[sp] = c
                    sp += 1
            else:
                if ta < np.inf:
                    stack[sp] = c
                    sp += 1
                if tb < np.inf:
                    stack[sp] = c + 1
                    sp += 1
        out_t[r] = best
        out_tri[r] = best_tri
        out_u[r] = bu
        out_v[r] = bv
        counter[r] = tests


@dataclass(frozen=True, eq=False)
class SceneIndex:
    """Immutable triangle soup in world space plus its BVH.

    ``triangles`` are stored in BVH leaf order; ``source_face`` and
    ``tri_instance`` map each one back to its instance and face.
    """

    triangles: np.ndarray     # (n, 3, 3) float64
    tri_colors: np.ndarray    # (n, 3, 3) uint8
    tri_instance: np.ndarray  # (n,) int32
    source_face: np.ndarray   # (n,) int64, face index within its instance mesh
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    instance_ids: tuple
    extent: float

    @classmethod
    def build(cls, instances: Sequence[Instance | TriMesh]) -> "SceneIndex":
        tris, cols, inst, src = [], [], [], []
        ids = []
        for k, item in enumerate(instances):
            if isinstance(item, TriMesh):
                item = Instance(item, k)
            mesh = item.mesh.transformed(item.rotation, item.translation)
            tris.append(mesh.triangles())
            if mesh.vertex_colors is not None:
                cols.append(mesh.vertex_colors[mesh.faces])
            else:
                cols.append(np.full((mesh.n_faces, 3, 3), 128, dtype=np.uint8))
            inst.append(np.full(mesh.n_faces, int(item.instance_id), dtype=np.int32))
            src.append(np.arange(mesh.n_faces))
            ids.append(int(item.instance_id))
        if len(set(ids)) != len(ids):
            raise AggkitError("instance ids must be unique")
        if not tris:
            raise AggkitError("cannot index an empty scene")
        T = np.ascontiguousarray(np.concatenate(tris), dtype=np.float64)
        if len(T) == 0:
            raise AggkitError("cannot index an empty scene")
        tmin = T.min(axis=1)
        tmax = T.max(axis=1)
        cent = T.mean(axis=1)
        order, nmin, nmax, left, start, count = _build(tmin, tmax, cent)
        ext = float(np.max(tmax.max(axis=0) - tmin.min(axis=0)))
        return cls(
            triangles=np.ascontiguousarray(T[order]),
            tri_colors=np.ascontiguousarray(np.concatenate(cols)[order]),
            tri_instance=np.concatenate(inst)[order],
            source_face=np.concatenate(src)[order],
            node_min=nmin, node_max=nmax, node_left=left,
            node_start=start, node_count=count,
            instance_ids=tuple(ids), extent=max(ext, 1e-12),
        )

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def ray_epsilon(self) -> float:
        return 1e-7 * self.extent


def _raw_cast(index: SceneIndex, origins, directions):
    o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    if len(o) != len(d):
        if len(o) == 1:
            o = np.ascontiguousarray(np.broadcast_to(o, d.shape))
        else:
            raise AggkitError("origins and directions must have matching lengths")
    n = len(d)
    t = np.empty(n)
    tri = np.empty(n, dtype=np.int64)
    u = np.empty(n)
    v = np.empty(n)
    tests = np.empty(n, dtype=np.int64)
    if n:
        _cast(o, d, index.ray_epsilon, index.triangles, index.node_min, index.node_max,
              index.node_left, index.node_start, index.node_count, t, tri, u, v, tests)
    return o, d, t, tri, u, v, tests


def cast_rays(index: SceneIndex, origins, directions, lidar_id: int = 0) -> Hits:
    """Nearest hit per ray. Directions must be unit length.

    ``origins`` may be a single point shared by all rays.
    """
    o, d, t, tri, u, v, _ = _raw_cast(index, origins, directions)
    hit = np.flatnonzero(tri >= 0)
    th = t[hit]
    pts = o[hit] + th[:, None] * d[hit]
    k = tri[hit]
    w = np.stack([1.0 - u[hit] - v[hit], u[hit], v[hit]], axis=1)
    rgb = np.einsum("ij,ijk->ik", w, index.tri_colors[k].astype(np.float64))
    return Hits(
        ray_index=hit,
        t=th,
        point=pts,
        rgb=np.clip(np.rint(rgb), 0, 255).astype(np.uint8),
        instance_id=index.tri_instance[k].astype(np.int32),
        lidar_id=np.full(len(hit), lidar_id, dtype=np.uint16),
        triangle=k,
    )


def traversal_count(index: SceneIndex, origins, directions) -> int:
    """Total ray-triangle candidate tests performed for a batch (benchmark aid)."""
    return int(_raw_cast(index, origins, directions)[-1].sum())
