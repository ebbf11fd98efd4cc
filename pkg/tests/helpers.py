"""Independent oracles and synthetic fixtures shared by the test modules.

Every oracle here avoids the code path it checks: rays are tested against
every triangle with a plane/edge-sign formulation, Chamfer and SP use full
pairwise distance matrices, matching uses optimal assignment.
"""
from __future__ import annotations

import numba
import numpy as np
from scipy.optimize import linear_sum_assignment


@numba.njit(parallel=True, cache=True)
def _brute_rays(tris, origins, dirs, tmin):
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_k = np.full(n, -1, dtype=np.int64)
    for r in numba.prange(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        for k in range(tris.shape[0]):
            ax, ay, az = tris[k, 0, 0], tris[k, 0, 1], tris[k, 0, 2]
            bx, by, bz = tris[k, 1, 0], tris[k, 1, 1], tris[k, 1, 2]
            cx, cy, cz = tris[k, 2, 0], tris[k, 2, 1], tris[k, 2, 2]
            # plane normal
            ux, uy, uz = bx - ax, by - ay, bz - az
            vx, vy, vz = cx - ax, cy - ay, cz - az
            nx = uy * vz - uz * vy
            ny = uz * vx - ux * vz
            nz = ux * vy - uy * vx
            den = nx * dx + ny * dy + nz * dz
            if den == 0.0:
                continue
            t = (nx * (ax - ox) + ny * (ay - oy) + nz * (az - oz)) / den
            if t <= tmin or t >= best_t[r]:
                continue
            px, py, pz = ox + t * dx, oy + t * dy, oz + t * dz
            # point inside when the three edge normals agree with the face normal
            nn = nx * nx + ny * ny + nz * nz
            tol = -1e-12 * nn
            e = ((by - ay) * (pz - az) - (bz - az) * (py - ay)) * nx \
                + ((bz - az) * (px - ax) - (bx - ax) * (pz - az)) * ny \
                + ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) * nz
            if e < tol:
                continue
            e = ((cy - by) * (pz - bz) - (cz - bz) * (py - by)) * nx \
                + ((cz - bz) * (px - bx) - (cx - bx) * (pz - bz)) * ny \
                + ((cx - bx) * (py - by) - (cy - by) * (px - bx)) * nz
            if e < tol:
                continue
            e = ((ay - cy) * (pz - cz) - (az - cz) * (py - cy)) * nx \
                + ((az - cz) * (px - cx) - (ax - cx) * (pz - cz)) * ny \
                + ((ax - cx) * (py - cy) - (ay - cy) * (px - cx)) * nz
            if e < tol:
                continue
            best_t[r] = t
            best_k[r] = k
    return best_t, best_k


def brute_force_rays(triangles, tri_owner, origins, directions, tmin):
    """Nearest hit of every ray against every triangle: (t, owner) with owner -1 on a miss."""
    tris = np.ascontiguousarray(triangles, dtype=np.float64)
    o = np.ascontiguousarray(np.broadcast_to(origins, np.shape(directions)), dtype=np.float64)
    d = np.ascontiguousarray(directions, dtype=np.float64)
    t, k = _brute_rays(tris, o, d, float(tmin))
    owner = np.where(k >= 0, np.asarray(tri_owner)[np.maximum(k, 0)], -1)
    return t, owner


def chamfer_bruteforce(a, b) -> float:
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def optimal_match_scores(iou: np.ndarray, threshold: float, n_truth: int) -> tuple[float, float]:
    """Completeness and mean IoU of the assignment maximizing match count, then total IoU."""
    if iou.size == 0:
        return 0.0, 0.0
    ok = iou > threshold
    # lexicographic objective: a match is worth more than any IoU sum
    w = np.where(ok, 1000.0 + iou, 0.0)
    r, c = linear_sum_assignment(w, maximize=True)
    keep = ok[r, c]
    vals = iou[r[keep], c[keep]]
    comp = 100.0 * keep.sum() / n_truth
    return comp, (100.0 * float(vals.mean()) if len(vals) else 0.0)


def coverage_oracle(points, dirs, tol_deg: float, center=None) -> float:
    """Share of ``dirs`` within ``tol_deg`` of some point direction, by explicit angles."""
    c = points.mean(axis=0) if center is None else center
    u = points - c
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    hit = 0
    for k in range(0, len(dirs), 64):
        cosang = np.clip(dirs[k:k + 64] @ u.T, -1.0, 1.0)
        hit += int((np.degrees(np.arccos(cosang.max(axis=1))) <= tol_deg + 1e-9).sum())
    return 100.0 * hit / len(dirs)


def disc(radius_px: float, size: int | None = None) -> np.ndarray:
    """Pixel-center rasterized disc centered in a square canvas."""
    n = size or int(2 * radius_px) + 4
    c = n / 2.0
    yy, xx = np.mgrid[:n, :n]
    return (xx + 0.5 - c) ** 2 + (yy + 0.5 - c) ** 2 <= radius_px ** 2


def polygon_mask(vertices, shape) -> np.ndarray:
    from skimage.draw import polygon

    m = np.zeros(shape, dtype=bool)
    v = np.asarray(vertices)
    rr, cc = polygon(v[:, 1], v[:, 0], shape)
    m[rr, cc] = True
    return m


def shadow_scene(brightness: float = 1.0, two: bool = False, seed: int = 0):
    """Blue backdrop, tan ellipse(s), linear shadow gradient and sensor noise; returns (rgb, truth)."""
    rng = np.random.default_rng(seed)
    h, w = 300, 400
    yy, xx = np.mgrid[:h, :w]
    img = np.empty((h, w, 3))
    img[:] = [40, 90, 170]
    if two:
        gt = (((xx - 110) / 60) ** 2 + ((yy - 150) / 50) ** 2 <= 1) | (((xx - 290) / 60) ** 2 + ((yy - 150) / 50) ** 2 <= 1)
    else:
        gt = ((xx - 200) / 110) ** 2 + ((yy - 150) / 70) ** 2 <= 1
    img[gt] = [190, 160, 120]
    img *= (0.6 + 0.4 * xx / w)[..., None]
    img *= brightness
    img += rng.normal(0, 4, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8), gt


def iou2d(a, b) -> float:
    return float((a & b).sum() / (a | b).sum())
