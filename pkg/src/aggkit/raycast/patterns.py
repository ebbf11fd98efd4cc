"""Ray-pattern generators: camera/LiDAR rings, ground grids, sensor disks, sphere lattices.

Coordinates are right-handed with +Y up; the ground plane is y = 0.
"""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError
from ..rng import stream

_FLOOR_SLACK = 1e-9


def _floor(x: float) -> int:
    # 2.4 / 0.02 evaluates to 119.99999999999999; lattice counts must not lose the last row
    return int(np.floor(x + _FLOOR_SLACK))


def ring_radius(Lx: float, Lz: float, r: float) -> float:
    return r * np.hypot(Lx, Lz) / 2.0


def ring_positions(roi_center, Lx: float, Lz: float, N: int, H: float, r: float,
                   radius: float | None = None) -> np.ndarray:
    """``N`` points evenly spaced on a horizontal circle at height ``H``.

    The circle radius is ``r`` times the half-diagonal of the ROI unless
    ``radius`` is given explicitly. ``roi_center`` is ``(cx, cz)``.
    """
    if N < 1:
        raise DegenerateInputError("ring needs at least one position")
    cx, cz = roi_center
    R = ring_radius(Lx, Lz, r) if radius is None else float(radius)
    ang = np.arange(N) * (2.0 * np.pi / N)
    return np.stack([cx + R * np.cos(ang), np.full(N, float(H)), cz + R * np.sin(ang)], axis=1)


def grid_endpoints(roi_center, Lx: float, Lz: float, enlargement: float = 1.2, d: float = 0.02) -> np.ndarray:
    """Inclusive ground lattice (y = 0) at spacing ``d`` over the enlarged ROI rectangle."""
    if d <= 0:
        raise DegenerateInputError("grid spacing must be positive")
    cx, cz = roi_center
    wx, wz = Lx * enlargement, Lz * enlargement
    nx, nz = _floor(wx / d) + 1, _floor(wz / d) + 1
    xs = cx - wx / 2.0 + d * np.arange(nx)
    zs = cz - wz / 2.0 + d * np.arange(nz)
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    return np.stack([X.ravel(), np.zeros(X.size), Z.ravel()], axis=1)


def rays_to_points(origin, targets) -> tuple[np.ndarray, np.ndarray]:
    """Unit rays from ``origin`` toward each target; returns (origins, directions)."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    o = np.asarray(origin, dtype=float)
    d = targets - o
    n = np.linalg.norm(d, axis=1, keepdims=True)
    if np.any(n == 0):
        raise DegenerateInputError("a target coincides with the ray origin")
    return np.broadcast_to(o, targets.shape).copy(), d / n


def plane_basis(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal ``(u, v, n)`` with ``n`` along ``normal``, built by Gram-Schmidt."""
    n = np.asarray(normal, dtype=float)
    ln = np.linalg.norm(n)
    if not np.isfinite(ln) or ln == 0:
        raise DegenerateInputError("plane normal has zero length")
    n = n / ln
    # seed with the world axis least aligned to n
    seed = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = seed - (seed @ n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    v -= (v @ n) * n + (v @ u) * u
    v /= np.linalg.norm(v)
    return u, v, n


def disk_endpoints(center, normal, disk_radius: float, arc_spacing: float, ring_spacing: float) -> np.ndarray:
    """Center point plus concentric rings of points in the plane through ``center``.

    Ring radii run ``ring_spacing, 2*ring_spacing, ...`` up to ``disk_radius``.
    A ring of radius ``r`` holds ``floor(2*pi*r / arc_spacing)`` points at a
    uniform angular step, so arc spacing is close to ``arc_spacing`` on every ring.
    """
    if arc_spacing <= 0 or ring_spacing <= 0:
        raise DegenerateInputError("disk spacings must be positive")
    u, v, _ = plane_basis(normal)
    c = np.asarray(center, dtype=float)
    pts = [c[None, :]]
    for k in range(1, _floor(disk_radius / ring_spacing) + 1):
        r = k * ring_spacing
        m = _floor(2.0 * np.pi * r / arc_spacing)
        if m < 1:
            continue
        th = np.arange(m) * (2.0 * np.pi / m)
        pts.append(c + r * (np.cos(th)[:, None] * u + np.sin(th)[:, None] * v))
    return np.concatenate(pts)


def disk_rays(sensor_pos, target_center, disk_radius: float, arc_spacing: float,
              ring_spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Rays from a sensor through a disk of endpoints facing it.

    The disk is centered on ``target_center`` with normal along
    ``target_center - sensor_pos``. The first ray is the central one.
    """
    s = np.asarray(sensor_pos, dtype=float)
    c = np.asarray(target_center, dtype=float)
    ends = disk_endpoints(c, c - s, disk_radius, arc_spacing, ring_spacing)
    return rays_to_points(s, ends)


def fibonacci_sphere(n: int) -> np.ndarray:
    if n < 1:
        raise DegenerateInputError("need at least one direction")
    i = np.arange(n) + 0.5
    y = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.clip(1.0 - y * y, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n)
    d = np.stack([rho * np.cos(phi), y, rho * np.sin(phi)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sphere_directions(n: int, seed: int | None = 0) -> np.ndarray:
    """``n`` near-uniform unit vectors on a Fibonacci lattice.

    ``seed`` only applies a rigid rotation to the lattice; ``None`` leaves it
    unrotated.
    """
    d = fibonacci_sphere(n)
    if seed is None:
        return d
    from ..shapes import random_rotation

    R = random_rotation(stream(seed, "sphere_directions"))
    d = d @ R.T
    return d / np.linalg.norm(d, axis=1, keepdims=True)
