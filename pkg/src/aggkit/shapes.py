"""Closed-form test solids and synthetic rock meshes.

All generators return outward-wound, watertight meshes except
:func:`quad_sheet`, which is deliberately open.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .geomcore import TriMesh
from .rng import stream


def box_mesh(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> TriMesh:
    sx, sy, sz = size
    v = np.array([[x, y, z] for x in (0, sx) for y in (0, sy) for z in (0, sz)], dtype=float)
    v += np.asarray(origin, dtype=float)
    # vertex index = 4*x + 2*y + z
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 6, 7], [4, 7, 5],  # x = 1
        [0, 4, 5], [0, 5, 1],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ])
    return TriMesh(v, f)


def unit_cube() -> TriMesh:
    return box_mesh()


def tetrahedron(edge: float = 1.0) -> TriMesh:
    """Regular tetrahedron centered at the origin."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    v *= edge / (2 * np.sqrt(2))
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def quad_sheet(size: float = 1.0) -> TriMesh:
    v = np.array([[0, 0, 0], [size, 0, 0], [size, size, 0], [0, size, 0]], dtype=float)
    return TriMesh(v, [[0, 1, 2], [0, 2, 3]])


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    v = np.array(verts, dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(faces, dtype=np.int64)
    for _ in range(subdivisions):
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mids = v[uniq[:, 0]] + v[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        m = inv.reshape(3, -1).T + len(v)
        v = np.vstack([v, mids])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
        f = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
    return TriMesh(v * radius + np.asarray(center, dtype=float), f)


def ellipsoid(semi_axes=(1.0, 1.0, 1.0), subdivisions: int = 3) -> TriMesh:
    s = icosphere(subdivisions)
    return s.with_vertices(s.vertices * np.asarray(semi_axes, dtype=float))


def _outward_hull(points: np.ndarray) -> TriMesh:
    hull = ConvexHull(points)
    used = np.unique(hull.simplices)
    remap = np.full(len(points), -1)
    remap[used] = np.arange(len(used))
    v = points[used]
    f = remap[hull.simplices]
    c = v.mean(axis=0)
    tri = v[f]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, tri[:, 0] - c) < 0
    f[flip] = f[flip][:, ::-1]
    return TriMesh(v, f)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def synthetic_rock(seed: int, size: float = 0.2, n_points: int = 160,
                   elongation: tuple[float, float] = (0.55, 1.0), roughness: float = 0.08,
                   color: bool = True) -> TriMesh:
    """A convex, angular rock-like polyhedron about ``size`` across.

    Built as the convex hull of jittered points on a random ellipsoid, so
    face count is close to ``2 * n_points - 4``. Deterministic per seed.
    """
    rng = stream(seed, "synthetic_rock")
    axes = np.sort(rng.uniform(elongation[0], elongation[1], size=3))
    axes /= axes.max()
    d = rng.normal(size=(n_points, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = 1.0 + roughness * rng.standard_normal(n_points)
    pts = d * r[:, None] * axes * (size / 2.0)
    mesh = _outward_hull(pts)
    mesh = mesh.transformed(random_rotation(rng))
    if color:
        base = rng.uniform([110, 95, 80], [190, 170, 150])
        shade = rng.uniform(-20, 20, size=(mesh.n_vertices, 1))
        cols = np.clip(base + shade, 0, 255).astype(np.uint8)
        mesh = TriMesh(mesh.vertices, mesh.faces, cols)
    return mesh


def bumpy_sphere(seed: int, subdivisions: int = 3, radius: float = 1.0, amplitude: float = 0.25) -> TriMesh:
    """Star-shaped, generally non-convex closed surface (radially perturbed icosphere)."""
    rng = stream(seed, "bumpy_sphere")
    s = icosphere(subdivisions)
    d = s.vertices
    # a few random lobes keep the surface smooth enough to stay non-self-intersecting
    lobes = rng.normal(size=(6, 3))
    lobes /= np.linalg.norm(lobes, axis=1, keepdims=True)
    w = rng.uniform(-1, 1, size=6)
    r = 1.0 + amplitude * np.tanh((np.exp(4.0 * (d @ lobes.T - 1.0)) * w).sum(axis=1))
    scale = rng.uniform(0.6, 1.0, size=3)
    v = d * r[:, None] * scale * radius
    return s.with_vertices(v @ random_rotation(rng).T)
