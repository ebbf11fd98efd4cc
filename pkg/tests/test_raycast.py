from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import brute_force_rays

from aggkit.errors import AggkitError, DegenerateInputError
from aggkit.raycast import (Instance, SceneIndex, cast_rays, disk_endpoints, disk_rays, fibonacci_sphere,
                            grid_endpoints, plane_basis, ring_positions, ring_radius, rays_to_points,
                            sphere_directions, traversal_count)
from aggkit.shapes import icosphere, random_rotation, synthetic_rock, unit_cube


def random_scene(seed: int, n: int = 6) -> SceneIndex:
    rng = np.random.default_rng(seed)
    inst = [Instance(synthetic_rock(int(rng.integers(2**31)), size=0.5), 10 + k, random_rotation(rng),
                     rng.uniform(-1, 1, 3)) for k in range(n)]
    return SceneIndex.build(inst)


def test_cube_hit_from_above():
    idx = SceneIndex.build([unit_cube()])
    h = cast_rays(idx, [0.5, 3.0, 0.5], np.array([[0.0, -1.0, 0.0]]))
    assert h.t[0] == pytest.approx(2.0)
    np.testing.assert_allclose(h.point[0], [0.5, 1.0, 0.5])
    assert h.instance_id[0] == 0


def test_miss_returns_nothing():
    idx = SceneIndex.build([unit_cube()])
    h = cast_rays(idx, [5.0, 5.0, 5.0], np.array([[0.0, 1.0, 0.0]]))
    assert len(h) == 0


@given(st.integers(0, 10_000))
def test_matches_brute_force(seed):
    idx = random_scene(seed)
    rng = np.random.default_rng(seed)
    O = rng.uniform(-2, 2, (300, 3))
    D = rng.normal(size=(300, 3))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    h = cast_rays(idx, O, D)
    t_ref, id_ref = brute_force_rays(idx.triangles, idx.tri_instance, O, D, idx.ray_epsilon)
    got = np.full(300, -1)
    got[h.ray_index] = h.instance_id
    np.testing.assert_array_equal(got, id_ref)
    np.testing.assert_allclose(h.t, t_ref[h.ray_index], atol=1e-9)


def test_hit_geometry():
    idx = random_scene(1)
    rng = np.random.default_rng(0)
    O = np.zeros((500, 3)) + [0, 4, 0]
    D = rng.normal(size=(500, 3))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    h = cast_rays(idx, O, D)
    assert len(h) > 0
    assert np.all(h.t > 0)
    np.testing.assert_allclose(h.point, O[h.ray_index] + h.t[:, None] * D[h.ray_index], atol=1e-9)
    # the hit point lies on its triangle: barycentric reconstruction from the plane
    tri = idx.triangles[h.triangle]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    dist = np.abs(np.einsum("ij,ij->i", h.point - tri[:, 0], n))
    assert dist.max() < 1e-6


def test_source_face_maps_back():
    R = random_rotation(np.random.default_rng(3))
    m = synthetic_rock(3)
    idx = SceneIndex.build([Instance(m, 5, R, [1, 2, 3])])
    world = m.transformed(R, [1, 2, 3]).triangles()
    np.testing.assert_allclose(idx.triangles, world[idx.source_face])


def test_every_triangle_in_exactly_one_leaf():
    idx = random_scene(2, n=20)
    seen = np.zeros(idx.n_triangles, dtype=int)
    stack = [0]
    while stack:
        k = stack.pop()
        if idx.node_left[k] < 0:
            seen[idx.node_start[k]:idx.node_start[k] + idx.node_count[k]] += 1
            lo = idx.triangles[idx.node_start[k]:idx.node_start[k] + idx.node_count[k]].reshape(-1, 3)
            assert np.all(lo >= idx.node_min[k] - 1e-12) and np.all(lo <= idx.node_max[k] + 1e-12)
        else:
            stack += [idx.node_left[k], idx.node_left[k] + 1]
    assert np.all(seen == 1)


def test_no_self_intersection_from_surface():
    idx = SceneIndex.build([icosphere(3)])
    h = cast_rays(idx, [0.0, 3.0, 0.0], np.array([[0.0, -1.0, 0.0]]))
    p = h.point[0]
    # leaving the surface outward must not hit the starting face again
    out = cast_rays(idx, p, np.array([[0.0, 1.0, 0.0]]))
    assert len(out) == 0


def test_shared_origin_and_length_mismatch():
    idx = SceneIndex.build([unit_cube()])
    D = np.array([[0.0, -1.0, 0.0], [0.0, -1.0, 0.0]])
    assert len(cast_rays(idx, [0.5, 2, 0.5], D)) == 2
    with pytest.raises(AggkitError):
        cast_rays(idx, np.zeros((3, 3)), D)


def test_build_errors():
    with pytest.raises(AggkitError):
        SceneIndex.build([])
    with pytest.raises(AggkitError):
        SceneIndex.build([Instance(unit_cube(), 1), Instance(unit_cube(), 1)])


def test_labels_and_lidar_id():
    idx = SceneIndex.build([Instance(unit_cube(), 7), Instance(unit_cube(), 9, None, [3, 0, 0])])
    D = np.array([[0.0, -1.0, 0.0]])
    a = cast_rays(idx, [0.5, 2, 0.5], D, lidar_id=4)
    b = cast_rays(idx, [3.5, 2, 0.5], D, lidar_id=4)
    assert a.instance_id[0] == 7 and b.instance_id[0] == 9
    assert a.lidar_id[0] == 4


def test_concurrent_callers_agree():
    idx = random_scene(4)
    rng = np.random.default_rng(1)
    D = rng.normal(size=(2000, 3))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    ref = cast_rays(idx, [0, 3, 0], D)
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(lambda _: cast_rays(idx, [0, 3, 0], D), range(8)))
    for o in outs:
        np.testing.assert_array_equal(o.t, ref.t)
        np.testing.assert_array_equal(o.instance_id, ref.instance_id)


def test_traversal_count_positive():
    idx = random_scene(5)
    D = sphere_directions(100)
    assert traversal_count(idx, [0, 0, 0], D) > 0


def test_ring_positions():
    p = ring_positions((1.0, -1.0), 2.0, 2.0, 36, 1.5, 3.0)
    assert p.shape == (36, 3)
    assert np.allclose(p[:, 1], 1.5)
    r = np.hypot(p[:, 0] - 1.0, p[:, 2] + 1.0)
    np.testing.assert_allclose(r, ring_radius(2.0, 2.0, 3.0))
    assert ring_radius(2.0, 2.0, 1.0) == pytest.approx(np.sqrt(2))
    with pytest.raises(DegenerateInputError):
        ring_positions((0, 0), 2, 2, 0, 1, 1)


def test_grid_endpoints():
    g = grid_endpoints((0.0, 0.0), 2.0, 2.0)
    assert len(g) == 121 * 121
    assert np.all(g[:, 1] == 0)
    np.testing.assert_allclose(g.min(axis=0)[[0, 2]], [-1.2, -1.2])
    np.testing.assert_allclose(g.max(axis=0)[[0, 2]], [1.2, 1.2], atol=1e-12)
    assert len(grid_endpoints((5, 5), 0.04, 0.04, 1.0, 0.02)) == 9
    with pytest.raises(DegenerateInputError):
        grid_endpoints((0, 0), 1, 1, d=0)


def test_rays_to_points():
    o, d = rays_to_points([0, 1, 0], [[0, 0, 0], [1, 1, 0]])
    np.testing.assert_allclose(d, [[0, -1, 0], [1, 0, 0]])
    with pytest.raises(DegenerateInputError):
        rays_to_points([0, 0, 0], [[0, 0, 0]])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_plane_basis_orthonormal(n):
    u, v, w = plane_basis(n)
    B = np.stack([u, v, w])
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(w, np.asarray(n) / np.linalg.norm(n), atol=1e-12)


def test_plane_basis_zero():
    with pytest.raises(DegenerateInputError):
        plane_basis([0, 0, 0])


def test_disk_endpoints_layout():
    p = disk_endpoints([0, 0, 0], [0, 0, 1], 0.006, 0.002, 0.002)
    # center + rings of floor(2*pi*r/arc) points at r = 2, 4, 6 mm
    assert len(p) == 1 + 6 + 12 + 18
    np.testing.assert_allclose(p[0], 0)
    assert np.allclose(p[:, 2], 0)
    assert np.linalg.norm(p, axis=1).max() == pytest.approx(0.006)


def test_disk_rays():
    o, d = disk_rays([0, 0, 5], [0, 0, 0], 0.5, 0.05, 0.05)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(d[0], [0, 0, -1])


def test_sphere_directions():
    assert fibonacci_sphere(1).shape == (1, 3)
    d = sphere_directions(1000)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1, atol=1e-12)
    cos = np.clip(d @ d.T, -1, 1)
    np.fill_diagonal(cos, -1)
    assert np.degrees(np.arccos(cos.max())) >= 3.5
    np.testing.assert_array_equal(sphere_directions(50, 3), sphere_directions(50, 3))
    with pytest.raises(DegenerateInputError):
        fibonacci_sphere(0)
