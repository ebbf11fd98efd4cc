import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from helpers import brute_force_rays

from aggkit.cloudio import read_cloud_csv, read_cloud_ply
from aggkit.errors import AggkitError
from aggkit.raycast import Instance, SceneIndex, cast_rays, rays_to_points
from aggkit.shapes import synthetic_rock, unit_cube
from aggkit.stockgen import (PRESETS, StockpileConfig, assemble_scene, camera_poses, generate_stockpile,
                             lidar_positions, scan_stockpile, scene_instances, synthetic_library, write_scene)

SMALL = StockpileConfig(n_g=3, L_min=2, L_max=2, seed=5)


@pytest.fixture(scope="module")
def small_pile():
    lib = synthetic_library(4, 0.75 * SMALL.cell_pitch, seed=1)
    cloud, settled, index = generate_stockpile(lib, SMALL)
    return lib, cloud, settled, index


def test_config_defaults_and_presets():
    c = StockpileConfig()
    assert (c.Lx, c.Lz, c.N, c.N1, c.N2, c.d, c.L_min, c.L_max) == (2.0, 2.0, 36, 6, 8, 0.02, 6, 8)
    assert c.n_lidars == 15
    assert PRESETS["RR3"].n_g == 9 and PRESETS["RR3"].H == 0.5 and PRESETS["RR3"].r2 == 1.3
    assert PRESETS["RR4"].n_g == 7 and PRESETS["RR4"].H1 == 1.5
    assert PRESETS["MIX"].H == 0.8 and PRESETS["MIX"].H2 == 0.7
    assert c.cell_pitch == pytest.approx(0.8 * 2.0 / 7)


def test_config_validation():
    assert StockpileConfig.from_dict({"n_g": 4, "seed": 2}) == StockpileConfig(n_g=4, seed=2)
    with pytest.raises(AggkitError, match="unknown"):
        StockpileConfig.from_dict({"n_grid": 4})
    with pytest.raises(AggkitError):
        StockpileConfig(L_min=9, L_max=8)
    with pytest.raises(AggkitError):
        StockpileConfig(d=0)
    with pytest.raises(AggkitError):
        StockpileConfig(n_g=0)
    c = StockpileConfig(seed=3)
    assert StockpileConfig.from_dict(c.to_dict()) == c


def test_instance_count():
    lib = synthetic_library(3, 0.5 * PRESETS["RR4"].replace(n_g=6).cell_pitch, seed=0)
    s = assemble_scene(lib, PRESETS["RR4"].replace(n_g=6), layers=10)
    assert len(s.poses) == 360
    assert [p.instance_id for p in s.poses] == list(range(360))


def test_layers_drawn_from_range():
    lib = synthetic_library(2, 0.1, seed=0)
    for seed in range(5):
        cfg = StockpileConfig(n_g=2, L_min=1, L_max=3, seed=seed)
        assert len(assemble_scene(lib, cfg).poses) in (4, 8, 12)


def test_single_instance_rests_on_ground():
    rock = synthetic_rock(4, size=0.1)
    cfg = StockpileConfig(n_g=1, seed=0)
    s = assemble_scene([rock], cfg, layers=1)
    p = s.poses[0]
    world = rock.transformed(p.rotation, p.translation)
    assert world.vertices[:, 1].min() == pytest.approx(0.0, abs=s.cell)
    np.testing.assert_allclose(p.rotation.T @ p.rotation, np.eye(3), atol=1e-12)


def test_assemble_deterministic():
    lib = synthetic_library(3, 0.2, seed=0)
    a = assemble_scene(lib, SMALL)
    b = assemble_scene(lib, SMALL)
    for p, q in zip(a.poses, b.poses):
        assert p.source == q.source
        assert np.array_equal(p.rotation, q.rotation) and np.array_equal(p.translation, q.translation)
    c = assemble_scene(lib, SMALL.replace(seed=6))
    assert any(not np.array_equal(p.translation, q.translation) for p, q in zip(a.poses, c.poses))


def test_too_big_mesh_rejected():
    with pytest.raises(AggkitError, match="cell size"):
        assemble_scene([synthetic_rock(0, size=1.0)], SMALL)
    with pytest.raises(AggkitError):
        assemble_scene([], SMALL)


def _hull_depth(points, hull):
    """Largest penetration depth of any point into a convex hull (0 when outside)."""
    A, b = hull.equations[:, :3], hull.equations[:, 3]
    signed = points @ A.T + b  # negative inside each facet plane
    return float(np.clip(-signed.max(axis=1), 0, None).max())


def test_settled_pile_interpenetration_and_support(small_pile):
    lib, _, settled, _ = small_pile
    worlds = [lib[p.source].transformed(p.rotation, p.translation) for p in settled.poses]
    hulls = [ConvexHull(w.vertices) for w in worlds]
    h = settled.cell
    worst = 0.0
    for i, wi in enumerate(worlds):
        for j in range(len(worlds)):
            if i != j:
                worst = max(worst, _hull_depth(wi.vertices, hulls[j]))
    assert worst <= h * (1 + 1e-9)
    for w in worlds:
        assert w.vertices[:, 1].min() >= -1e-9


def test_lidar_and_camera_rig():
    c = PRESETS["RR4"]
    L = lidar_positions(c)
    assert len(L) == 15
    np.testing.assert_allclose(L[:6, 1], c.H1)
    np.testing.assert_allclose(L[6:14, 1], c.H2)
    np.testing.assert_allclose(L[14], [c.cx, c.H1, c.cz])
    cams = camera_poses(c)
    assert len(cams) == 36
    assert all(cam["position"][1] == pytest.approx(c.H) and cam["look_at"] == [0.0, 0.0, 0.0] for cam in cams)


def test_cube_overhead_scan():
    cfg = StockpileConfig(d=0.1, seed=0)
    idx = SceneIndex.build([Instance(unit_cube(), 42, None, [-0.5, 0.0, -0.5])])
    cloud = scan_stockpile(idx, cfg, emitters=[[0.0, 3.0, 0.0]])
    assert len(cloud) > 0
    assert np.all(cloud.instance_id == 42)
    np.testing.assert_allclose(cloud.xyz[:, 1], 1.0, atol=1e-6)


def test_per_emitter_bound(small_pile):
    _, cloud, _, _ = small_pile
    counts = np.bincount(cloud.lidar_id, minlength=15)
    assert counts.max() <= 121 ** 2
    assert set(np.unique(cloud.lidar_id)) <= set(range(15))


def test_label_soundness(small_pile):
    _, cloud, _, index = small_pile
    e = lidar_positions(SMALL)[3]
    from aggkit.raycast import grid_endpoints

    ends = grid_endpoints((SMALL.cx, SMALL.cz), SMALL.Lx, SMALL.Lz, SMALL.enlargement, 0.08)
    o, d = rays_to_points(e, ends)
    O = np.repeat(e[None, :], len(d), axis=0)
    h = cast_rays(index, e[None, :], d)
    t_ref, id_ref = brute_force_rays(index.triangles, index.tri_instance, O, d, index.ray_epsilon)
    got = np.full(len(d), -1)
    got[h.ray_index] = h.instance_id
    np.testing.assert_array_equal(got, id_ref)


def test_points_on_their_instance(small_pile):
    lib, cloud, settled, _ = small_pile
    rng = np.random.default_rng(0)
    pick = rng.choice(len(cloud), size=min(300, len(cloud)), replace=False)
    for k in pick:
        p = settled.poses[cloud.instance_id[k]]
        local = p.rotation.T @ (cloud.xyz[k] - p.translation)
        hull = ConvexHull(lib[p.source].vertices)
        # on the boundary of the convex rock: max facet distance is zero
        assert abs((hull.equations[:, :3] @ local + hull.equations[:, 3]).max()) < 1e-6


def test_write_scene_roundtrip_and_manifest(small_pile, tmp_path):
    lib, cloud, settled, _ = small_pile
    m = write_scene(cloud, settled.poses, SMALL, tmp_path)
    back = read_cloud_ply(tmp_path / "cloud.ply")
    assert np.array_equal(back.records(), cloud.records())
    csv = read_cloud_csv(tmp_path / "cloud.csv")
    assert np.array_equal(csv.records(), cloud.records())
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man == json.loads(json.dumps(m))
    assert man["seed"] == SMALL.seed and man["config"] == SMALL.to_dict()
    assert man["n_instances"] == len(settled.poses)
    visible = {i["instance_id"] for i in man["instances"] if i["n_points"] > 0}
    assert visible == set(np.unique(cloud.instance_id).tolist())
    assert sum(i["n_points"] for i in man["instances"]) == len(cloud)
    assert len(man["cameras"]) == 36 and len(man["lidars"]) == 15
    head = (tmp_path / "cloud.ply").read_bytes()[:400].decode("ascii", "replace")
    assert "binary_little_endian" in head and "ushort lidar_id" in head and "int instance_id" in head


def test_dataset_byte_identical(tmp_path):
    lib = synthetic_library(2, 0.2, seed=3)
    cfg = StockpileConfig(n_g=2, L_min=1, L_max=1, d=0.05, seed=9)
    generate_stockpile(lib, cfg, tmp_path / "a")
    generate_stockpile(lib, cfg, tmp_path / "b")
    for name in ("cloud.ply", "cloud.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@settings(max_examples=5)
@given(st.integers(0, 1000))
def test_scene_instances_match_poses(seed):
    lib = synthetic_library(2, 0.1, seed=seed)
    s = assemble_scene(lib, StockpileConfig(n_g=2, seed=seed), layers=1)
    inst = scene_instances(lib, s.poses)
    assert [i.instance_id for i in inst] == [p.instance_id for p in s.poses]
