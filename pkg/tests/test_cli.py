import json

import numpy as np
import pytest

from helpers import disc, shadow_scene

from aggkit import __version__
from aggkit.cli import main
from aggkit.cloudio import LabeledPointCloud, read_cloud_ply, write_cloud_ply, write_points_ply
from aggkit.geomcore import write_obj
from aggkit.imgseg import write_pgm
from aggkit.shapes import icosphere, quad_sheet, unit_cube


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


@pytest.fixture
def cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    write_obj(unit_cube(), p)
    return p


@pytest.fixture
def labeled_ply(tmp_path):
    rng = np.random.default_rng(0)
    pts = np.concatenate([c + rng.uniform(-0.1, 0.1, (80, 3)) for c in ([0, 0, 0], [1, 0, 0], [0, 0, 1])])
    lab = np.repeat([0, 1, 2], 80)
    p = tmp_path / "cloud.ply"
    write_cloud_ply(LabeledPointCloud(pts, np.full((240, 3), 100), np.zeros(240), lab), p)
    return p


def test_morph3d_cube(capsys, tmp_path, cube_obj):
    code, res, _ = run(capsys, "morph3d", cube_obj, "--out", tmp_path / "o")
    assert code == 0
    assert res["a"] == pytest.approx(1) and res["b"] == pytest.approx(1) and res["c"] == pytest.approx(1)
    assert res["fer3d"] == pytest.approx(1)
    assert res["sphericity"] == pytest.approx(0.806, abs=0.005)
    run_json = json.loads((tmp_path / "o" / "run.json").read_text())
    assert run_json["command"] == "morph3d" and run_json["seed"] == 0 and run_json["version"] == __version__
    assert json.loads((tmp_path / "o" / "morph3d.json").read_text())["fer3d"] == pytest.approx(1)


def test_morph3d_views(capsys, tmp_path, cube_obj):
    code, res, _ = run(capsys, "morph3d", cube_obj, "--views", 6, "--seed", 4, "--out", tmp_path / "o")
    assert code == 0 and res["multiview"]["n_views"] == 6
    assert len((tmp_path / "o" / "views.csv").read_text().splitlines()) == 7
    assert json.loads((tmp_path / "o" / "run.json").read_text())["seed"] == 4


def test_usage_and_domain_errors(capsys, tmp_path, cube_obj):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "morph3d")[0] == 2
    code, _, err = run(capsys, "morph3d", tmp_path / "missing.obj", "--out", tmp_path / "o")
    assert code == 1 and "missing.obj" in err
    sheet = tmp_path / "sheet.obj"
    write_obj(quad_sheet(), sheet)
    assert run(capsys, "morph3d", sheet, "--out", tmp_path / "o")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus": 1}')
    assert run(capsys, "morph3d", cube_obj, "--config", bad, "--out", tmp_path / "o")[0] == 2
    (tmp_path / "broken.json").write_text("{")
    assert run(capsys, "morph3d", cube_obj, "--config", tmp_path / "broken.json")[0] == 2


def test_config_and_flag_precedence(capsys, tmp_path):
    p = tmp_path / "s.obj"
    write_obj(icosphere(2), p)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"unit_scale": 2.0, "voxel": 0.5}))
    code, res, _ = run(capsys, "mesh-stats", p, "--config", cfg, "--out", tmp_path / "a")
    assert code == 0 and res["bounds"][1][0] == pytest.approx(2.0) and "voxel_volume" in res
    code, res, _ = run(capsys, "mesh-stats", p, "--config", cfg, "--unit-scale", 3, "--out", tmp_path / "b")
    assert res["bounds"][1][0] == pytest.approx(3.0)
    run_json = json.loads((tmp_path / "b" / "run.json").read_text())
    assert run_json["params"]["unit_scale"] == 3 and run_json["config_file"] == str(cfg)


def test_segment(capsys, tmp_path):
    from skimage import io

    img, gt = shadow_scene()
    io.imsave(tmp_path / "rock.png", img, check_contrast=False)
    code, res, _ = run(capsys, "segment", tmp_path / "rock.png", "--out", tmp_path / "o")
    assert code == 0 and res["components"] == 1
    assert (tmp_path / "o" / "mask.pgm").read_bytes().startswith(b"P5")
    assert abs(res["foreground_px"] - gt.sum()) < 0.05 * gt.sum()


def test_triview(capsys, tmp_path):
    views = []
    for name in ("top", "front", "side"):
        write_pgm(disc(120), tmp_path / f"{name}.pgm")
        views.append(tmp_path / f"{name}.pgm")
    write_pgm(disc(20), tmp_path / "ball.pgm")
    code, res, _ = run(capsys, "triview", *views, "--ball-masks", *[tmp_path / "ball.pgm"] * 3,
                       "--ball-diameter", 2.0, "--out", tmp_path / "o")
    assert code == 0
    assert set(res) >= {"raw_volume", "c1", "c2", "corrected_volume", "weight", "units"}
    # Steinmetz solid of radius 6 ball radii
    r = 6.0
    assert res["raw_volume"] == pytest.approx(8 * (2 - np.sqrt(2)) * r ** 3, rel=0.03)
    assert res["weight"] == pytest.approx(res["corrected_volume"] * 2.66)
    code, res2, _ = run(capsys, "triview", *views, "--ball-px", 40, 40, 40, "--ball-diameter", 2.0,
                        "--out", tmp_path / "p")
    assert code == 0 and res2["raw_volume"] == pytest.approx(res["raw_volume"], rel=0.02)
    assert run(capsys, "triview", *views, "--ball-diameter", 2.0, "--out", tmp_path / "q")[0] == 2


def test_morph2d(capsys, tmp_path):
    m = np.zeros((200, 200), bool)
    m[20:60, 20:60] = disc(20, 40)
    m[100:180, 100:180] = disc(40, 80)
    write_pgm(m, tmp_path / "m.pgm")
    code, res, _ = run(capsys, "morph2d", tmp_path / "m.pgm", "--scale", 0.1, "--bins", 3,
                       "--out", tmp_path / "o")
    assert code == 0 and res["n_particles"] == 2
    rep = json.loads((tmp_path / "o" / "morph2d.json").read_text())
    esd = sorted(p["esd"] for p in rep["particles"])
    assert esd == pytest.approx([4.0, 8.0], rel=0.02)
    assert (tmp_path / "o" / "gradation.csv").read_text().startswith("bin_lo,bin_hi,count,cumulative_percent")
    empty = tmp_path / "e.pgm"
    write_pgm(np.zeros((10, 10), bool), empty)
    assert run(capsys, "morph2d", empty, "--out", tmp_path / "p")[0] == 1


def test_eval_seg_and_cluster(capsys, tmp_path, labeled_ply):
    code, res, _ = run(capsys, "eval-seg", labeled_ply, "--radius", 0.1, "--out", tmp_path / "o")
    assert code == 0 and res["n_truth"] == 3 and res["completeness"] == 100.0
    assert (tmp_path / "o" / "matches.csv").read_text().startswith("pred,truth,iou")
    code, res, _ = run(capsys, "eval-seg", labeled_ply, "--pred", labeled_ply, "--iou-mode", "points",
                       "--out", tmp_path / "p")
    assert (res["completeness"], res["iou_ap"]) == (100.0, 100.0)
    code, res, _ = run(capsys, "cluster", labeled_ply, "--radius", 0.1, "--out", tmp_path / "c")
    assert code == 0 and res["n_instances"] == 3 and sorted(res["sizes"]) == [80, 80, 80]
    back = read_cloud_ply(tmp_path / "c" / "clusters.ply")
    assert len(np.unique(back.instance_id)) == 3


def test_eval_cd_and_sp(capsys, tmp_path, labeled_ply):
    a = np.random.default_rng(1).normal(size=(30, 3))
    write_points_ply(a, tmp_path / "a.ply")
    np.savetxt(tmp_path / "b.xyz", a + [1, 0, 0])
    code, res, _ = run(capsys, "eval-cd", tmp_path / "a.ply", tmp_path / "b.xyz", "--out", tmp_path / "o")
    assert code == 0 and res["chamfer_l1"] <= 2.0 + 1e-12
    code, res, _ = run(capsys, "sp", labeled_ply, "--per-instance", "--threshold", 50, "--out", tmp_path / "s")
    assert code == 0 and res["n"] == 3
    rep = json.loads((tmp_path / "s" / "sp.json").read_text())
    assert all(0 <= r["sp"] <= 100 for r in rep["records"])


def test_gen_stockpile_and_pairs(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_g": 2, "L_min": 1, "L_max": 1, "d": 0.1}))
    code, res, _ = run(capsys, "gen-stockpile", "--config", cfg, "--n-models", 2, "--seed", 3,
                       "--out", tmp_path / "s")
    assert code == 0 and res["n_instances"] == 4 and res["config"]["seed"] == 3
    man = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert man["seed"] == 3 and man["n_points"] == res["n_points"]
    cfg.write_text(json.dumps({"n_grid": 2}))
    assert run(capsys, "gen-stockpile", "--config", cfg, "--out", tmp_path / "t")[0] == 1
    assert run(capsys, "gen-stockpile", "--preset", "XX", "--out", tmp_path / "t")[0] == 1
    pc = tmp_path / "p.json"
    pc.write_text(json.dumps({"orientations": 1, "subset_sizes": [3], "partial_n": 32, "complete_n": 256,
                              "arc_spacing": 0.01, "ring_spacing": 0.01}))
    code, res, _ = run(capsys, "gen-pairs", "--config", pc, "--out", tmp_path / "p")
    assert code == 0 and res["n_pairs"] == 1
    assert (tmp_path / "p" / "rock_000" / "orient_00" / "partial_k3.ply").exists()


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
