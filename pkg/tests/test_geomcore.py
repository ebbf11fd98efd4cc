import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggkit.errors import DegenerateInputError, MeshParseError, NotWatertightError
from aggkit.geomcore import (TriMesh, decimate, load_mesh, lod_chain, mesh_measures, read_ply_elements,
                             recenter, surface_area, voxelize, write_obj, write_ply)
from aggkit.shapes import (box_mesh, bumpy_sphere, icosphere, quad_sheet, random_rotation, synthetic_rock,
                           tetrahedron, unit_cube)

rotations = st.integers(0, 2**31 - 1).map(lambda s: random_rotation(np.random.default_rng(s)))
offsets = st.lists(st.floats(-50, 50), min_size=3, max_size=3).map(np.array)


def test_tetrahedron_obj_roundtrip(tmp_path):
    p = tmp_path / "tet.obj"
    write_obj(tetrahedron(), p)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (4, 4)
    assert m.is_watertight and not m.non_manifold


def test_unit_scale_applied(tmp_path):
    p = tmp_path / "cube.obj"
    write_obj(unit_cube(), p)
    m = load_mesh(p, unit_scale=0.01)
    np.testing.assert_allclose(m.extent, [0.01] * 3)
    assert m.unit_scale == 0.01


def test_obj_quads_and_colors(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 1 1 0 0 0 1\nv 0 1 0 1 1 1\nf 1/1 2/2 3/3 4/4\n")
    m = load_mesh(p)
    assert m.n_faces == 2
    assert m.vertex_colors.tolist()[0] == [255, 0, 0]
    assert m.non_manifold  # open sheet sets the warning flag


def test_truncated_obj_reports_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshParseError) as exc:
        load_mesh(p)
    assert exc.value.line == 4
    p.write_text("v 0 0\n")
    with pytest.raises(MeshParseError, match=":1:"):
        load_mesh(p)


def test_truncated_binary_ply(tmp_path):
    p = tmp_path / "c.ply"
    write_ply(unit_cube(), p)
    data = p.read_bytes()
    p.write_bytes(data[:-20])
    with pytest.raises(MeshParseError):
        load_mesh(p)


@pytest.mark.parametrize("binary", [True, False])
def test_ply_roundtrip(tmp_path, binary):
    m = synthetic_rock(4)
    p = tmp_path / "r.ply"
    write_ply(m, p, binary=binary)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_array_equal(back.vertex_colors, m.vertex_colors)
    assert set(read_ply_elements(p)) == {"vertex", "face"}


def test_unsupported_format(tmp_path):
    p = tmp_path / "m.stl"
    p.write_text("solid")
    with pytest.raises(MeshParseError):
        load_mesh(p)


def test_face_index_out_of_range():
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])


def test_cube_measures():
    m = mesh_measures(unit_cube())
    assert m.volume == pytest.approx(1.0)
    assert m.surface_area == pytest.approx(6.0)
    np.testing.assert_allclose(m.centroid, [0.5, 0.5, 0.5])


def test_icosphere_measures():
    m = mesh_measures(icosphere(4))
    assert m.volume == pytest.approx(4 * np.pi / 3, rel=0.01)
    assert m.surface_area == pytest.approx(4 * np.pi, rel=0.01)


def test_open_sheet_has_no_volume():
    m = mesh_measures(quad_sheet())
    assert m.volume is None and m.centroid is None
    assert m.surface_area == pytest.approx(1.0)


def test_inverted_winding_still_positive():
    c = unit_cube()
    flipped = TriMesh(c.vertices, c.faces[:, ::-1])
    assert mesh_measures(flipped).volume == pytest.approx(1.0)


def test_centroid_inside_bounds():
    m = bumpy_sphere(3)
    c = mesh_measures(m).centroid
    lo, hi = m.bounds
    assert np.all(c > lo) and np.all(c < hi)


def test_recenter_cases():
    m = recenter(box_mesh(origin=(10, 10, 10)))
    np.testing.assert_allclose(m.vertices.mean(axis=0), 0, atol=1e-9)
    again = recenter(m)
    np.testing.assert_allclose(again.vertices, m.vertices, atol=1e-12)
    single = TriMesh(np.array([[3.0, 4.0, 5.0]]), np.zeros((0, 3)))
    np.testing.assert_allclose(recenter(single).vertices, [[0, 0, 0]])
    with pytest.raises(DegenerateInputError):
        recenter(TriMesh(np.zeros((0, 3)), np.zeros((0, 3))))


@given(rotations, offsets)
def test_measures_rigid_invariance(R, t):
    m = synthetic_rock(7, size=1.0)
    a = mesh_measures(m)
    b = mesh_measures(m.transformed(R, t))
    assert b.volume == pytest.approx(a.volume, rel=1e-9)
    assert b.surface_area == pytest.approx(a.surface_area, rel=1e-9)


@given(st.floats(0.01, 100))
def test_measures_scaling(s):
    m = synthetic_rock(8, size=1.0)
    a = mesh_measures(m)
    b = mesh_measures(m.scaled(s))
    assert b.volume == pytest.approx(a.volume * s ** 3, rel=1e-9)
    assert b.surface_area == pytest.approx(a.surface_area * s ** 2, rel=1e-9)


def test_voxelize_cube():
    g = voxelize(unit_cube(), 0.1)
    assert abs(g.count - 1000) <= 100
    assert g.count <= np.prod(g.dims)
    assert g.occupancy.dtype == bool


def test_voxelize_sphere_volume():
    g = voxelize(icosphere(5), 0.02)
    assert g.volume == pytest.approx(mesh_measures(icosphere(5)).volume, rel=0.02)


@pytest.mark.parametrize("mesh", [icosphere(4), box_mesh((1.0, 0.6, 0.3))], ids=["sphere", "box"])
@pytest.mark.parametrize("cell", [0.1, 0.05, 0.025])
def test_voxel_volume_bounds(mesh, cell):
    mm = mesh_measures(mesh)
    v = voxelize(mesh, cell).volume
    assert mm.volume - mm.surface_area * cell <= v <= mm.volume + mm.surface_area * cell


def test_voxelize_is_solid():
    g = voxelize(icosphere(4), 0.05)
    c = np.array(g.dims) // 2
    assert g.occupancy[tuple(c)]
    # interior cells around the center are all filled
    assert g.occupancy[c[0] - 5:c[0] + 5, c[1] - 5:c[1] + 5, c[2] - 5:c[2] + 5].all()


def test_voxelize_errors():
    with pytest.raises(NotWatertightError):
        voxelize(quad_sheet(), 0.1)
    with pytest.raises(DegenerateInputError):
        voxelize(unit_cube(), 2.0)
    with pytest.raises(ValueError):
        voxelize(unit_cube(), 0.0)


def test_decimate_dense_scan():
    m = bumpy_sphere(5, subdivisions=6, amplitude=0.15)
    d = decimate(m, 2000)
    assert d.n_faces <= 2000
    v0, v1 = mesh_measures(m).volume, mesh_measures(d).volume
    assert abs(v1 / v0 - 1) <= 0.05


def test_decimate_under_target_unchanged():
    m = unit_cube()
    assert decimate(m, 100) is m
    with pytest.raises(DegenerateInputError):
        decimate(m, 3)


def test_lod_chain_monotone():
    m = bumpy_sphere(6, subdivisions=5)
    chain = lod_chain(m)
    faces = [x.n_faces for x in chain]
    assert faces == sorted(faces, reverse=True)
    assert faces[0] <= 2000 and faces[1] <= 1000 and faces[2] <= 500
    v0 = mesh_measures(m).volume
    for lod in chain:
        assert abs(mesh_measures(lod).volume / v0 - 1) <= 0.05


def test_surface_area_matches_measures():
    m = synthetic_rock(2)
    assert surface_area(m) == mesh_measures(m).surface_area
