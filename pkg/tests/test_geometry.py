import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutmg.errors import ConfigError, GeometryError
from cutmg.geometry import (CUT, NEG, POS, LevelSet, NodalLevelSet, check_assumptions,
                            classify_and_cut, cut_simplex, cut_topology, interpolate_levelset)
from cutmg.mesh import MeshLevel, build_hierarchy_meshes, build_initial_mesh
from cutmg.quadrature import simplex_measure

BOX2 = ((0.0, 2.0), (0.0, 2.0))
SPHERE2 = LevelSet.spherical((1.03, 1.02), 0.413)
REF_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _one_triangle(values):
    mesh = MeshLevel(REF_TRI.copy(), np.array([[0, 1, 2]]))
    return classify_and_cut(mesh, NodalLevelSet(mesh, np.asarray(values, dtype=float)))


def test_reference_cut_triangle():
    topo = _one_triangle([-0.5, 0.5, -0.5])
    assert topo.element_class[0] == CUT
    cell = topo.cut_cells[0]
    seg = cell.facets[0]
    ends = sorted(map(tuple, np.round(seg, 14)))
    assert ends == [(0.5, 0.0), (0.5, 0.5)]
    assert cell.volumes[1] == pytest.approx(0.125, abs=1e-14)
    np.testing.assert_allclose(cell.kappa, [0.75, 0.25], atol=1e-14)


def test_reference_cut_triangle_monte_carlo():
    rng = np.random.default_rng(0)
    u = rng.random((10**6, 2))
    inside = u.sum(axis=1) <= 1.0
    pts = u[inside]
    # linear interpolant of (-0.5, 0.5, -0.5) is x - 0.5
    frac_pos = np.mean(pts[:, 0] - 0.5 > 0)
    assert frac_pos == pytest.approx(0.25, abs=1e-2)


def test_uniform_sign_is_not_cut():
    topo = _one_triangle([-1.0, -1.0, -1.0])
    assert topo.element_class[0] == NEG
    assert topo.cut_cells == []
    assert _one_triangle([1.0, 2.0, 3.0]).element_class[0] == POS


def test_normal_orientation():
    topo = _one_triangle([-1.0, 1.0, 1.0])
    cell = topo.cut_cells[0]
    assert cell.kappa.sum() == pytest.approx(1.0)
    n = cell.normals[0]
    assert np.linalg.norm(n) == pytest.approx(1.0)
    grad = np.array([2.0, 2.0])  # gradient of the interpolant of (-1, 1, 1)
    np.testing.assert_allclose(n, grad / np.linalg.norm(grad))


def test_exact_zero_rejected():
    with pytest.raises(GeometryError):
        cut_simplex(REF_TRI, np.array([0.0, 1.0, -1.0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 2.0), min_size=4, max_size=4),
       st.lists(st.booleans(), min_size=4, max_size=4))
def test_tet_cut_tiles_and_interpolant_vanishes(mags, signs):
    x = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    phi = np.array([m if s else -m for m, s in zip(mags, signs)])
    (neg, pos), facets = cut_simplex(x, phi)
    total = sum(simplex_measure(np.array(p)).sum() for p in (neg, pos) if len(p))
    assert total == pytest.approx(1.0 / 6.0, rel=1e-12)
    grad = np.linalg.solve(x[1:] - x[0], phi[1:] - phi[0])
    for f in facets:
        np.testing.assert_allclose(phi[0] + (f - x[0]) @ grad, 0.0, atol=1e-12)


def test_planar_interpolation_is_exact():
    mesh = build_initial_mesh(BOX2, 4, 2)
    nodal = interpolate_levelset(LevelSet.planar(1.321), mesh)
    np.testing.assert_allclose(nodal.values, mesh.vertices[:, 0] - 1.321, atol=1e-15)
    a = cut_topology(mesh, LevelSet.planar(1.321), iso_p2=False)
    b = cut_topology(mesh, LevelSet.planar(1.321), iso_p2=True)
    np.testing.assert_array_equal(a.element_class, b.element_class)


def test_spherical_value_at_center():
    assert SPHERE2(np.array([1.03, 1.02])) == pytest.approx(-0.413**2)
    with pytest.raises(ConfigError):
        LevelSet(kind="torus")


@pytest.mark.parametrize("iso_p2", [False, True])
def test_partition_and_tiling_on_every_cut_element(iso_p2):
    for mesh in build_hierarchy_meshes(BOX2, 4, 2, 3):
        topo = cut_topology(mesh, SPHERE2, iso_p2=iso_p2)
        assert topo.cut_cells
        for cell in topo.cut_cells:
            assert cell.kappa.sum() == pytest.approx(1.0, abs=1e-14)
            assert cell.volumes.sum() == pytest.approx(mesh.volumes[cell.elem], rel=1e-12)
            np.testing.assert_allclose(topo.levelset(cell.facets.reshape(-1, 2)), 0.0,
                                       atol=1e-12)
        vol = topo.side_volumes()
        assert vol.sum() == pytest.approx(4.0, rel=1e-12)


def test_extended_sets_and_ghost_faces():
    mesh = build_hierarchy_meshes(BOX2, 4, 2, 2)[-1]
    topo = cut_topology(mesh, SPHERE2, iso_p2=True)
    ext = topo.extended
    far = topo.element_class != CUT
    assert np.all(ext[0][far] ^ ext[1][far])
    assert np.all(ext[0] & ext[1] == (topo.element_class == CUT))
    for i in range(2):
        fe = mesh.face_elems[topo.ghost_faces[i]]
        assert np.all(fe[:, 1] >= 0)
        assert np.all(ext[i][fe[:, 0]] & ext[i][fe[:, 1]])


def test_ghost_faces_scale_with_interface_measure():
    meshes = build_hierarchy_meshes(BOX2, 4, 2, 3)
    counts = [len(cut_topology(m, LevelSet.planar(1.321)).ghost_faces[0]) for m in meshes]
    ratios = np.array(counts[2:]) / np.array(counts[1:-1])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.25)


def test_assumptions_planar_and_spherical():
    meshes = build_hierarchy_meshes(BOX2, 4, 2, 4)
    planar = [cut_topology(m, LevelSet.planar(1.321)) for m in meshes]
    assert check_assumptions(meshes, planar).ok
    topos = [cut_topology(m, SPHERE2, iso_p2=True) for m in meshes]
    report = check_assumptions(meshes, topos, phi=SPHERE2)
    assert report.ok and report.violations == []
    d = np.array(report.a1_distance)
    ratios = d[:-1] / d[1:]
    assert np.all((ratios > 2.0) & (ratios < 8.0))
