import math

import numpy as np
import pytest

import oracles
from conftest import mesh_for, poisson
from symm_compare.errors import EllipticityError, InvalidSpecError, MeshMismatchError
from symm_compare.mesh import (
    CellField,
    CellMatrixField,
    DomainSpec,
    NodalField,
    SuperlevelCalculator,
    TriMesh,
    build_mesh,
    gradient,
    integrate,
    lp_norm_field,
    nodal_gradient,
    read_field,
    read_mesh,
    superlevel_area,
    superlevel_integral,
    write_field,
    write_mesh,
)

UNIT_TRIANGLE = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.array([0, 1, 2]))


# --- domains ----------------------------------------------------------------


@pytest.mark.parametrize("make", [
    lambda: DomainSpec.disk(1.0, 0.0),
    lambda: DomainSpec.disk(-1.0, 0.1),
    lambda: DomainSpec.disk(1.0, 2.5),
    lambda: DomainSpec.ellipse(1.0, 0.0, 0.1),
    lambda: DomainSpec.interval(1.0, 1.0, 0.1),
    lambda: DomainSpec.polygon([(0, 0), (1, 1), (1, 0), (0, 1)], 0.1),
    lambda: DomainSpec.polygon([(0, 0), (1, 0)], 0.1),
    lambda: DomainSpec("annulus", (1.0,), 0.1),
    lambda: DomainSpec.disk(1.0, float("nan")),
])
def test_invalid_domains_are_rejected(make):
    with pytest.raises(InvalidSpecError):
        make()


def test_ball_detection():
    assert DomainSpec.disk(2.0, 0.1).is_ball
    assert DomainSpec.ellipse(1.0, 1.0, 0.1).is_ball
    assert DomainSpec.interval(0.0, 1.0, 0.1).is_ball
    assert not DomainSpec.ellipse(1.0, 0.5, 0.1).is_ball
    assert not DomainSpec.polygon([(0, 0), (1, 0), (1, 1), (0, 1)], 0.1).is_ball


# --- meshing ----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["disk", "ellipse", "square"])
@pytest.mark.parametrize("h", [0.08, 0.04])
def test_mesh_quality(kind, h):
    mesh = mesh_for(kind, h)
    assert mesh.min_angle_deg >= 20.0
    assert mesh.edge_lengths.max() <= 1.5 * h
    assert np.all(mesh.cell_areas > 0)


def test_disk_mesh_area_is_the_inscribed_polygon_area():
    h = 0.04
    m = math.ceil(2 * math.pi / h)
    polygon_area = 0.5 * m * math.sin(2 * math.pi / m)
    assert mesh_for("disk", h).area == pytest.approx(polygon_area, rel=1e-12)


def test_square_mesh_area_is_exact():
    assert mesh_for("square", 0.08).area == pytest.approx(1.0, rel=1e-13)


def test_boundary_nodes_lie_on_the_boundary():
    mesh = mesh_for("ellipse", 0.08)
    x, y = mesh.nodes[mesh.boundary_nodes].T
    np.testing.assert_allclose(x**2 + (y / 0.5) ** 2, 1.0, atol=1e-12)
    inner = mesh.nodes[mesh.interior_nodes]
    assert np.all(inner[:, 0] ** 2 + (inner[:, 1] / 0.5) ** 2 < 1.0)


def test_boundary_normals_close_up_and_measure_the_perimeter():
    mesh = mesh_for("square", 0.08)
    _, normals = mesh.boundary_facets
    np.testing.assert_allclose(normals.sum(axis=0), 0.0, atol=1e-12)
    assert np.linalg.norm(normals, axis=1).sum() == pytest.approx(4.0, rel=1e-12)
    # outward: the normal points away from the centre at the facet
    owners, _ = mesh.boundary_facets
    centre = np.array([0.5, 0.5])
    assert np.all(np.einsum("td,td->t", mesh.centroids[owners] - centre, normals) > 0)


def test_interval_mesh():
    mesh = build_mesh(DomainSpec.interval(-1.0, 1.0, 0.1))
    assert mesh.dim == 1 and mesh.n_cells == 20
    assert mesh.area == pytest.approx(2.0)
    np.testing.assert_array_equal(mesh.boundary_nodes, [0, 20])


def test_mesh_rejects_inverted_or_broken_cells():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidSpecError):
        TriMesh(nodes, np.array([[0, 2, 1]]), np.array([0, 1, 2]))
    with pytest.raises(InvalidSpecError):
        TriMesh(nodes, np.array([[0, 1, 5]]), np.array([0]))


def test_mesh_and_field_round_trip(tmp_path):
    mesh = mesh_for("ellipse", 0.08)
    u = poisson("ellipse", 0.08)
    write_mesh(mesh, tmp_path / "m.txt")
    write_field(u, tmp_path / "u.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_nodes, mesh.boundary_nodes)
    np.testing.assert_array_equal(read_field(back, tmp_path / "u.txt").values, u.values)


def test_one_dimensional_mesh_round_trip(tmp_path):
    mesh = build_mesh(DomainSpec.interval(0.0, 1.0, 0.25))
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    assert back.dim == 1
    np.testing.assert_array_equal(back.nodes, mesh.nodes)


# --- fields and matrices ----------------------------------------------------


def test_field_length_is_checked():
    mesh = mesh_for("square", 0.08)
    with pytest.raises(ValueError):
        NodalField(mesh, np.zeros(mesh.n_nodes + 1))
    with pytest.raises(ValueError):
        CellField(mesh, np.zeros(3))


def test_fields_are_read_only():
    u = NodalField(UNIT_TRIANGLE, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        u.values[0] = 5.0


def test_matrix_field_rejects_non_symmetric_or_indefinite():
    with pytest.raises(EllipticityError):
        CellMatrixField(UNIT_TRIANGLE, np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(EllipticityError):
        CellMatrixField(UNIT_TRIANGLE, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(EllipticityError):
        CellMatrixField(UNIT_TRIANGLE, np.eye(2), lambda_min=2.0)
    with pytest.raises(EllipticityError):
        CellMatrixField(UNIT_TRIANGLE, np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_matrix_field_records_its_smallest_eigenvalue():
    A = CellMatrixField(UNIT_TRIANGLE, np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert A.lambda_min == pytest.approx(1.0)


# --- quadrature -------------------------------------------------------------


def test_integrate_matches_subdivided_sampling(rng):
    mesh = mesh_for("ellipse", 0.08)
    vals = rng.normal(size=mesh.n_nodes)
    _, sampled, w = oracles.subdivided_samples(mesh.nodes, mesh.triangles, vals[:, None], 4)
    assert integrate(NodalField(mesh, vals)) == pytest.approx(float(w @ sampled[:, 0]), rel=1e-12, abs=1e-12)
    cells = rng.normal(size=mesh.n_cells)
    assert integrate(CellField(mesh, cells)) == pytest.approx(float(mesh.cell_areas @ cells), rel=1e-12)


def test_gradient_of_affine_field_is_exact():
    mesh = mesh_for("square", 0.08)
    u = NodalField(mesh, 2.0 * mesh.nodes[:, 0] - 3.0 * mesh.nodes[:, 1] + 1.0)
    np.testing.assert_allclose(gradient(u), np.tile([2.0, -3.0], (mesh.n_cells, 1)), atol=1e-11)
    np.testing.assert_allclose(nodal_gradient(u), np.tile([2.0, -3.0], (mesh.n_nodes, 1)), atol=1e-11)


def test_l2_norm_is_exact_for_affine_data(rng):
    mesh = mesh_for("disk", 0.08)
    vals = rng.normal(size=mesh.n_nodes)
    # the edge-midpoint rule is exact for quadratics on triangles
    v = vals[mesh.triangles]
    mids = 0.5 * (v[:, [0, 1, 2]] + v[:, [1, 2, 0]])
    exact = float(mesh.cell_areas @ (mids**2).mean(axis=1))
    assert lp_norm_field(NodalField(mesh, vals), 2.0) == pytest.approx(math.sqrt(exact), rel=1e-12)
    assert lp_norm_field(NodalField(mesh, vals), np.inf) == pytest.approx(np.abs(vals).max())


# --- superlevel geometry ----------------------------------------------------


@pytest.mark.parametrize("a", [-0.5, 0.0, 0.3, 0.999, 1.0, 2.0])
def test_clipped_triangle_area_closed_form(a):
    psi = NodalField(UNIT_TRIANGLE, [0.0, 1.0, 0.0])  # psi = x
    expected = 0.5 * min(1.0, max(0.0, 1.0 - a)) ** 2
    assert superlevel_area(psi, a) == pytest.approx(expected, abs=1e-15)


def test_clipped_triangle_integral_closed_form():
    psi = NodalField(UNIT_TRIANGLE, [0.0, 1.0, 0.0])
    g = NodalField(UNIT_TRIANGLE, [0.0, 0.0, 1.0])  # g = y
    a = 0.4
    # int_{x > a} y over the unit triangle = int_a^1 (1 - x)^2 / 2 dx
    assert superlevel_integral(g, psi, a) == pytest.approx((1 - a) ** 3 / 6, abs=1e-15)


def test_superlevel_integral_matches_sampling_oracle_and_continuum():
    mesh = mesh_for("disk", 0.04)
    psi = poisson("disk", 0.04)
    r2 = np.sum(mesh.nodes**2, axis=1)
    g = NodalField(mesh, r2)
    exact_mesh = superlevel_integral(g, psi, 0.125)
    sampled = oracles.sampled_superlevel_integral(mesh.nodes, mesh.triangles, psi.values, r2, 0.125, m=64)
    assert exact_mesh == pytest.approx(sampled, rel=2e-4)
    assert exact_mesh == pytest.approx(math.pi / 8, rel=1e-3)


def test_superlevel_of_cell_field_uses_cut_fractions():
    psi = NodalField(UNIT_TRIANGLE, [0.0, 1.0, 0.0])
    g = CellField(UNIT_TRIANGLE, [3.0])
    assert superlevel_integral(g, psi, 0.5) == pytest.approx(3.0 * 0.125)


def test_one_dimensional_superlevel():
    mesh = build_mesh(DomainSpec.interval(-1.0, 1.0, 0.5))
    psi = NodalField(mesh, 1.0 - np.abs(mesh.nodes[:, 0]))
    assert superlevel_area(psi, 0.25) == pytest.approx(1.5)
    g = NodalField(mesh, mesh.nodes[:, 0] ** 0 * 2.0)
    assert superlevel_integral(g, psi, 0.25) == pytest.approx(3.0)


def test_calculator_matches_direct_functions():
    psi = poisson("ellipse", 0.08)
    mesh = psi.mesh
    g = NodalField(mesh, 1.0 + mesh.nodes[:, 0])
    calc = SuperlevelCalculator(psi)
    for a in np.linspace(0.0, psi.values.max(), 7):
        assert calc.area(a) == pytest.approx(superlevel_area(psi, a), abs=1e-14)
        assert calc.integral(g, a) == pytest.approx(superlevel_integral(g, psi, a), abs=1e-14)
    lo, hi = 0.02, 0.05
    measure, integral = calc.shell(g, lo, hi)
    assert measure == pytest.approx(superlevel_area(psi, lo) - superlevel_area(psi, hi), abs=1e-14)
    assert integral == pytest.approx(superlevel_integral(g, psi, lo) - superlevel_integral(g, psi, hi), abs=1e-14)


def test_fields_from_different_meshes_are_rejected():
    psi = poisson("ellipse", 0.08)
    other = NodalField(mesh_for("disk", 0.08), np.zeros(mesh_for("disk", 0.08).n_nodes))
    with pytest.raises(MeshMismatchError):
        superlevel_integral(other, psi, 0.0)
