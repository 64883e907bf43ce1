import math

import numpy as np
import pytest

import oracles
from conftest import mesh_for, poisson
from symm_compare.errors import EllipticityError, NonConvergenceError
from symm_compare.fem import (
    AffineH,
    CallbackH,
    SemilinearSpec,
    assemble,
    check_weak_max_principle,
    fixed_point_solve,
    load_vector,
    mass_matrix,
    mesh_peclet,
    require_converged,
    solve_linear,
    stiffness_matrix,
)
from symm_compare.mesh import CellField, CellMatrixField, DomainSpec, NodalField, TriMesh, build_mesh

SQUARE_TWO_CELLS = TriMesh(
    np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    np.array([[0, 1, 2], [0, 2, 3]]),
    np.array([0, 1, 2, 3]),
)


def test_stiffness_matches_hand_assembly():
    K = stiffness_matrix(CellMatrixField.scalar(SQUARE_TWO_CELLS, 1.0)).toarray()
    np.testing.assert_allclose(K, oracles.two_triangle_stiffness(), atol=1e-15)


def test_stiffness_annihilates_constants_and_is_symmetric():
    mesh = mesh_for("ellipse", 0.08)
    A = CellMatrixField(mesh, np.array([[1.3, 0.2], [0.2, 0.9]]))
    K = stiffness_matrix(A)
    np.testing.assert_allclose(K @ np.ones(mesh.n_nodes), 0.0, atol=1e-12)
    assert abs(K - K.T).max() < 1e-14


def test_mass_and_load_reproduce_the_area():
    mesh = mesh_for("disk", 0.08)
    ones = np.ones(mesh.n_nodes)
    assert ones @ (mass_matrix(mesh) @ ones) == pytest.approx(mesh.area, rel=1e-13)
    assert load_vector(1.0, mesh).sum() == pytest.approx(mesh.area, rel=1e-13)
    assert load_vector(CellField(mesh, np.ones(mesh.n_cells)), mesh).sum() == pytest.approx(mesh.area, rel=1e-13)
    # weighted mass with weight w integrates w exactly when tested against ones
    w = 1.0 + mesh.nodes[:, 0] ** 2
    assert ones @ (mass_matrix(mesh, w) @ ones) == pytest.approx(ones @ (mass_matrix(mesh) @ w), rel=1e-13)


@pytest.mark.parametrize("h, bound", [(0.04, 2e-4), (0.02, 5e-5)])
def test_poisson_on_the_disk(h, bound):
    u = poisson("disk", h)
    r2 = np.sum(u.mesh.nodes**2, axis=1)
    assert np.abs(u.values - (1 - r2) / 4).max() <= bound


def test_reaction_diffusion_matches_bessel_solution():
    mesh = mesh_for("disk", 0.04)
    u = solve_linear(CellMatrixField.scalar(mesh, 1.0), b=1.0, f=1.0).solution
    exact = oracles.bessel_reaction(np.linalg.norm(mesh.nodes, axis=1))
    assert np.abs(u.values - exact).max() <= 2e-4


@pytest.mark.parametrize("h", [0.02, 0.01])
def test_convection_diffusion_closed_form(h):
    c = 2.0
    mesh = build_mesh(DomainSpec.interval(0.0, 1.0, h))
    x = mesh.nodes[:, 0]
    u = solve_linear(CellMatrixField.scalar(mesh, 1.0), alpha=np.full((mesh.n_nodes, 1), c), f=1.0).solution
    exact = (x - np.expm1(c * x) / math.expm1(c)) / c
    assert np.abs(u.values - exact).max() <= 0.2 * h**2


def test_fixed_point_matches_one_dimensional_closed_form():
    mesh = build_mesh(DomainSpec.interval(-1.0, 1.0, 0.01))
    A = CellMatrixField.scalar(mesh, 1.0)
    H = CallbackH(lambda x, s, p: -0.5 * np.abs(p[:, 0]) - 1.0, q=1.0, sup_a=0.5, sup_abs_f=1.0)
    report = fixed_point_solve(SemilinearSpec(A, H), relaxation=1.0)
    assert report.converged
    assert report.final_residual <= 1e-9
    assert np.abs(report.solution.values - oracles.one_d_abs_gradient(mesh.nodes[:, 0])).max() <= 2e-5


def test_fixed_point_with_affine_h_is_the_linear_solve():
    mesh = mesh_for("ellipse", 0.08)
    A = CellMatrixField.scalar(mesh, 1.0)
    b = np.full(mesh.n_nodes, 0.5)
    direct = solve_linear(A, b=b, f=1.0).solution.values
    viaH = fixed_point_solve(SemilinearSpec(A, AffineH(None, b, 1.0))).solution.values
    np.testing.assert_allclose(viaH, direct, atol=1e-14)


def test_fixed_point_reports_non_convergence():
    mesh = mesh_for("disk", 0.08)
    A = CellMatrixField.scalar(mesh, 1.0)
    H = CallbackH(lambda x, s, p: -0.5 * np.sum(p**2, axis=1) - 1.0, q=2.0)
    report = fixed_point_solve(SemilinearSpec(A, H), relaxation=0.5, max_iter=2)
    assert not report.converged
    assert len(report.trace) == 2
    with pytest.raises(NonConvergenceError) as info:
        require_converged(report, "test solve")
    assert info.value.trace == report.trace


def test_semilinear_spec_validation():
    A = CellMatrixField.scalar(mesh_for("square", 0.08), 1.0)
    with pytest.raises(ValueError):
        SemilinearSpec(A, CallbackH(lambda x, s, p: s, q=2.5))
    with pytest.raises(ValueError):
        SemilinearSpec(A, CallbackH(lambda x, s, p: s, inf_b=-1.0))
    with pytest.raises(ValueError):
        SemilinearSpec(A, AffineH(None, -1.0, 0.0))
    with pytest.raises(ValueError):
        fixed_point_solve(SemilinearSpec(A, CallbackH(lambda x, s, p: s)), relaxation=0.0)


def test_negative_reaction_is_rejected():
    A = CellMatrixField.scalar(mesh_for("square", 0.08), 1.0)
    with pytest.raises(ValueError):
        assemble(A, b=-0.1)


def test_assembly_requires_matching_mesh():
    A = CellMatrixField.scalar(mesh_for("square", 0.08), 1.0)
    with pytest.raises(ValueError):
        assemble(A, mesh=mesh_for("disk", 0.08))


def test_ellipticity_is_enforced_before_assembly():
    with pytest.raises(EllipticityError):
        CellMatrixField.scalar(mesh_for("square", 0.08), 0.0)


def test_weak_maximum_principle_on_a_signed_problem():
    mesh = mesh_for("ellipse", 0.04)
    x = mesh.nodes
    A = CellMatrixField(mesh, np.array([[1.5, 0.3], [0.3, 1.0]]))
    f = NodalField(mesh, -(1.0 + np.sin(3 * x[:, 0]) ** 2))
    u = solve_linear(A, alpha=np.tile([0.4, -0.2], (mesh.n_nodes, 1)), b=0.5 + x[:, 1] ** 2, f=f).solution
    assert check_weak_max_principle(u) <= 1e-10


def test_convection_makes_the_operator_non_symmetric():
    mesh = mesh_for("square", 0.08)
    A = CellMatrixField.scalar(mesh, 1.0)
    assert assemble(A).is_symmetric
    assert not assemble(A, alpha=np.tile([1.0, 0.0], (mesh.n_nodes, 1))).is_symmetric


def test_peclet_number():
    mesh = SQUARE_TWO_CELLS
    A = CellMatrixField.scalar(mesh, 2.0)
    alpha = np.tile([3.0, 4.0], (4, 1))
    # |alpha| = 5, longest edge sqrt(2), lambda = 2
    assert mesh_peclet(A, alpha) == pytest.approx(5 * math.sqrt(2) / 4)
    assert mesh_peclet(A, None) == 0.0


def test_solve_report_serialises():
    report = solve_linear(CellMatrixField.scalar(mesh_for("square", 0.08), 1.0), f=1.0)
    data = report.to_dict()
    assert data["converged"] and data["iterations"] == 1
    assert set(data) == {"iterations", "final_residual", "converged", "trace"}
