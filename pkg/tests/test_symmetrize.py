import json
import math

import numpy as np
import pytest

import oracles
from conftest import mesh_for, poisson
from symm_compare.errors import ConstructionViolationError, InvalidFieldError
from symm_compare.fem import solve_linear
from symm_compare.mesh import CellField, CellMatrixField, NodalField, gradient, superlevel_area
from symm_compare.profiles import RadialProfile
from symm_compare.symmetrize import (
    SymmetrizedProblem,
    build_ladder,
    delta_hat,
    eta_gap,
    flux_F,
    hat_a,
    hat_f,
    hat_lambda,
    hat_psi,
    key1_margins,
    key2_check,
    surface_average,
)


def cells(mesh, values):
    return CellField(mesh, np.broadcast_to(np.asarray(values, dtype=float), (mesh.n_cells,)))


@pytest.fixture(scope="module")
def ellipse_problem():
    u = poisson("ellipse", 0.04)
    return u, build_ladder(u, 128)


# --- ladder -----------------------------------------------------------------


def test_ladder_radii_match_exact_superlevel_areas(ellipse_problem):
    u, ladder = ellipse_problem
    exact = np.array([superlevel_area(u, a) for a in ladder.levels])
    np.testing.assert_allclose(math.pi * ladder.radii**2, exact, rtol=1e-12, atol=0)
    assert np.all(np.diff(ladder.radii) < 0)
    assert ladder.levels[0] == 0.0


def test_ladder_areas_step_evenly(ellipse_problem):
    u, ladder = ellipse_problem
    step = u.mesh.area / 129
    np.testing.assert_allclose(-np.diff(ladder.areas), step, rtol=1e-9)


def test_ladder_half_width_default(ellipse_problem):
    u, ladder = ellipse_problem
    assert ladder.half_width == pytest.approx(u.values.max() / (4 * 128))


def test_ladder_rejects_invalid_psi():
    u = poisson("ellipse", 0.08)
    mesh = u.mesh
    with pytest.raises(InvalidFieldError):
        build_ladder(u.with_values(u.values + 0.01))
    with pytest.raises(InvalidFieldError):
        build_ladder(u.with_values(-u.values))
    with pytest.raises(ValueError):
        build_ladder(u, K=8)
    dented = u.values.copy()
    dented[mesh.interior_nodes[0]] = 0.0
    with pytest.raises(InvalidFieldError):
        build_ladder(u.with_values(dented))


# --- surface averages -------------------------------------------------------


def test_surface_average_matches_contour_quadrature(ellipse_problem):
    u, ladder = ellipse_problem
    x = u.mesh.nodes
    weight = NodalField(u.mesh, 1.0 + x[:, 0] + 0.5 * x[:, 1])
    for k in (5, 40, 80, 110):
        oracle = oracles.contour_average(x, u.mesh.triangles, u.values, weight.values, ladder.levels[k])
        assert surface_average(weight, u, ladder, k) == pytest.approx(oracle, rel=1e-3)


def test_surface_average_requires_its_own_psi(ellipse_problem):
    u, ladder = ellipse_problem
    other = poisson("ellipse", 0.08)
    with pytest.raises(ValueError):
        surface_average(other, other, ladder, 3)


def test_constant_coefficients_are_reproduced(ellipse_problem):
    u, ladder = ellipse_problem
    mesh = u.mesh
    lam = hat_lambda(u, cells(mesh, 2.5), ladder)
    np.testing.assert_allclose(lam.values, 2.5, rtol=1e-12)
    f = hat_f(u, cells(mesh, -0.7), ladder)
    np.testing.assert_allclose(f.values, -0.7, rtol=1e-12)
    for q in (1.0, 1.5, 2.0):
        a = hat_a(u, cells(mesh, 0.4), cells(mesh, 2.5), lam, ladder, q)
        np.testing.assert_allclose(a.values, 0.4, rtol=1e-10)


def test_non_positive_gradient_coefficient_gives_zero(ellipse_problem):
    u, ladder = ellipse_problem
    mesh = u.mesh
    lam = hat_lambda(u, cells(mesh, 1.0), ladder)
    for q in (1.0, 1.5, 2.0):
        a = hat_a(u, cells(mesh, -0.3), cells(mesh, 1.0), lam, ladder, q)
        np.testing.assert_array_equal(a.values, 0.0)


def test_radial_coefficient_on_the_disk_is_transported():
    u = poisson("disk", 0.04)
    ladder = build_ladder(u, 128)
    r2 = np.sum(u.mesh.nodes**2, axis=1)
    lam = hat_lambda(u, NodalField(u.mesh, 1.0 + r2), ladder)
    rho = ladder.radii[1:]
    assert np.abs(lam(rho) - (1.0 + rho**2)).max() <= 5e-3


def test_lambda_hat_bounds_and_inverse_conservation(ellipse_problem):
    u, ladder = ellipse_problem
    mesh = u.mesh
    lam_vals = 1.0 + 0.5 * mesh.centroids[:, 0] ** 2 + 0.3 * np.sin(4 * mesh.centroids[:, 1])
    lam = hat_lambda(u, CellField(mesh, lam_vals), ladder)
    at_levels = lam(ladder.radii)
    assert at_levels.min() >= lam_vals.min() - 1e-3
    assert at_levels.max() <= lam_vals.max() + 1e-3
    conserved = lam.ball_integral(lambda v: 1.0 / v)
    assert conserved == pytest.approx(float(mesh.cell_areas @ (1.0 / lam_vals)), rel=1e-2)


def test_hat_a_q1_matches_contour_quadrature(ellipse_problem):
    u, ladder = ellipse_problem
    x = u.mesh.nodes
    a = NodalField(u.mesh, 0.3 + 0.2 * x[:, 0] ** 2)
    lam = NodalField(u.mesh, 1.0 + 0.5 * x[:, 0] ** 2)
    lam_hat = hat_lambda(u, lam, ladder)
    profile = hat_a(u, a, lam, lam_hat, ladder, 1.0)
    for k in (5, 40, 80, 120):
        level = ladder.levels[k]
        inverse = oracles.contour_average(x, u.mesh.triangles, u.values, 1.0 / lam.values, level)
        mean = oracles.contour_average(x, u.mesh.triangles, u.values, a.values**2 / lam.values, level)
        oracle = math.sqrt(mean / inverse)
        assert profile(ladder.radii[k]) == pytest.approx(oracle, rel=3e-2)


def test_hat_a_power_mean_stays_below_the_band_maximum(ellipse_problem):
    u, ladder = ellipse_problem
    mesh = u.mesh
    a = CellField(mesh, 0.3 + 0.2 * mesh.centroids[:, 0] ** 2)
    lam = CellField(mesh, 1.0 + 0.5 * mesh.centroids[:, 1] ** 2)
    lam_hat = hat_lambda(u, lam, ladder)
    top = hat_a(u, a, lam, lam_hat, ladder, 2.0)(ladder.radii)
    near = hat_a(u, a, lam, lam_hat, ladder, 2.0 - 1e-3)(ladder.radii)
    assert np.all(np.isfinite(near)) and near.min() > 0
    assert (top - near).min() >= -1e-6


def test_hat_a_rejects_exponent_outside_range(ellipse_problem):
    u, ladder = ellipse_problem
    one = cells(u.mesh, 1.0)
    with pytest.raises(ValueError):
        hat_a(u, one, one, hat_lambda(u, one, ladder), ladder, 2.5)


def test_hat_f_conserves_the_integral(ellipse_problem):
    u, ladder = ellipse_problem
    mesh = u.mesh
    f = CellField(mesh, 1.0 + 0.5 * mesh.centroids[:, 0] + np.cos(3 * mesh.centroids[:, 1]))
    prof = hat_f(u, f, ladder)
    assert prof.ball_integral() == pytest.approx(float(mesh.cell_areas @ f.values), rel=1e-2)
    at_levels = prof(ladder.radii)
    assert at_levels.min() >= f.values.min() - 1e-3
    assert at_levels.max() <= f.values.max() + 1e-3


# --- flux and psi_hat -------------------------------------------------------


def test_identity_flux_on_the_disk():
    u = poisson("disk", 0.04)
    ladder = build_ladder(u, 128)
    one = RadialProfile(2, [0.0, ladder.R], [1.0, 1.0])
    F = flux_F(u, CellMatrixField.scalar(u.mesh, 1.0), ladder, one, cells(u.mesh, -1.0))
    np.testing.assert_allclose(F(ladder.radii), -ladder.radii / 2, rtol=1e-12, atol=1e-15)
    assert F(0.0) == 0.0
    psi_hat = hat_psi(F)
    np.testing.assert_allclose(psi_hat.values, (ladder.R**2 - psi_hat.r**2) / 4, atol=1e-12)


def test_hat_psi_examples():
    F = RadialProfile(2, np.linspace(0, 1, 11), -np.linspace(0, 1, 11) / 2)
    psi = hat_psi(F)
    np.testing.assert_allclose(psi.values, (1 - psi.r**2) / 4, atol=1e-15)
    assert psi.values[-1] == 0.0
    zero = hat_psi(RadialProfile(2, [0.0, 1.0], [0.0, 0.0]))
    np.testing.assert_array_equal(zero.values, 0.0)
    generic = RadialProfile(2, [0.0, 0.3, 1.0], [0.0, -2.0, -0.5])
    psi = hat_psi(generic)
    assert psi.values[0] == pytest.approx(0.5 * 0.3 * 2.0 + 0.5 * 0.7 * 2.5)
    assert np.all(np.diff(psi.values) <= 0)


def test_flux_routes_agree_on_a_solved_drift_problem():
    mesh = mesh_for("ellipse", 0.04)
    A = CellMatrixField.scalar(mesh, 1.0)
    alpha = np.tile([0.5, 0.0], (mesh.n_nodes, 1))
    u = solve_linear(A, alpha, np.full(mesh.n_nodes, 0.2), 1.0).solution
    div_source = 0.5 * gradient(u)[:, 0] + 0.2 * u.cell_values().mean(axis=1) - 1.0
    ladder = build_ladder(u, 128)
    G = hat_lambda(u, cells(mesh, 1.0), ladder)
    from_source = flux_F(u, A, ladder, G, CellField(mesh, div_source))(ladder.radii)
    from_contours = flux_F(u, A, ladder, G)(ladder.radii)
    assert np.abs(from_source - from_contours).max() <= 5e-2 * np.abs(from_source).max()


def test_positive_flux_is_a_construction_violation(ellipse_problem):
    u, ladder = ellipse_problem
    G = RadialProfile(2, [0.0, ladder.R], [1.0, 1.0])
    with pytest.raises(ConstructionViolationError):
        flux_F(u, CellMatrixField.scalar(u.mesh, 1.0), ladder, G, cells(u.mesh, 1.0))


# --- constructive constants -------------------------------------------------


def test_delta_hat_and_eta_in_the_identity_case():
    u = poisson("disk", 0.04)
    ladder = build_ladder(u, 128)
    one = RadialProfile(2, [0.0, ladder.R], [1.0, 1.0])
    psi_hat = hat_psi(flux_F(u, CellMatrixField.scalar(u.mesh, 1.0), ladder, one, cells(u.mesh, -1.0)))
    delta, raw = delta_hat(psi_hat, ladder, 0.7)
    assert 0 < delta <= 0.7
    assert raw == pytest.approx(1.0, abs=2e-2)
    assert abs(eta_gap(psi_hat, ladder)) <= 2e-2


def test_delta_hat_on_the_ellipse_is_below_inf_b(ellipse_problem):
    u, ladder = ellipse_problem
    G = hat_lambda(u, cells(u.mesh, 1.0), ladder)
    psi_hat = hat_psi(flux_F(u, CellMatrixField.scalar(u.mesh, 1.0), ladder, G, cells(u.mesh, -1.0)))
    delta, raw = delta_hat(psi_hat, ladder, 1.0)
    assert 0 < delta < 1.0
    assert eta_gap(psi_hat, ladder) > 0
    assert key1_margins(psi_hat, ladder)[1:].min() > 0
    with pytest.raises(ValueError):
        delta_hat(psi_hat, ladder, 0.0)


def test_delta_hat_detects_vanishing_psi_hat(ellipse_problem):
    _, ladder = ellipse_problem
    with pytest.raises(ConstructionViolationError):
        delta_hat(RadialProfile(2, [0.0, ladder.R], [0.0, 0.0]), ladder, 1.0)


def test_key2_on_a_constant_coefficient_ellipse():
    from symm_compare.fem import CallbackH, SemilinearSpec, fixed_point_solve

    mesh = mesh_for("ellipse", 0.04)
    A = CellMatrixField.scalar(mesh, 1.0)
    a_const = 0.3
    H = CallbackH(lambda x, s, p: -a_const * np.linalg.norm(p, axis=1) - 1.0, q=1.0)
    u = fixed_point_solve(SemilinearSpec(A, H)).solution
    ladder = build_ladder(u, 128, half_width=u.values.max() / 256)
    one = cells(mesh, 1.0)
    a = cells(mesh, a_const)
    div_source = CellField(mesh, -a_const * np.linalg.norm(gradient(u), axis=1) - 1.0)
    lam_hat = hat_lambda(u, one, ladder)
    a_hat = hat_a(u, a, one, lam_hat, ladder, 1.0)
    f_hat = hat_f(u, one, ladder)
    F = flux_F(u, A, ladder, lam_hat, div_source)
    result = key2_check(ladder, div_source, a, one, 1.0, lam_hat, a_hat, f_hat, F, tol=5e-2)
    assert np.nanmin(result.margin_exists) >= -5e-2
    assert result.failing_levels == []


def test_symmetrized_problem_export(tmp_path):
    prof = RadialProfile(2, [0.0, 1.0], [1.0, 2.0])
    problem = SymmetrizedProblem(2, 1.0, 1.5, prof, prof, prof, delta_hat=0.4)
    problem.export(tmp_path / "s.csv", tmp_path / "s.json")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "r,lambda_hat,a_hat,f_hat"
    assert len(rows) == 513
    sidecar = json.loads((tmp_path / "s.json").read_text())
    assert sidecar == {"n": 2, "R": 1.0, "q": 1.5, "delta_hat": 0.4, "eta": None}
