"""Radially symmetric boundary-value problems on the ball ``B_R``.

Three forms share a coefficient set ``(lam, a, g)`` on a uniform grid:

* ``er_drift``:      ``-div(lam grad z) + a e_r . grad z = g``
* ``abs_gradient``:  ``-div(lam grad v) - a |grad v| = g``
* ``semilinear``:    ``-div(lam grad v) - a |grad v|^q + delta v = g``

all with ``v(R) = 0`` and zero flux at the centre.  The drift form is solved
by double quadrature with the integrating factor
``theta(r) = exp(-int_0^r a / lam)``; the semilinear form by damped Newton on
a node-centred finite-volume discretisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergenceError
from .profiles import DEFAULT_GRID_POINTS, RadialProfile, uniform_grid

FORMS = ("er_drift", "abs_gradient", "semilinear")


def _cumulative_trapezoid(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])


def _cumulative_weighted(y: np.ndarray, r: np.ndarray, n: int) -> np.ndarray:
    """``int_0^r y(s) s^(n-1) ds`` with ``y`` linear per segment and the weight integrated exactly."""
    ra, rb = r[:-1], r[1:]
    slope = np.diff(y) / np.diff(r)
    moment0 = (rb**n - ra**n) / n
    moment1 = (rb ** (n + 1) - ra ** (n + 1)) / (n + 1) - ra * moment0  # int (s - ra) s^(n-1)
    return np.concatenate([[0.0], np.cumsum(y[:-1] * moment0 + slope * moment1)])


@dataclass
class RadialProblem:
    n: int
    R: float
    lam: RadialProfile
    a: RadialProfile
    g: RadialProfile
    form: str = "er_drift"
    q: float = 1.0
    delta: float = 0.0
    grid_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self) -> None:
        if self.form not in FORMS:
            raise ValueError(f"unknown radial form {self.form!r}")
        if self.n < 1 or self.R <= 0:
            raise ValueError("need n >= 1 and R > 0")
        grid = self.grid
        if np.any(self.lam(grid) <= 0):
            raise ValueError("diffusion coefficient must be positive on the grid")
        if np.any(self.a(grid) < 0):
            raise ValueError("gradient coefficient must be non-negative on the grid")
        if self.form == "semilinear":
            if not self.delta > 0:
                raise ValueError("semilinear form needs delta > 0")
            if not 1.0 < self.q <= 2.0:
                raise ValueError("semilinear form needs q in (1, 2]; route q = 1 to abs_gradient")

    @property
    def grid(self) -> np.ndarray:
        return uniform_grid(self.R, self.grid_points)

    def replace(self, **changes) -> "RadialProblem":
        data = {k: getattr(self, k) for k in ("n", "R", "lam", "a", "g", "form", "q", "delta", "grid_points")}
        data.update(changes)
        return RadialProblem(**data)


@dataclass
class RadialSolution:
    profile: RadialProfile
    derivative: np.ndarray
    path: str
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)

    def trace(self) -> dict:
        return {"path": self.path, "iterations": self.iterations, "residuals": list(self.residuals)}


def theta_factor(lam: RadialProfile, a: RadialProfile, grid: np.ndarray | None = None) -> RadialProfile:
    """``theta(r) = exp(-int_0^r a/lam)`` by cumulative trapezoid."""
    grid = uniform_grid(lam.R) if grid is None else np.asarray(grid, dtype=float)
    rate = a(grid) / lam(grid)
    return RadialProfile(lam.n, grid, np.exp(-_cumulative_trapezoid(rate, grid)))


def solve_er_drift(problem: RadialProblem) -> RadialSolution:
    """Quadrature solution of the drift form via the flux identity.

    ``theta r^(n-1) lam z'(r) = -int_0^r theta g s^(n-1) ds`` and
    ``z(r) = int_r^R (-z')``.
    """
    r = problem.grid
    n = problem.n
    theta = theta_factor(problem.lam, problem.a, r).values
    lam = problem.lam(r)
    g = problem.g(r)
    flux = _cumulative_weighted(theta * g, r, n)
    deriv = np.zeros_like(r)
    pos = r > 0
    deriv[pos] = -flux[pos] / (theta[pos] * r[pos] ** (n - 1) * lam[pos])
    tail = _cumulative_trapezoid(-deriv[::-1], -r[::-1])[::-1]  # int_r^R (-z')
    values = tail.copy()
    values[-1] = 0.0
    return RadialSolution(RadialProfile(n, r, values), deriv, "quadrature")


# ---------------------------------------------------------------------------
# Finite-volume discretisation


class _FiniteVolume:
    """Node-centred finite volumes on the uniform grid, unknowns at ``r_0 .. r_{J-1}``."""

    def __init__(self, problem: RadialProblem):
        self.problem = problem
        r = problem.grid
        self.r = r
        n = problem.n
        dr = r[1] - r[0]
        self.dr = dr
        m = len(r) - 1  # number of unknowns; v(r_J) = 0
        self.m = m
        mid = 0.5 * (r[:-1] + r[1:])
        faces_lo = np.concatenate([[0.0], mid[: m - 1]])
        faces_hi = mid[:m]
        self.volume = (faces_hi**n - faces_lo**n) / n
        kappa = mid ** (n - 1) * problem.lam(mid) / dr  # face conductances, length m
        main = np.zeros(m)
        main += kappa[:m]
        main[1:] += kappa[: m - 1]
        lower = -kappa[: m - 1]
        upper = -kappa[: m - 1]
        stiff = sp.diags([lower, main, upper], [-1, 0, 1], shape=(m, m), format="csr")
        self.stiffness = sp.diags(1.0 / self.volume) @ stiff  # per unit volume
        # central difference for v'(r_i); zero at the centre by symmetry
        cd_lower = np.full(m - 1, -0.5 / dr)
        cd_upper = np.full(m - 1, 0.5 / dr)
        self.deriv = sp.diags([cd_lower, cd_upper], [-1, 1], shape=(m, m), format="csr").tolil()
        self.deriv[0, :] = 0.0
        self.deriv = self.deriv.tocsr()
        self.a = problem.a(r[:m])
        self.g = problem.g(r[:m])

    def residual(self, v: np.ndarray, q: float, delta: float, sign: float = -1.0) -> np.ndarray:
        """Pointwise residual; ``sign=-1`` gives ``-a|v'|^q``, ``sign=+1`` gives ``+a v'`` (drift)."""
        dv = self.deriv @ v
        if sign > 0:
            grad_term = self.a * dv
        else:
            grad_term = -self.a * np.abs(dv) ** q
        return self.stiffness @ v + grad_term + delta * v - self.g

    def jacobian(self, v: np.ndarray, q: float, delta: float) -> sp.csr_matrix:
        dv = self.deriv @ v
        slope = q * np.abs(dv) ** (q - 1.0) * np.sign(dv) if q > 1 else np.sign(dv)
        jac = self.stiffness - sp.diags(self.a * slope) @ self.deriv
        if delta:
            jac = jac + delta * sp.identity(self.m, format="csr")
        return jac.tocsc()

    def linear_solve(self, delta: float) -> np.ndarray:
        mat = self.stiffness + delta * sp.identity(self.m, format="csr")
        return spla.spsolve(mat.tocsc(), self.g)

    def full(self, v: np.ndarray) -> np.ndarray:
        return np.concatenate([v, [0.0]])


def _newton(problem: RadialProblem, q: float, delta: float, tol: float = 1e-10,
            max_iter: int = 200) -> RadialSolution:
    fv = _FiniteVolume(problem)
    v = fv.linear_solve(delta)
    res = fv.residual(v, q, delta)
    history = [float(np.abs(res).max())]
    it = 0
    while history[-1] > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"radial Newton stalled after {max_iter} iterations (residual {history[-1]:.3e})", history
            )
        it += 1
        step = spla.spsolve(fv.jacobian(v, q, delta), -res)
        norm0 = float(np.linalg.norm(res))
        lam = 1.0
        while True:
            trial = v + lam * step
            trial_res = fv.residual(trial, q, delta)
            if np.linalg.norm(trial_res) <= (1.0 - 1e-4 * lam) * norm0 or lam < 1e-10:
                break
            lam *= 0.5
        v, res = trial, trial_res
        history.append(float(np.abs(res).max()))
    values = fv.full(v)
    deriv = np.concatenate([fv.deriv @ v, [(values[-1] - values[-2]) / fv.dr]])
    return RadialSolution(RadialProfile(problem.n, fv.r, values), deriv, "newton", it, history)


def solve_abs_gradient(problem: RadialProblem, monotone_tol: float = 1e-10) -> RadialSolution:
    """``-div(lam grad v) - a|grad v| = g``: quadrature when ``v' <= 0``, Newton otherwise."""
    quad = solve_er_drift(problem.replace(form="er_drift"))
    if np.all(quad.derivative <= monotone_tol):
        return quad
    return _newton(problem.replace(form="abs_gradient"), 1.0, 0.0)


def solve_semilinear_radial(problem: RadialProblem, tol: float = 1e-10,
                            max_iter: int = 200) -> RadialSolution:
    """Damped Newton for ``-div(lam grad v) - a|grad v|^q + delta v = g``."""
    if problem.form != "semilinear":
        problem = problem.replace(form="semilinear")
    return _newton(problem, problem.q, problem.delta, tol, max_iter)


def solve(problem: RadialProblem) -> RadialSolution:
    if problem.form == "er_drift":
        return solve_er_drift(problem)
    if problem.form == "abs_gradient":
        return solve_abs_gradient(problem)
    return solve_semilinear_radial(problem)


def radial_residual(profile: RadialProfile, problem: RadialProblem) -> float:
    """Discrete L2 norm ``(dr * sum_i w_i^2)^(1/2)`` of the cell-integrated residual ``w``.

    ``w_i`` is the finite-volume residual of ``problem`` integrated over the
    control volume of node ``i`` (the weak form tested against that volume).
    """
    fv = _FiniteVolume(problem)
    v = profile(fv.r)[: fv.m]
    if problem.form == "er_drift":
        res = fv.residual(v, 1.0, 0.0, sign=+1.0)
    elif problem.form == "abs_gradient":
        res = fv.residual(v, 1.0, 0.0)
    else:
        res = fv.residual(v, problem.q, problem.delta)
    return float(np.sqrt(fv.dr) * np.linalg.norm(res * fv.volume))
