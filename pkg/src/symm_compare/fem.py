"""P1 Galerkin solver for ``-div(A grad u) + H(x, u, grad u) = 0`` with zero Dirichlet data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticityError, NonConvergenceError, SolverFailureError
from .mesh import CellField, CellMatrixField, NodalField, ScalarField, TriMesh, gradient

# Integrals of products of barycentric coordinates on the reference simplex,
# divided by the simplex measure.
_MASS = {
    1: np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]]),
    2: np.array([[1 / 6, 1 / 12, 1 / 12], [1 / 12, 1 / 6, 1 / 12], [1 / 12, 1 / 12, 1 / 6]]),
}


def _triple_mass(dim: int) -> np.ndarray:
    """``W[i, j, k] = (1/|T|) * integral of l_i l_j l_k`` over a simplex."""
    k = dim + 1
    w = np.empty((k, k, k))
    for i in range(k):
        for j in range(k):
            for m in range(k):
                powers = np.bincount([i, j, m], minlength=k)
                num = math.factorial(dim) * np.prod([math.factorial(p) for p in powers])
                w[i, j, m] = num / math.factorial(3 + dim)
    return w


_TRIPLE = {1: _triple_mass(1), 2: _triple_mass(2)}


def _scatter(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    cells = mesh.triangles
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return mat.tocsr()


def _nodal_values(mesh: TriMesh, data, name: str) -> np.ndarray | None:
    if data is None:
        return None
    if isinstance(data, NodalField):
        if data.mesh is not mesh:
            raise ValueError(f"{name} lives on a different mesh")
        return data.values
    arr = np.asarray(data, dtype=float)
    return np.broadcast_to(arr, (mesh.n_nodes,) + arr.shape[1:] if arr.ndim > 1 else (mesh.n_nodes,)).copy()


def stiffness_matrix(A: CellMatrixField) -> sp.csr_matrix:
    mesh = A.mesh
    grads = mesh.basis_gradients
    local = np.einsum("tid,tde,tje->tij", grads, A.matrices, grads) * mesh.cell_areas[:, None, None]
    return _scatter(mesh, local)


def mass_matrix(mesh: TriMesh, weight=None) -> sp.csr_matrix:
    """Consistent mass matrix, optionally weighted by a nodal (affine) coefficient."""
    vols = mesh.cell_areas
    if weight is None:
        local = vols[:, None, None] * _MASS[mesh.dim][None]
    else:
        w = _nodal_values(mesh, weight, "weight")[mesh.triangles]
        local = vols[:, None, None] * np.einsum("ijk,tk->tij", _TRIPLE[mesh.dim], w)
    return _scatter(mesh, local)


def convection_matrix(mesh: TriMesh, alpha: np.ndarray) -> sp.csr_matrix:
    """``C[i, j] = integral of (alpha . grad phi_j) phi_i`` for a nodal vector field."""
    alpha = np.asarray(alpha, dtype=float).reshape(mesh.n_nodes, mesh.dim)
    weighted = np.einsum("ik,tkd->tid", _MASS[mesh.dim], alpha[mesh.triangles]) * mesh.cell_areas[:, None, None]
    local = np.einsum("tid,tjd->tij", weighted, mesh.basis_gradients)
    return _scatter(mesh, local)


def load_vector(f: ScalarField | np.ndarray | float, mesh: TriMesh) -> np.ndarray:
    """Exact ``integral f phi_i`` for nodal or cell-constant ``f``."""
    if isinstance(f, CellField):
        share = f.values * mesh.cell_areas / mesh.triangles.shape[1]
        out = np.zeros(mesh.n_nodes)
        for k in range(mesh.triangles.shape[1]):
            np.add.at(out, mesh.triangles[:, k], share)
        return out
    values = _nodal_values(mesh, f, "f")
    return mass_matrix(mesh) @ values


@dataclass
class LinearSystem:
    """Assembled operator; ``matrix`` is restricted to interior nodes."""

    mesh: TriMesh
    full: sp.csr_matrix
    interior: np.ndarray

    @property
    def matrix(self) -> sp.csr_matrix:
        idx = self.interior
        return self.full[idx][:, idx].tocsc()

    @property
    def is_symmetric(self) -> bool:
        diff = self.full - self.full.T
        return diff.nnz == 0 or float(abs(diff).max()) <= 1e-12 * max(1.0, float(abs(self.full).max()))


def assemble(A: CellMatrixField, alpha=None, b=None, mesh: TriMesh | None = None) -> LinearSystem:
    """Galerkin matrix of ``-div(A grad .) + alpha . grad . + b .`` with Dirichlet rows removed."""
    mesh = mesh or A.mesh
    if A.mesh is not mesh:
        raise ValueError("A lives on a different mesh")
    if A.smallest_eigenvalues().min() <= 0:
        raise EllipticityError("A is not uniformly elliptic")
    full = stiffness_matrix(A)
    if alpha is not None:
        full = full + convection_matrix(mesh, _nodal_values(mesh, alpha, "alpha"))
    if b is not None:
        bv = _nodal_values(mesh, b, "b")
        if np.any(bv < 0):
            raise ValueError("zeroth-order coefficient b must be non-negative")
        full = full + mass_matrix(mesh, bv)
    return LinearSystem(mesh, full.tocsr(), mesh.interior_nodes)


@dataclass
class SolveReport:
    solution: NodalField
    iterations: int
    final_residual: float
    converged: bool
    trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "trace": list(self.trace),
        }


def _energy_norm(lu, sym: sp.spmatrix, r: np.ndarray) -> float:
    """Energy norm of the error implied by residual ``r``."""
    e = lu.solve(r)
    return math.sqrt(abs(float(e @ (sym @ e))))


def _factor(matrix: sp.csc_matrix):
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:  # exactly singular
        raise SolverFailureError(f"singular system: {exc}") from exc
    return lu


def solve_linear(A: CellMatrixField, alpha=None, b=None, f=0.0, mesh: TriMesh | None = None,
                 tol: float = 1e-10) -> SolveReport:
    """Solve ``-div(A grad u) + alpha . grad u + b u = f`` with ``u = 0`` on the boundary."""
    system = assemble(A, alpha, b, mesh)
    mesh = system.mesh
    rhs = load_vector(f, mesh)[system.interior]
    mat = system.matrix
    lu = _factor(mat)
    u_int = lu.solve(rhs)
    sym = 0.5 * (mat + mat.T)
    res = _energy_norm(lu, sym, rhs - mat @ u_int)
    trace = [res]
    for _ in range(3):  # iterative refinement if needed
        scale = max(1.0, math.sqrt(abs(float(u_int @ (sym @ u_int)))))
        if res <= tol * scale:
            break
        u_int = u_int + lu.solve(rhs - mat @ u_int)
        res = _energy_norm(lu, sym, rhs - mat @ u_int)
        trace.append(res)
    if not np.all(np.isfinite(u_int)):
        raise SolverFailureError("linear solve produced non-finite values")
    u = np.zeros(mesh.n_nodes)
    u[system.interior] = u_int
    scale = max(1.0, math.sqrt(abs(float(u_int @ (sym @ u_int)))))
    return SolveReport(NodalField(mesh, u), 1, res, res <= tol * scale, trace)


# ---------------------------------------------------------------------------
# Semilinear problems

# H(x, s, p) evaluated per cell: x (T, d), s (T,), p (T, d) -> (T,)
HCallback = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class AffineH:
    """``H(x, s, p) = alpha(x) . p + b(x) s - f(x)``."""

    alpha: np.ndarray | None = None
    b: NodalField | np.ndarray | float | None = None
    f: ScalarField | np.ndarray | float = 0.0


@dataclass
class CallbackH:
    """General ``H`` together with the declared structural bounds.

    The bounds describe ``H(x, s, p) >= -a |p|^q + b s - f`` and are recorded
    for reporting; the solver itself only evaluates ``func``.
    """

    func: HCallback
    q: float = 1.0
    sup_a: float = 0.0
    inf_b: float = 0.0
    sup_abs_f: float = 0.0


@dataclass
class SemilinearSpec:
    A: CellMatrixField
    H: Union[AffineH, CallbackH]

    def __post_init__(self) -> None:
        if isinstance(self.H, CallbackH):
            if not 1.0 <= self.H.q <= 2.0:
                raise ValueError(f"growth exponent q must lie in [1, 2], got {self.H.q}")
            if self.H.inf_b < 0:
                raise ValueError("declared inf b must be non-negative")
        elif self.H.b is not None:
            bv = _nodal_values(self.A.mesh, self.H.b, "b")
            if np.any(bv < 0):
                raise ValueError("b must be non-negative nodewise")

    @property
    def mesh(self) -> TriMesh:
        return self.A.mesh


def evaluate_h(H: CallbackH, u: NodalField) -> np.ndarray:
    """Per-cell values of ``H(x, u, grad u)`` at centroids (cell mean of u, exact gradient)."""
    mesh = u.mesh
    values = np.asarray(H.func(mesh.centroids, u.cell_values().mean(axis=1), gradient(u)), dtype=float)
    return np.broadcast_to(values, (mesh.n_cells,)).astype(float)


def fixed_point_solve(spec: SemilinearSpec, relaxation: float = 0.5, max_iter: int = 500,
                      tol: float = 1e-10, initial: NodalField | None = None) -> SolveReport:
    """Relaxed iteration ``u <- (1 - theta) u + theta T(u)``.

    ``T(v)`` solves ``-div(A grad u) + H(x, v, grad v) = 0``.  Convergence is
    declared when successive iterates differ by at most ``tol`` in the energy
    norm of ``-div(A grad .)``; a non-converged run is reported, not raised.
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    if isinstance(spec.H, AffineH):
        return solve_linear(spec.A, spec.H.alpha, spec.H.b, spec.H.f, tol=tol)

    mesh = spec.mesh
    system = assemble(spec.A)
    interior = system.interior
    mat = system.matrix
    lu = _factor(mat)

    def apply_t(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h_cells = evaluate_h(spec.H, NodalField(mesh, v))
        load = load_vector(CellField(mesh, h_cells), mesh)[interior]
        out = np.zeros(mesh.n_nodes)
        out[interior] = lu.solve(-load)
        return out, load

    u = np.zeros(mesh.n_nodes) if initial is None else initial.values.copy()
    u[mesh.boundary_nodes] = 0.0
    trace: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        tu, _ = apply_t(u)
        step = relaxation * (tu - u)
        u = u + step
        diff = math.sqrt(abs(float(step[interior] @ (mat @ step[interior]))))
        trace.append(diff)
        if not math.isfinite(diff):
            raise SolverFailureError("fixed-point iteration diverged to non-finite values")
        if diff <= tol:
            converged = True
            break

    _, load = apply_t(u)
    residual = _energy_norm(lu, mat, mat @ u[interior] + load)
    return SolveReport(NodalField(mesh, u), iterations, residual, converged and residual <= 10 * tol, trace)


def require_converged(report: SolveReport, what: str) -> SolveReport:
    if not report.converged:
        raise NonConvergenceError(f"{what} did not converge (residual {report.final_residual:.3e})",
                                  report.trace)
    return report


def check_weak_max_principle(u: NodalField, data=None) -> float:
    """Largest nodal value of ``u``; non-positive when ``f <= 0`` and ``b >= 0``."""
    return float(u.values.max())


def mesh_peclet(A: CellMatrixField, alpha) -> float:
    """Largest cell Peclet number ``|alpha| h_T / (2 lambda_min(A_T))``."""
    mesh = A.mesh
    if alpha is None:
        return 0.0
    alpha = np.asarray(alpha, dtype=float).reshape(mesh.n_nodes, mesh.dim)
    speed = np.linalg.norm(alpha[mesh.triangles], axis=2).max(axis=1)
    size = mesh.edge_lengths.max(axis=1)
    return float((speed * size / (2.0 * A.smallest_eigenvalues())).max())
