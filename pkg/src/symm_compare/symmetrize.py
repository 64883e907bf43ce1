"""Level-set symmetrization of an elliptic operator around a reference function ``psi``.

Starting from ``psi > 0`` on a mesh (zero on the boundary) the module builds a
ladder of levels ``a_k`` with superlevel sets ``{psi > a_k}`` of decreasing
measure, maps every level to the radius ``rho`` of the ball with the same
measure, and transports level-set averages of the coefficients to that radius.

Level-set averages weighted by ``|grad psi|^-1`` are computed through the
co-area formula as the ratio of two shell integrals over a thin band
``a - da < psi <= a + da``; the band integrals are exact for P1 data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConstructionViolationError, DegenerateLevelError, InvalidFieldError
from .mesh import (
    CellField,
    CellMatrixField,
    NodalField,
    ScalarField,
    SuperlevelCalculator,
    gradient,
)
from .profiles import (
    RadialProfile,
    equimeasurable_radius,
    merge_grids,
    unit_ball_volume,
    unit_sphere_area,
    uniform_grid,
    write_profiles_csv,
)
from .rearrange import AffineDistribution, StepDistribution

MIN_LADDER = 16
DEGENERATE_FRACTION = 1e-12


@dataclass
class LevelLadder:
    """Levels ``0 = a_0 < ... < a_K < M`` of ``psi`` with their superlevel measures and radii."""

    psi: NodalField
    n: int
    levels: np.ndarray
    areas: np.ndarray
    radii: np.ndarray
    half_width: float
    max_value: float
    R: float
    calculator: SuperlevelCalculator = field(repr=False)
    dropped: set[int] = field(default_factory=set)

    @property
    def size(self) -> int:
        return len(self.levels)

    def shell_ratio(self, g: ScalarField | None, k: int) -> float:
        """Band average ``int_band g / |band|`` around level ``k``; widened once if degenerate."""
        a = self.levels[k]
        total = self.calculator.mesh.area
        for width in (self.half_width, 4.0 * self.half_width):
            measure, integral = self.calculator.shell(g, a - width, a + width)
            if measure > DEGENERATE_FRACTION * total:
                return integral / measure if g is not None else 1.0
        raise DegenerateLevelError(f"shell around level {a:.6g} has no measure")

    def band_cells(self, k: int) -> np.ndarray:
        a = self.levels[k]
        for width in (self.half_width, 4.0 * self.half_width):
            cells = self.calculator.band_cells(a - width, a + width)
            if len(cells):
                return cells
        raise DegenerateLevelError(f"no cells meet the band around level {a:.6g}")

    def profile(self, values: np.ndarray, at_centre: float | None = None) -> RadialProfile:
        """Radial profile through ``(rho_k, values_k)``, skipping dropped or non-finite levels.

        Constant extension to ``[rho_max, R]`` and, unless ``at_centre`` is given,
        to ``[0, rho_K]``.
        """
        values = np.asarray(values, dtype=float)
        keep = np.isfinite(values) & (self.radii > 0)
        keep[list(self.dropped)] = False
        r = self.radii[keep][::-1]
        v = values[keep][::-1]
        if len(r) == 0:
            raise DegenerateLevelError("every ladder level was dropped")
        centre = v[0] if at_centre is None else at_centre
        grid = np.concatenate([[0.0], r])
        vals = np.concatenate([[centre], v])
        if grid[-1] < self.R:
            grid = np.concatenate([grid, [self.R]])
            vals = np.concatenate([vals, [v[-1]]])
        return RadialProfile(self.n, grid, vals)

    def averages(self, g: ScalarField) -> np.ndarray:
        """Level-set averages at every level; dropped levels give NaN."""
        out = np.full(self.size, np.nan)
        for k in range(self.size):
            if k in self.dropped:
                continue
            try:
                out[k] = self.shell_ratio(g, k)
            except DegenerateLevelError:
                self.dropped.add(k)
        return out


def build_ladder(psi: NodalField, K: int = 128, n: int | None = None, half_width: float | None = None,
                 distribution: StepDistribution | None = None) -> LevelLadder:
    """Levels at equal steps of superlevel measure, ``|Omega|(1 - k/(K+1))`` for ``k = 0..K``."""
    if K < MIN_LADDER:
        raise ValueError(f"ladder size must be at least {MIN_LADDER}")
    mesh = psi.mesh
    n = mesh.dim if n is None else n
    values = psi.values
    M = float(values.max())
    if M <= 0:
        raise InvalidFieldError("psi must be positive inside the domain")
    if np.any(np.abs(values[mesh.boundary_nodes]) > 1e-14 * M):
        raise InvalidFieldError("psi must vanish on the boundary")
    if np.any(values[mesh.interior_nodes] <= 0):
        raise InvalidFieldError("psi must be positive at every interior node")
    dist = distribution if distribution is not None else AffineDistribution(psi)
    targets = mesh.area * (1.0 - np.arange(1, K + 1) / (K + 1))
    levels = np.concatenate([[0.0], dist.quantile(targets)])
    levels = np.unique(levels)
    levels = levels[levels < M]
    calc = SuperlevelCalculator(psi)
    areas = np.array([calc.area(a) for a in levels])
    if np.any(np.diff(areas) >= 0):
        keep = np.concatenate([[True], np.diff(areas) < 0])
        levels, areas = levels[keep], areas[keep]
    radii = (areas / unit_ball_volume(n)) ** (1.0 / n)
    width = M / (4.0 * K) if half_width is None else float(half_width)
    return LevelLadder(psi, n, levels, areas, radii, width, M, equimeasurable_radius(mesh.area, n), calc)


def surface_average(g: ScalarField, psi: NodalField, ladder: LevelLadder, k: int) -> float:
    """``int_{psi = a_k} g |grad psi|^-1 / int_{psi = a_k} |grad psi|^-1`` via a shell difference."""
    if ladder.psi is not psi:
        raise ValueError("ladder was built for a different psi")
    return ladder.shell_ratio(g, k)


def _reciprocal(field: ScalarField) -> ScalarField:
    if np.any(field.values <= 0):
        raise ValueError("coefficient must be positive")
    return field.with_values(1.0 / field.values)


def hat_lambda(psi: NodalField, lam: ScalarField, ladder: LevelLadder) -> RadialProfile:
    """Symmetrized diffusion ``G(rho(a)) = 1 / <lam^-1>_a`` (harmonic level-set mean)."""
    inv = ladder.averages(_reciprocal(lam))
    return ladder.profile(1.0 / inv)


def hat_f(psi: NodalField, f: ScalarField, ladder: LevelLadder) -> RadialProfile:
    """Level-set mean of ``f`` transported to the radius of the level."""
    return ladder.profile(ladder.averages(f))


def _as_cell_or_nodal(template: ScalarField, values: np.ndarray) -> ScalarField:
    return template.with_values(values)


def _same_kind(a: ScalarField, lam: ScalarField) -> tuple[np.ndarray, np.ndarray, ScalarField]:
    """Values of ``a`` and ``lam`` on a common representation (cells if either is cellwise)."""
    if isinstance(a, NodalField) and isinstance(lam, NodalField):
        return a.values, lam.values, a
    def cells(f):
        return f.values if isinstance(f, CellField) else f.cell_values().mean(axis=1)
    template = a if isinstance(a, CellField) else lam
    return cells(a), cells(lam), template


def hat_a(psi: NodalField, a: ScalarField, lam: ScalarField, lam_hat: RadialProfile,
          ladder: LevelLadder, q: float) -> RadialProfile:
    """Symmetrized gradient coefficient.

    ``q = 2``: the band maximum of ``a+/lam`` times ``lam_hat``.
    ``1 <= q < 2``: ``<(a+)^(2/(2-q)) lam^(-q/(2-q))>^((2-q)/2) * lam_hat^(q/2)``.
    """
    if not 1.0 <= q <= 2.0:
        raise ValueError("q must lie in [1, 2]")
    a_vals, lam_vals, template = _same_kind(a, lam)
    a_plus = np.maximum(a_vals, 0.0)
    lam_at = lam_hat(ladder.radii)
    out = np.full(ladder.size, np.nan)
    if q == 2.0:
        ratio = a_plus / lam_vals
        cell_based = isinstance(template, CellField)
        for k in range(ladder.size):
            if k in ladder.dropped:
                continue
            try:
                cells = ladder.band_cells(k)
            except DegenerateLevelError:
                ladder.dropped.add(k)
                continue
            if cell_based:
                peak = ratio[cells].max()
            else:
                peak = ratio[psi.mesh.triangles[cells]].max()
            out[k] = peak * lam_at[k]
        return ladder.profile(out)
    # (a+)^p lam^(1-p) = lam (a+/lam)^p with p = 2/(2-q).  Dividing the ratio by its
    # maximum near each level keeps large p (q close to 2) from underflowing.
    power = 2.0 / (2.0 - q)
    ratio = a_plus / lam_vals
    nodal = not isinstance(template, CellField)
    for k in range(ladder.size):
        if k in ladder.dropped:
            continue
        a = ladder.levels[k]
        widest = 4.0 * ladder.half_width
        near = ladder.calculator.band_cells(a - widest, a + widest)
        if len(near) == 0:
            ladder.dropped.add(k)
            continue
        scale = float(ratio[psi.mesh.triangles[near]].max() if nodal else ratio[near].max())
        if scale == 0.0:
            out[k] = 0.0
            continue
        # cells beyond the widest band never enter the shell; clipping avoids overflow there
        scaled = np.minimum(ratio / scale, 1.0)
        weight = _as_cell_or_nodal(template, lam_vals * scaled**power)
        try:
            mean = ladder.shell_ratio(weight, k)
        except DegenerateLevelError:
            ladder.dropped.add(k)
            continue
        out[k] = scale * max(mean, 0.0) ** (1.0 / power) * lam_at[k] ** (q / 2.0)
    return ladder.profile(out)


def _cut_segments(ladder: LevelLadder, a: float):
    """Cells cut by ``psi = a`` with the length of the level segment in each (count in 1D)."""
    psi = ladder.psi
    mesh = psi.mesh
    vals = psi.cell_values()
    cells = np.flatnonzero((vals.min(axis=1) < a) & (vals.max(axis=1) > a))
    if mesh.dim == 1:
        return cells, np.ones(len(cells))
    v = vals[cells]
    order = np.argsort(v, axis=1, kind="stable")
    sv = np.take_along_axis(v, order, axis=1)
    pts = mesh.nodes[np.take_along_axis(mesh.triangles[cells], order, axis=1)]
    v0, v1, v2 = sv[:, 0], sv[:, 1], sv[:, 2]
    p0, p1, p2 = pts[:, 0], pts[:, 1], pts[:, 2]
    t02 = ((a - v0) / (v2 - v0))[:, None]
    on_02 = p0 + t02 * (p2 - p0)
    low = (a < v1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t01 = np.nan_to_num((a - v0) / (v1 - v0))[:, None]
        t12 = np.nan_to_num((a - v1) / (v2 - v1))[:, None]
    other = np.where(low, p0 + t01 * (p1 - p0), p1 + t12 * (p2 - p1))
    return cells, np.linalg.norm(other - on_02, axis=1)


def contour_flux(ladder: LevelLadder, A: CellMatrixField, k: int) -> float:
    """Outward flux ``int_{psi = a_k} A grad psi . nu`` by line integration over level segments."""
    cells, lengths = _cut_segments(ladder, ladder.levels[k])
    grads = gradient(ladder.psi)[cells]
    norms = np.linalg.norm(grads, axis=1)
    energy = np.einsum("td,tde,te->t", grads, A.matrices[cells], grads)
    # outward normal of the superlevel set is -grad psi / |grad psi|
    return float(-(lengths * energy / norms).sum())


def flux_F(psi: NodalField, A: CellMatrixField, ladder: LevelLadder, G: RadialProfile,
           div_source: ScalarField | None = None) -> RadialProfile:
    """Normalised flux ``F(rho(a)) = int_{Omega_a} div(A grad psi) / (n alpha_n rho^(n-1) G(rho))``.

    ``div_source`` supplies ``div(A grad psi)`` pointwise (for a solution of
    the PDE it equals ``H(x, psi, grad psi)``); without it the flux through
    each level curve is integrated directly.  ``F(0) = 0``.
    """
    n = ladder.n
    sphere = unit_sphere_area(n)
    totals = np.full(ladder.size, np.nan)
    for k in range(ladder.size):
        if k in ladder.dropped:
            continue
        if div_source is not None:
            totals[k] = ladder.calculator.integral(div_source, ladder.levels[k])
        elif k > 0:
            totals[k] = contour_flux(ladder, A, k)
    if div_source is None and ladder.size > 1:
        # the boundary level has no interior contour; use the flux through the domain boundary
        totals[0] = _boundary_flux(psi, A) if 0 not in ladder.dropped else np.nan
    values = totals / (sphere * ladder.radii ** (n - 1) * G(ladder.radii))
    bad = np.isfinite(values) & (values >= 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ConstructionViolationError(
            f"flux is non-negative at level {ladder.levels[k]:.6g}; the discretization is too coarse"
        )
    return ladder.profile(values, at_centre=0.0)


def _boundary_flux(psi: NodalField, A: CellMatrixField) -> float:
    """Outward flux of ``A grad psi`` through the boundary facets of the mesh."""
    owners, normals = psi.mesh.boundary_facets
    flux = np.einsum("tde,te->td", A.matrices[owners], gradient(psi)[owners])
    return float(np.einsum("td,td->t", flux, normals).sum())


def hat_psi(F: RadialProfile, R: float | None = None, grid_points: int = 512) -> RadialProfile:
    """``psi_hat(r) = -int_r^R F`` integrated exactly for the piecewise-linear ``F``."""
    R = F.R if R is None else R
    grid = merge_grids(F.r[F.r <= R], uniform_grid(R, grid_points))
    grid[-1] = R
    f_vals = F(grid)
    pieces = 0.5 * (f_vals[1:] + f_vals[:-1]) * np.diff(grid)
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return RadialProfile(F.n, grid, -tail)


def delta_hat(psi_hat: RadialProfile, ladder: LevelLadder, m_b: float) -> tuple[float, float]:
    """``m_b * min_k a_k / psi_hat(rho(a_k))`` over levels ``a_k > 0``.

    Returns ``(delta, raw_ratio)``; the ratio is capped at 1 because
    ``psi_hat(rho(a)) >= a`` holds for the continuous construction.
    """
    if m_b <= 0:
        raise ValueError("m_b must be positive")
    ratios = _level_ratios(psi_hat, ladder)
    if np.any(ratios <= 0):
        raise ConstructionViolationError("psi_hat vanishes at a positive level")
    raw = float((1.0 / ratios).min())
    return m_b * min(raw, 1.0), raw


def _level_ratios(psi_hat: RadialProfile, ladder: LevelLadder) -> np.ndarray:
    keep = np.array([(k not in ladder.dropped) and ladder.levels[k] > 0 for k in range(ladder.size)])
    return psi_hat(ladder.radii[keep]) / ladder.levels[keep]


def eta_gap(psi_hat: RadialProfile, ladder: LevelLadder) -> float:
    """``min_k psi_hat(rho(a_k)) / a_k - 1`` over positive levels."""
    return float(_level_ratios(psi_hat, ladder).min() - 1.0)


def key1_margins(psi_hat: RadialProfile, ladder: LevelLadder) -> np.ndarray:
    """``psi_hat(rho(a_k)) - a_k`` per level."""
    return psi_hat(ladder.radii) - ladder.levels


@dataclass
class Key2Result:
    levels: np.ndarray
    margin_exists: np.ndarray  # band maximum of the original expression minus the symmetrized one
    margin_all: np.ndarray  # band minimum minus the symmetrized one
    failing_levels: list[float]


def key2_check(ladder: LevelLadder, div_source: ScalarField, a: ScalarField, f: ScalarField, q: float,
               lam_hat: RadialProfile, a_hat: RadialProfile, f_hat: RadialProfile, F: RadialProfile,
               tol: float) -> Key2Result:
    """Per-level comparison of ``-div(A grad psi) - a|grad psi|^q - f`` on the level band with
    ``-div(lam_hat grad psi_hat) - a_hat |psi_hat'|^q - f_hat`` at the matching radius.

    ``div(lam_hat grad psi_hat)`` at radius ``rho(a)`` equals the level-set
    mean of ``div(A grad psi)``, which is what is evaluated here.
    """
    psi = ladder.psi
    grad_norm = np.linalg.norm(gradient(psi), axis=1)

    def cellwise(fld: ScalarField) -> np.ndarray:
        return fld.values if isinstance(fld, CellField) else fld.cell_values().mean(axis=1)

    original = -cellwise(div_source) - cellwise(a) * grad_norm**q - cellwise(f)
    div_mean = ladder.averages(div_source)
    exists = np.full(ladder.size, np.nan)
    every = np.full(ladder.size, np.nan)
    for k in range(ladder.size):
        if k in ladder.dropped or not np.isfinite(div_mean[k]):
            continue
        rho = ladder.radii[k]
        sym = -div_mean[k] - a_hat(rho) * abs(F(rho)) ** q - f_hat(rho)
        cells = ladder.band_cells(k)
        exists[k] = original[cells].max() - sym
        every[k] = original[cells].min() - sym
    failing = [float(ladder.levels[k]) for k in range(ladder.size) if np.isfinite(exists[k]) and exists[k] < -tol]
    return Key2Result(ladder.levels.copy(), exists, every, failing)


@dataclass
class SymmetrizedProblem:
    n: int
    R: float
    q: float
    lam_hat: RadialProfile
    a_hat: RadialProfile
    f_hat: RadialProfile
    delta_hat: float = 0.0
    eta: float = float("nan")
    provenance: dict = field(default_factory=dict)

    def export(self, csv_path: str | Path, json_path: str | Path, grid_points: int = 512) -> None:
        """CSV ``r,lambda_hat,a_hat,f_hat`` on the uniform grid plus a JSON sidecar of scalars."""
        grid = uniform_grid(self.R, grid_points)
        write_profiles_csv(csv_path, grid, {
            "lambda_hat": self.lam_hat(grid),
            "a_hat": self.a_hat(grid),
            "f_hat": self.f_hat(grid),
        })
        sidecar = {"n": self.n, "R": self.R, "q": self.q, "delta_hat": self.delta_hat,
                   "eta": None if math.isnan(self.eta) else self.eta}
        Path(json_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
