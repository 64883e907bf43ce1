"""Distribution functions, decreasing Schwarz rearrangement and rearrangement inequalities."""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from .errors import MeshMismatchError
from .fem import mass_matrix
from .mesh import CellField, NodalField, ScalarField, gradient, lp_norm_field
from .profiles import (
    _GL_W,
    _GL_X,
    DEFAULT_GRID_POINTS,
    RadialProfile,
    equimeasurable_radius,
    merge_grids,
    unit_ball_volume,
    unit_sphere_area,
    uniform_grid,
)

_PAIR_CHUNK = 4_000_000


class StepDistribution:
    """Right-continuous non-increasing ``mu(t) = |{u > t}|``.

    ``breakpoints`` are the sorted distinct values and ``measures[i]`` is
    ``mu(breakpoints[i])``; between breakpoints ``mu`` is constant.
    """

    def __init__(self, breakpoints, measures, total: float):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.measures = np.asarray(measures, dtype=float)
        self.total = float(total)
        if len(self.breakpoints) == 0:
            raise ValueError("a distribution needs at least one breakpoint")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def from_samples(cls, values, weights) -> "StepDistribution":
        """Distribution of a function taking ``values[i]`` on a set of measure ``weights[i]``."""
        values = np.asarray(values, dtype=float).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        ts, inverse = np.unique(values, return_inverse=True)
        mass = np.bincount(inverse, weights=weights, minlength=len(ts))
        above = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
        return cls(ts, above, weights.sum())

    @property
    def max_value(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def min_value(self) -> float:
        return float(self.breakpoints[0])

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        out = np.where(idx < 0, self.total, self.measures[np.clip(idx, 0, None)])
        return out if out.ndim else float(out)

    def jump_levels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Levels where ``mu`` jumps, with the left limit and value there."""
        left = np.concatenate([[self.total], self.measures[:-1]])
        return self.breakpoints, left, self.measures

    def quantile(self, m) -> np.ndarray:
        """``min {t : mu(t) <= m}``; for ``m >= |Omega|`` the essential infimum."""
        m = np.atleast_1d(np.asarray(m, dtype=float))
        # measures are non-increasing: first index with measures <= m
        idx = np.searchsorted(-self.measures, -m, side="left")
        idx = np.clip(idx, 0, len(self.breakpoints) - 1)
        return self.breakpoints[idx]


class AffineDistribution(StepDistribution):
    """Exact distribution function of a nodal field under affine interpolation.

    Between two consecutive node values every cell is either entirely above,
    entirely below, or cut with a fixed vertex ordering, so ``mu`` is a
    quadratic (linear in 1D) on each such interval.  Evaluation and inversion
    use that structure directly.
    """

    def __init__(self, field: NodalField):
        self.field = field
        mesh = field.mesh
        vals = field.cell_values()
        self._sv = np.sort(vals, axis=1)
        self._vol = mesh.cell_areas
        self._cmin = self._sv[:, 0]
        self._cmax = self._sv[:, -1]
        breakpoints = np.unique(field.values)
        super().__init__(breakpoints, np.zeros_like(breakpoints), mesh.area)
        self.measures = self._measures_at_breakpoints()

    # -- exact evaluation --------------------------------------------------

    def _fractions(self, sv: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Fraction of each cell above level ``t`` (rows of ``sv`` paired with ``t``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            if sv.shape[1] == 2:
                v0, v1 = sv[:, 0], sv[:, 1]
                return np.where(t < v0, 1.0, np.where(t >= v1, 0.0, (v1 - t) / (v1 - v0)))
            v0, v1, v2 = sv[:, 0], sv[:, 1], sv[:, 2]
            low = (v0 <= t) & (t < v1)
            high = (v1 <= t) & (t < v2)
            f_low = 1.0 - (t - v0) ** 2 / ((v1 - v0) * (v2 - v0))
            f_high = (v2 - t) ** 2 / ((v2 - v0) * (v2 - v1))
            return np.where(t < v0, 1.0, np.where(low, f_low, np.where(high, f_high, 0.0)))

    def _measures_at_breakpoints(self) -> np.ndarray:
        ts = self.breakpoints
        order = np.argsort(self._cmin, kind="stable")
        cmin_sorted = self._cmin[order]
        suffix = np.concatenate([np.cumsum(self._vol[order][::-1])[::-1], [0.0]])
        full = suffix[np.searchsorted(cmin_sorted, ts, side="right")]
        # cells cut at level t: cmin <= t < cmax
        lo = np.searchsorted(ts, self._cmin, side="left")
        hi = np.searchsorted(ts, self._cmax, side="left")
        counts = hi - lo
        partial = np.zeros(len(ts))
        cells = np.flatnonzero(counts > 0)
        start = 0
        csum = np.cumsum(counts[cells])
        while start < len(cells):
            offset = csum[start - 1] if start else 0
            stop = int(np.searchsorted(csum, offset + _PAIR_CHUNK, side="right"))
            stop = max(stop, start + 1)
            chunk = cells[start:stop]
            reps = counts[chunk]
            cell_idx = np.repeat(chunk, reps)
            first = np.repeat(lo[chunk], reps)
            step = np.arange(len(cell_idx)) - np.repeat(np.cumsum(reps) - reps, reps)
            level_idx = first + step
            frac = self._fractions(self._sv[cell_idx], ts[level_idx])
            partial += np.bincount(level_idx, weights=self._vol[cell_idx] * frac, minlength=len(ts))
            start = stop
        return full + partial

    def __call__(self, t) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(len(t_arr))
        for i, level in enumerate(t_arr):
            out[i] = float(self._vol @ self._fractions(self._sv, np.full(len(self._vol), level)))
        return out if np.ndim(t) else float(out[0])

    def jump_levels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        flat = self._cmin == self._cmax
        if not np.any(flat):
            empty = np.zeros(0)
            return empty, empty, empty
        levels, inverse = np.unique(self._cmin[flat], return_inverse=True)
        jump = np.bincount(inverse, weights=self._vol[flat])
        after = np.interp(levels, self.breakpoints, self.measures)
        return levels, after + jump, after

    # -- inversion ---------------------------------------------------------

    def _interval_polynomial(self, i: int, anchor: float) -> tuple[float, float, float]:
        """``mu(anchor + s) = c0 + c1 s + c2 s^2`` on ``[t_i, t_{i+1})``.

        Anchoring at the end where ``mu`` is small keeps that end free of cancellation.
        """
        t0, t1 = self.breakpoints[i], self.breakpoints[i + 1]
        above = self._cmin > t0
        base = float(self._vol[above].sum())
        cut = np.flatnonzero((self._cmin <= t0) & (self._cmax >= t1))
        sv = self._sv[cut]
        vol = self._vol[cut]
        if sv.shape[1] == 2:
            v0, v1 = sv[:, 0], sv[:, 1]
            inv = 1.0 / (v1 - v0)
            return base + float(vol @ ((v1 - anchor) * inv)), float(-(vol @ inv)), 0.0
        v0, v1, v2 = sv[:, 0], sv[:, 1], sv[:, 2]
        low = v1 >= t1
        c0 = c1 = c2 = 0.0
        if np.any(low):
            w = vol[low] / ((v1[low] - v0[low]) * (v2[low] - v0[low]))
            d = anchor - v0[low]
            c0 += float(vol[low].sum() - w @ (d * d))
            c1 += float(-2.0 * (w @ d))
            c2 += float(-w.sum())
        high = ~low
        if np.any(high):
            w = vol[high] / ((v2[high] - v0[high]) * (v2[high] - v1[high]))
            e = v2[high] - anchor
            c0 += float(w @ (e * e))
            c1 += float(-2.0 * (w @ e))
            c2 += float(w.sum())
        return base + c0, c1, c2

    def quantile(self, m) -> np.ndarray:
        m = np.atleast_1d(np.asarray(m, dtype=float))
        ts, mus = self.breakpoints, self.measures
        out = np.empty(len(m))
        for j, target in enumerate(m):
            if target >= mus[0]:
                out[j] = ts[0]
                continue
            # mus[i] > target >= mus[i + 1]
            i = int(np.searchsorted(-mus, -target, side="left")) - 1
            width = ts[i + 1] - ts[i]
            shift = width if target < 0.5 * (mus[i] + mus[i + 1]) else 0.0
            c0, c1, c2 = self._interval_polynomial(i, ts[i] + shift)

            def poly(s):
                s = s - shift
                return c0 + s * (c1 + s * c2)

            if poly(width) > target:  # mu jumps across target at t_{i+1}
                out[j] = ts[i + 1]
                continue
            lo, hi = 0.0, width
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if poly(mid) > target:
                    lo = mid
                else:
                    hi = mid
            out[j] = ts[i] + hi
        return out


def distribution_function(u: ScalarField) -> StepDistribution:
    """Exact distribution function of a nodal (affine) or cell-constant field."""
    if isinstance(u, CellField):
        return StepDistribution.from_samples(u.values, u.mesh.cell_areas)
    return AffineDistribution(u)


def profile_distribution(profile: RadialProfile, t) -> np.ndarray:
    """``|{x in B_R : profile(|x|) > t}|`` for a non-increasing piecewise-linear profile."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r, v = profile.r, profile.values
    out = np.empty(len(t))
    for j, level in enumerate(t):
        above = v > level
        if not above.any():
            out[j] = 0.0
            continue
        if above.all():
            out[j] = unit_ball_volume(profile.n) * profile.R**profile.n
            continue
        k = int(np.argmin(above))  # first grid point not above the level
        if v[k] == v[k - 1]:
            rho = r[k - 1]
        else:
            rho = r[k - 1] + (v[k - 1] - level) / (v[k - 1] - v[k]) * (r[k] - r[k - 1])
        out[j] = unit_ball_volume(profile.n) * rho**profile.n
    return out


def schwarz_rearrangement(u: ScalarField | StepDistribution, n: int | None = None,
                          grid_points: int = DEFAULT_GRID_POINTS) -> RadialProfile:
    """Decreasing Schwarz rearrangement sampled on a uniform grid plus the jump radii of ``mu``."""
    dist = u if isinstance(u, StepDistribution) else distribution_function(u)
    if n is None:
        if isinstance(u, StepDistribution):
            raise ValueError("dimension n is required when passing a distribution")
        n = u.mesh.dim
    R = equimeasurable_radius(dist.total, n)
    grid = uniform_grid(R, grid_points)
    levels, left, right = dist.jump_levels()
    if len(levels):
        jumps = np.concatenate([left, right])
        jumps = jumps[(jumps > 0) & (jumps < dist.total)]
        grid = merge_grids(grid, (jumps / unit_ball_volume(n)) ** (1.0 / n))
        grid[-1] = R
    measure = unit_ball_volume(n) * grid**n
    measure[-1] = dist.total
    values = dist.quantile(measure)
    values = np.minimum.accumulate(values)  # guard against round-off in the inversion
    return RadialProfile(n, grid, values)


def lp_norm(obj: Union[ScalarField, RadialProfile], p: float) -> float:
    """L^p norm of a mesh field or of a radial profile over its ball."""
    if isinstance(obj, RadialProfile):
        return obj.lp_norm(p)
    return lp_norm_field(obj, p)


def _field_product_integral(u: ScalarField, g: ScalarField) -> float:
    if isinstance(u, NodalField) and isinstance(g, NodalField):
        return float(u.values @ (mass_matrix(u.mesh) @ g.values))
    vols = u.mesh.cell_areas

    def cell_mean(f):
        return f.values if isinstance(f, CellField) else f.cell_values().mean(axis=1)

    return float(vols @ (cell_mean(u) * cell_mean(g)))


def _profile_product_integral(a: RadialProfile, b: RadialProfile) -> float:
    """Exact ball integral of the product of two piecewise-linear profiles."""
    grid = merge_grids(a.r, b.r)
    grid[-1] = min(a.R, b.R)
    grid = grid[grid <= grid[-1]]
    fa, fb = a(grid), b(grid)
    lo, width = grid[:-1], np.diff(grid)
    pts = lo[:, None] + width[:, None] * _GL_X
    va = fa[:-1, None] + np.diff(fa)[:, None] * _GL_X
    vb = fb[:-1, None] + np.diff(fb)[:, None] * _GL_X
    return float(unit_sphere_area(a.n) * np.sum(va * vb * pts ** (a.n - 1) * width[:, None] * _GL_W))


def hardy_littlewood_margin(u: ScalarField, g: ScalarField, n: int | None = None) -> float:
    """``int u* g*`` over the ball minus ``int u g`` over the domain; non-negative in theory."""
    if u.mesh is not g.mesh:
        raise MeshMismatchError("fields live on different meshes")
    us = schwarz_rearrangement(u, n)
    gs = schwarz_rearrangement(g, n)
    return _profile_product_integral(us, gs) - _field_product_integral(u, g)


def polya_szego_margin(u: NodalField, n: int | None = None) -> float:
    """``||grad u||_2`` minus ``||grad |u|*||_2``; non-negative in theory for ``u`` vanishing on the boundary."""
    au = u.with_values(np.abs(u.values))
    grads = gradient(au)
    lhs = math.sqrt(float(u.mesh.cell_areas @ np.sum(grads**2, axis=1)))
    return lhs - schwarz_rearrangement(au, n).gradient_l2()
