"""Radial profiles: sampled functions of ``r`` on ``[0, R]`` with linear interpolation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_GRID_POINTS = 512

# 4-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in ``R^n``: ``pi^(n/2) / Gamma(n/2 + 1)``."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def unit_sphere_area(n: int) -> float:
    return n * unit_ball_volume(n)


def equimeasurable_radius(measure: float, n: int) -> float:
    return (measure / unit_ball_volume(n)) ** (1.0 / n)


def uniform_grid(R: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    grid = np.linspace(0.0, R, points)
    grid[-1] = R
    return grid


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Values of a radial function on a strictly increasing grid ``0 = r_0 < ... < r_J = R``."""

    n: int
    r: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.r, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if len(r) != len(v) or len(r) < 2:
            raise ValueError("grid and values must have the same length (at least 2)")
        if r[0] != 0.0:
            raise ValueError("radial grid must start at r = 0")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radial grid must be strictly increasing")
        if self.n < 1:
            raise ValueError("dimension must be at least 1")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    @property
    def R(self) -> float:
        return float(self.r[-1])

    def __call__(self, radius) -> np.ndarray:
        return np.interp(radius, self.r, self.values)

    def resample(self, grid: np.ndarray) -> "RadialProfile":
        return RadialProfile(self.n, grid, self(grid))

    def on_uniform_grid(self, points: int = DEFAULT_GRID_POINTS) -> "RadialProfile":
        return self.resample(uniform_grid(self.R, points))

    def map(self, func) -> "RadialProfile":
        return RadialProfile(self.n, self.r, func(self.values))

    def slopes(self) -> np.ndarray:
        """Derivative of the piecewise-linear interpolant on each segment."""
        return np.diff(self.values) / np.diff(self.r)

    def ball_integral(self, func=None) -> float:
        """``integral over B_R of func(profile)`` as ``n alpha_n int func(g(r)) r^(n-1) dr``.

        Gauss-Legendre on every segment of the linear interpolant.
        """
        lo, hi = self.r[:-1], self.r[1:]
        width = hi - lo
        pts = lo[:, None] + width[:, None] * _GL_X[None, :]
        vals = self.values[:-1, None] + (self.values[1:] - self.values[:-1])[:, None] * _GL_X[None, :]
        if func is not None:
            vals = func(vals)
        weight = pts ** (self.n - 1) * width[:, None] * _GL_W[None, :]
        return float(unit_sphere_area(self.n) * np.sum(vals * weight))

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            return float(np.abs(self.values).max())
        return self.ball_integral(lambda v: np.abs(v) ** p) ** (1.0 / p)

    def gradient_l2(self) -> float:
        """L2 norm over the ball of the gradient of the piecewise-linear interpolant."""
        slopes = self.slopes()
        shells = (self.r[1:] ** self.n - self.r[:-1] ** self.n) / self.n
        return math.sqrt(float(unit_sphere_area(self.n) * np.sum(slopes**2 * shells)))

    def to_csv(self, path: str | Path, column: str = "value") -> None:
        write_profiles_csv(path, self.r, {column: self.values})

    @classmethod
    def from_csv(cls, path: str | Path, n: int, column: str = "value") -> "RadialProfile":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        r = [float(row["r"]) for row in rows]
        v = [float(row[column]) for row in rows]
        return cls(n, r, v)


def merge_grids(*grids: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Sorted union of grids, dropping points closer than ``tol`` to a neighbour."""
    merged = np.unique(np.concatenate([np.asarray(g, dtype=float) for g in grids]))
    keep = np.concatenate([[True], np.diff(merged) > tol * max(1.0, merged[-1])])
    merged = merged[keep]
    return merged


def write_profiles_csv(path: str | Path, r: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    """CSV with header ``r,<columns...>``; floats in shortest round-trip form."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r"] + names)
        data = [np.asarray(r, dtype=float)] + [np.asarray(columns[k], dtype=float) for k in names]
        for row in zip(*(d.tolist() for d in data)):
            writer.writerow([repr(x) for x in row])
