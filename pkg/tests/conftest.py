from __future__ import annotations

import functools
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symm_compare.fem import solve_linear  # noqa: E402
from symm_compare.mesh import CellMatrixField, DomainSpec, NodalField, TriMesh, build_mesh  # noqa: E402
from symm_compare.verify import ScenarioConfig, corpus_paths, run  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def seed() -> int:
    return int(os.environ.get("SYMM_COMPARE_SEED", "20240611"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(seed())


@functools.lru_cache(maxsize=None)
def mesh_for(kind: str, h: float) -> TriMesh:
    specs = {
        "disk": lambda: DomainSpec.disk(1.0, h),
        "ellipse": lambda: DomainSpec.ellipse(1.0, 0.5, h),
        "square": lambda: DomainSpec.polygon([(0, 0), (1, 0), (1, 1), (0, 1)], h),
        "interval": lambda: DomainSpec.interval(-1.0, 1.0, h),
    }
    return build_mesh(specs[kind]())


@functools.lru_cache(maxsize=None)
def poisson(kind: str, h: float) -> NodalField:
    """Solution of ``-Laplace u = 1`` with zero boundary data."""
    mesh = mesh_for(kind, h)
    return solve_linear(CellMatrixField.scalar(mesh, 1.0), f=1.0).solution


@functools.lru_cache(maxsize=None)
def corpus_config(name: str) -> ScenarioConfig:
    for path in corpus_paths():
        if path.stem == name:
            return ScenarioConfig.load(path)
    raise KeyError(name)


@functools.lru_cache(maxsize=None)
def corpus_report(name: str):
    return run(corpus_config(name))


def random_field(mesh: TriMesh, rng: np.random.Generator) -> NodalField:
    """Solution of a Poisson problem with a random smooth source and variable diffusion.

    Vanishes on the boundary; the source mixes signed Gaussian bumps with a
    positive offset, so the field may change sign.
    """
    x = mesh.nodes
    lo, hi = x.min(axis=0), x.max(axis=0)
    rhs = np.full(mesh.n_nodes, rng.uniform(0.1, 1.0))
    for _ in range(3):
        centre = rng.uniform(lo, hi)
        width = rng.uniform(0.1, 0.4)
        rhs += rng.uniform(-1.0, 2.0) * np.exp(-np.sum((x - centre) ** 2, axis=1) / (2 * width**2))
    coef = 1.0 + 0.5 * rng.uniform() * np.sin(3.0 * mesh.centroids[:, 0])
    return solve_linear(CellMatrixField.scalar(mesh, coef), f=NodalField(mesh, rhs)).solution


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
