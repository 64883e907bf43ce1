"""Exception hierarchy shared by all stages of the pipeline."""

from __future__ import annotations


class SymmCompareError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised it when known."""

    stage: str | None = None

    def with_stage(self, stage: str) -> "SymmCompareError":
        self.stage = stage
        return self


class InvalidSpecError(SymmCompareError, ValueError):
    """A domain description cannot be meshed (degenerate, self-intersecting, bad h)."""


class MeshMismatchError(SymmCompareError, ValueError):
    """Two fields that must share a mesh live on different meshes."""


class EllipticityError(SymmCompareError, ValueError):
    """A diffusion matrix is not symmetric or its smallest eigenvalue is too small."""


class SolverFailureError(SymmCompareError, RuntimeError):
    """A linear solve produced a non-finite or inaccurate answer."""


class NonConvergenceError(SymmCompareError, RuntimeError):
    """An iterative solve hit its iteration cap; ``trace`` keeps the residual history."""

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])


class InvalidFieldError(SymmCompareError, ValueError):
    """A reference function violates positivity or boundary conditions."""


class DegenerateLevelError(SymmCompareError, ValueError):
    """A shell between two nearby levels has (numerically) zero measure."""


class ConstructionViolationError(SymmCompareError, RuntimeError):
    """A sign or positivity property the construction guarantees has failed."""


class ConfigError(SymmCompareError, ValueError):
    """A scenario configuration is malformed or violates a hypothesis."""
