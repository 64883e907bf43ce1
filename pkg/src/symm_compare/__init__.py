"""Numerical verification of symmetrization-based comparison principles for elliptic problems."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConstructionViolationError,
    DegenerateLevelError,
    EllipticityError,
    InvalidFieldError,
    InvalidSpecError,
    MeshMismatchError,
    NonConvergenceError,
    SolverFailureError,
    SymmCompareError,
)
from .mesh import CellField, CellMatrixField, DomainSpec, NodalField, TriMesh, build_mesh
from .profiles import RadialProfile

__all__ = [
    "CellField",
    "CellMatrixField",
    "ConfigError",
    "ConstructionViolationError",
    "DegenerateLevelError",
    "DomainSpec",
    "EllipticityError",
    "InvalidFieldError",
    "InvalidSpecError",
    "MeshMismatchError",
    "NodalField",
    "NonConvergenceError",
    "RadialProfile",
    "SolverFailureError",
    "SymmCompareError",
    "TriMesh",
    "build_mesh",
    "__version__",
]
