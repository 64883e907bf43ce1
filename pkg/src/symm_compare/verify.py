"""Scenario configuration, the comparison pipelines and their reports.

A scenario names a domain, coefficient expressions, the structure of the
nonlinearity ``H`` and the comparison statement to verify.  Each pipeline
solves the problem on the mesh, rearranges and symmetrizes, solves the radial
comparison problem on the ball of equal measure and records every inequality
as a :class:`Check` with a signed margin and a declared tolerance.
"""

from __future__ import annotations

import copy
import datetime as _dt
import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, SymmCompareError
from .expr import Expression, evaluate_at, parse
from .fem import (
    CallbackH,
    SemilinearSpec,
    check_weak_max_principle,
    fixed_point_solve,
    mesh_peclet,
    require_converged,
    solve_linear,
)
from .mesh import (
    CellField,
    CellMatrixField,
    DomainSpec,
    NodalField,
    TriMesh,
    build_mesh,
    gradient,
    integrate,
    write_field,
    write_mesh,
)
from .profiles import RadialProfile, equimeasurable_radius, uniform_grid, write_profiles_csv
from .radial import RadialProblem, RadialSolution, solve_abs_gradient, solve_er_drift, solve_semilinear_radial
from .rearrange import schwarz_rearrangement
from .symmetrize import (
    LevelLadder,
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
)

THEOREMS = ("T1", "T1_gap", "T2", "T2_gap", "talenti")
H_FORMS = ("structural", "affine")
PROFILE_COLUMNS = ("u_star", "v", "lambda_hat", "a_hat", "f_hat")
SCHEMA_VERSION = 1
MAJORANT_NAMES = ("a_hat", "f_hat", "f_star", "lambda_hat", "delta_hat")


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class Tolerances:
    """Declared tolerances; resolution-linked ones are functions of ``h`` below."""

    dominance_relative: float = 5e-3  # of ||u*||_inf at h = 0.04, scaled linearly in h
    dominance_gradient: float = 0.0  # optional extra term factor * h * ||grad u||_inf
    bounds: float = 1e-3
    conservation_coarse: float = 1e-2  # relative, at h = 0.04
    conservation_fine: float = 3e-3  # relative, at h = 0.02
    gap_fraction: float = 0.05
    gap_degenerate: float = 2e-2
    delta_stability: float = 0.10
    eta_stability: float = 0.25
    refinement_slack: float = 0.10
    key1: float = 2e-2
    majorization: float = 1e-8
    weak_max: float = 1e-10
    hyp_h: float = 1e-10
    boundary_gradient: float = 1e-3

    def conservation(self, h: float) -> float:
        """Power law through the two anchor tolerances at ``h = 0.04`` and ``h = 0.02``."""
        rate = math.log2(self.conservation_coarse / self.conservation_fine)
        return self.conservation_coarse * (h / 0.04) ** rate

    def dominance(self, h: float, u_star_max: float, grad_max: float) -> float:
        return max(self.dominance_relative * u_star_max * h / 0.04, self.dominance_gradient * h * grad_max)


@dataclass(frozen=True)
class Majorization:
    """Radial majorants; expressions in ``r`` and the names of :data:`MAJORANT_NAMES`."""

    a_bar: Expression | None = None
    f_bar: Expression | None = None
    delta_bar: Expression | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    theorem: str
    domain: DomainSpec
    A: tuple  # ("scalar", expr) or ("matrix", ((e11, e12), (e21, e22)))
    Lambda: Expression | None
    alpha: tuple[Expression, ...] | None
    a: Expression
    b: Expression
    f: Expression
    H: str  # "structural", "affine" or "expression"
    H_expr: Expression | None
    q: float
    resolutions: tuple[float, ...]
    ladder: int = 128
    radial_grid: int = 512
    relaxation: float = 0.5
    max_iter: int = 500
    solver_tol: float = 1e-10
    tolerances: Tolerances = Tolerances()
    majorization: Majorization | None = None
    description: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _parse_config(data)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(data)

    def override(self, h: float | None = None, ladder: int | None = None) -> "ScenarioConfig":
        """Copy with a single resolution ``h`` and/or a different ladder size."""
        raw = copy.deepcopy(self.raw)
        if h is not None:
            raw["resolutions"] = [float(h)]
        if ladder is not None:
            raw["ladder"] = int(ladder)
        return ScenarioConfig.from_dict(raw)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def uses_affine_h(self) -> bool:
        return self.H == "affine"


def _require(data: dict, key: str):
    if key not in data:
        raise ConfigError(f"config is missing {key!r}")
    return data[key]


def _parse_domain(spec: Any, h: float) -> DomainSpec:
    if not isinstance(spec, dict):
        raise ConfigError("domain must be a mapping with a 'kind'")
    kind = spec.get("kind")
    try:
        if kind == "disk":
            return DomainSpec.disk(spec.get("radius", 1.0), h)
        if kind == "ellipse":
            sx, sy = spec["semi_axes"]
            return DomainSpec.ellipse(sx, sy, h)
        if kind == "polygon":
            return DomainSpec.polygon(spec["vertices"], h)
        if kind == "square":
            side = float(spec.get("side", 1.0))
            return DomainSpec.polygon([(0, 0), (side, 0), (side, side), (0, side)], h)
        if kind == "interval":
            lo, hi = spec.get("endpoints", (-1.0, 1.0))
            return DomainSpec.interval(lo, hi, h)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain description {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown domain kind {kind!r}")


def _parse_matrix(value: Any, dim: int) -> tuple:
    if isinstance(value, (list, tuple)):
        if dim != 2 or len(value) != 2 or any(len(row) != 2 for row in value):
            raise ConfigError("matrix coefficient A must be a 2x2 list of expressions")
        rows = tuple(tuple(parse(e) for e in row) for row in value)
        if rows[0][1].source.replace(" ", "") != rows[1][0].source.replace(" ", ""):
            raise ConfigError("matrix coefficient A must be symmetric (A12 == A21)")
        for row in rows:
            for e in row:
                if e.depends_on("s", "p", "px", "py"):
                    raise ConfigError("A may depend on x only")
        return ("matrix", rows)
    expr = parse(value)
    if expr.depends_on("s", "p", "px", "py"):
        raise ConfigError("A may depend on x only")
    return ("scalar", expr)


def _parse_config(data: dict) -> ScenarioConfig:
    raw = copy.deepcopy(data)
    name = str(_require(data, "name"))
    theorem = _require(data, "theorem")
    if theorem not in THEOREMS:
        raise ConfigError(f"theorem must be one of {THEOREMS}, got {theorem!r}")
    resolutions = data.get("resolutions", [0.04])
    if isinstance(resolutions, (int, float)):
        resolutions = [resolutions]
    try:
        resolutions = tuple(sorted({float(h) for h in resolutions}, reverse=True))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"resolutions must be numbers: {exc}") from exc
    if not resolutions or min(resolutions) <= 0:
        raise ConfigError("resolutions must be a non-empty list of positive mesh sizes")
    domain = _parse_domain(_require(data, "domain"), resolutions[0])
    for h in resolutions:
        domain.with_h(h)  # validates h against the diameter

    coeffs = data.get("coefficients", {}) or {}
    if not isinstance(coeffs, dict):
        raise ConfigError("coefficients must be a mapping")
    unknown = set(coeffs) - {"A", "Lambda", "alpha", "a", "b", "f"}
    if unknown:
        raise ConfigError(f"unknown coefficient keys {sorted(unknown)}")
    A = _parse_matrix(coeffs.get("A", 1.0), domain.dim)
    Lambda = parse(coeffs["Lambda"]) if coeffs.get("Lambda") is not None else None
    if Lambda is not None and Lambda.depends_on("s", "p", "px", "py"):
        raise ConfigError("Lambda may depend on x only")
    alpha = None
    if coeffs.get("alpha") is not None:
        comps = coeffs["alpha"]
        if not isinstance(comps, (list, tuple)) or len(comps) != domain.dim:
            raise ConfigError(f"alpha must list {domain.dim} expressions")
        alpha = tuple(parse(c) for c in comps)
        if any(c.depends_on("s", "p", "px", "py") for c in alpha):
            raise ConfigError("alpha may depend on x only")
    a, b, f = (parse(coeffs.get(k, 0.0)) for k in ("a", "b", "f"))

    H_raw = data.get("H", "structural")
    if H_raw in H_FORMS:
        H, H_expr = H_raw, None
    elif isinstance(H_raw, str):
        H, H_expr = "expression", parse(H_raw)
    else:
        raise ConfigError("H must be 'structural', 'affine' or an expression string")
    if H == "affine":
        for e, label in ((b, "b"), (f, "f")):
            if e.depends_on("s", "p", "px", "py"):
                raise ConfigError(f"affine H needs {label} depending on x only")
    elif alpha is not None:
        raise ConfigError("alpha is only used with the affine form of H")

    try:
        q = float(data.get("q", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError("q must be a number") from exc
    if not 1.0 <= q <= 2.0:
        raise ConfigError(f"q must lie in [1, 2], got {q}")
    if theorem in ("T1", "T1_gap") and q != 1.0:
        raise ConfigError(f"{theorem} covers linear gradient growth only (q = 1), got q = {q}")
    if theorem in ("T2", "T2_gap") and not q > 1.0:
        raise ConfigError(f"{theorem} needs q in (1, 2], got q = {q}")
    if theorem == "talenti" and H != "affine":
        raise ConfigError("the talenti scenario needs H: affine")
    if H == "affine" and q != 1.0:
        if alpha is not None:
            raise ConfigError("affine H with a drift term has linear gradient growth; use q = 1")

    solver = data.get("solver", {}) or {}
    tol_data = data.get("tolerances", {}) or {}
    known = {f.name for f in fields(Tolerances)}
    if set(tol_data) - known:
        raise ConfigError(f"unknown tolerance keys {sorted(set(tol_data) - known)}")
    try:
        tol_values = {k: float(v) for k, v in tol_data.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"tolerances must be numbers: {exc}") from exc
    negative = sorted(k for k, v in tol_values.items() if not v >= 0)
    if negative:
        raise ConfigError(f"tolerances must be non-negative: {negative}")
    tolerances = Tolerances(**tol_values)

    majorization = None
    if data.get("majorization"):
        maj = data["majorization"]
        if theorem not in ("T1", "T2"):
            raise ConfigError("majorization overrides need a T1 or T2 base scenario")
        allowed = {"a_bar", "f_bar", "delta_bar"}
        if set(maj) - allowed:
            raise ConfigError(f"unknown majorization keys {sorted(set(maj) - allowed)}")
        majorization = Majorization(**{
            k: parse(maj[k], extra_names=MAJORANT_NAMES) for k in allowed if maj.get(k) is not None
        })
        for e in (majorization.a_bar, majorization.f_bar, majorization.delta_bar):
            if e is not None and e.depends_on("x", "y", "s", "p", "px", "py"):
                raise ConfigError("majorants are radial: use r and the symmetrized profiles only")

    ladder = int(data.get("ladder", 128))
    radial_grid = int(data.get("radial_grid", 512))
    if radial_grid < 16:
        raise ConfigError("radial_grid must be at least 16")

    config = ScenarioConfig(
        name=name,
        theorem=theorem,
        domain=domain,
        A=A,
        Lambda=Lambda,
        alpha=alpha,
        a=a,
        b=b,
        f=f,
        H=H,
        H_expr=H_expr,
        q=q,
        resolutions=resolutions,
        ladder=ladder,
        radial_grid=radial_grid,
        relaxation=float(solver.get("relaxation", 0.5)),
        max_iter=int(solver.get("max_iter", 500)),
        solver_tol=float(solver.get("tol", 1e-10)),
        tolerances=tolerances,
        majorization=majorization,
        description=str(data.get("description", "")),
        raw=raw,
    )
    _validate_on_bounding_box(config)
    return config


def _bounding_box(domain: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
    if domain.kind == "disk":
        r = domain.params[0]
        return np.array([-r, -r]), np.array([r, r])
    if domain.kind == "ellipse":
        sx, sy = domain.params
        return np.array([-sx, -sy]), np.array([sx, sy])
    if domain.kind == "interval":
        return np.array([domain.params[0]]), np.array([domain.params[1]])
    pts = np.asarray(domain.params, dtype=float)
    return pts.min(axis=0), pts.max(axis=0)


def _validate_on_bounding_box(config: ScenarioConfig) -> None:
    lo, hi = _bounding_box(config.domain)
    axes = [np.linspace(l, u, 21) for l, u in zip(lo, hi)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    exprs = [config.a, config.b, config.f]
    exprs += [config.Lambda] if config.Lambda is not None else []
    exprs += list(config.alpha or ())
    exprs += [config.H_expr] if config.H_expr is not None else []
    if config.A[0] == "scalar":
        exprs.append(config.A[1])
    else:
        exprs += [e for row in config.A[1] for e in row]
    for e in exprs:
        evaluate_at(e, pts)
    b_box = evaluate_at(config.b, pts)
    if np.any(b_box < 0):
        raise ConfigError("b must be non-negative")
    if config.theorem in ("T2", "T2_gap") and not b_box.min() > 0:
        raise ConfigError("T2 needs inf b > 0")


def load_config(path: str | Path) -> ScenarioConfig:
    return ScenarioConfig.load(path)


def corpus_paths() -> list[Path]:
    """Shipped scenario files, sorted by name."""
    root = resources.files("symm_compare") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith((".yaml", ".yml", ".json")))


def talenti_demo_config() -> ScenarioConfig:
    """Ball, identity diffusion, no drift: the equality case of the classical comparison."""
    return ScenarioConfig.from_dict({
        "name": "talenti_demo_ball",
        "theorem": "talenti",
        "description": "Unit disk, A = Id, alpha = 0, b = 0, f = 1: |u|* and v coincide.",
        "domain": {"kind": "disk", "radius": 1.0},
        "coefficients": {"A": 1, "alpha": [0, 0], "b": 0, "f": 1},
        "H": "affine",
        "q": 1,
        "resolutions": [0.04],
    })


# ---------------------------------------------------------------------------
# Report


@dataclass
class Check:
    name: str
    margin: float
    tolerance: float
    passed: bool
    h: float | None = None
    strict: bool = False
    detail: str = ""

    @classmethod
    def at_least(cls, name: str, margin: float, tolerance: float, h: float | None = None,
                 detail: str = "") -> "Check":
        """Pass when ``margin >= -tolerance``."""
        margin = float(margin)
        return cls(name, margin, float(tolerance), bool(margin >= -tolerance), h, False, detail)

    @classmethod
    def positive(cls, name: str, margin: float, h: float | None = None, detail: str = "") -> "Check":
        """Pass when ``margin > 0`` strictly."""
        margin = float(margin)
        return cls(name, margin, 0.0, bool(margin > 0), h, True, detail)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "margin": _finite_or_none(self.margin),
            "tolerance": self.tolerance,
            "pass": self.passed,
            "strict": self.strict,
            "h": self.h,
            "detail": self.detail,
        }


@dataclass
class ResolutionResult:
    """Everything computed at one mesh size."""

    h: float
    mesh: TriMesh
    u: NodalField
    u_star: RadialProfile
    v: RadialSolution
    grid: np.ndarray
    lam_hat: RadialProfile
    a_hat: RadialProfile
    rhs: RadialProfile
    constants: dict
    traces: dict
    psi_hat: RadialProfile | None = None
    F: RadialProfile | None = None
    f_hat: RadialProfile | None = None
    ladder: LevelLadder | None = None
    problem: RadialProblem | None = None
    symmetrized: SymmetrizedProblem | None = None
    checks: list[Check] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return float((self.v.profile(self.grid) - self.u_star(self.grid)).min())

    def restricted_margin(self, fraction: float) -> float:
        """``min(v - u*)`` over radii where ``u*`` exceeds ``fraction`` of its maximum."""
        us = self.u_star(self.grid)
        mask = us > fraction * us.max()
        return float((self.v.profile(self.grid)[mask] - us[mask]).min())


@dataclass
class VerificationReport:
    scenario: str
    theorem: str
    checks: list[Check] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    timestamp: str = ""
    results: list[ResolutionResult] = field(default_factory=list, repr=False)
    majorant: RadialSolution | None = field(default=None, repr=False)

    def add(self, check: Check) -> None:
        key = (check.name, check.h)
        if any((c.name, c.h) == key for c in self.checks):
            raise ValueError(f"check {check.name!r} at h={check.h} recorded twice")
        self.checks.append(check)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def finest(self) -> ResolutionResult:
        return min(self.results, key=lambda r: r.h)

    def check(self, name: str, h: float | None = None) -> Check:
        """The check called ``name`` (at the finest resolution unless ``h`` is given)."""
        matches = [c for c in self.checks if c.name == name]
        if h is not None:
            matches = [c for c in matches if c.h == h]
        if not matches:
            raise KeyError(name)
        return min(matches, key=lambda c: c.h if c.h is not None else 0.0)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return _sanitize({
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "theorem": self.theorem,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "constants": self.constants,
            "traces": self.traces,
            "provenance": self.provenance,
            "diagnostics": self.diagnostics,
            "timestamp": self.timestamp,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _finite_or_none(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _hkey(h: float) -> str:
    return repr(float(h))


@contextmanager
def _stage(name: str):
    try:
        yield
    except SymmCompareError as exc:
        if exc.stage is None:
            exc.with_stage(name)
        raise


# ---------------------------------------------------------------------------
# Coefficient evaluation


@dataclass
class _Coefficients:
    """Coefficients on one mesh: diffusion matrix and per-cell data at the solution."""

    mesh: TriMesh
    A: CellMatrixField
    lam: CellField

    @classmethod
    def build(cls, config: ScenarioConfig, mesh: TriMesh) -> "_Coefficients":
        x = mesh.centroids
        if config.A[0] == "scalar":
            coef = evaluate_at(config.A[1], x)
            mats = coef[:, None, None] * np.eye(mesh.dim)
        else:
            rows = config.A[1]
            mats = np.empty((mesh.n_cells, 2, 2))
            for i in range(2):
                for j in range(2):
                    mats[:, i, j] = evaluate_at(rows[i][j], x)
        A = CellMatrixField(mesh, mats)
        eig = A.smallest_eigenvalues()
        if config.Lambda is None:
            lam = eig
        else:
            lam = evaluate_at(config.Lambda, x)
            if np.any(lam <= 0):
                raise ConfigError("Lambda must be positive")
            if np.any(eig < lam - 1e-12 * np.maximum(1.0, lam)):
                raise ConfigError("A >= Lambda Id is violated")
        return cls(mesh, A, CellField(mesh, lam))


def _cell_values(expr: Expression, mesh: TriMesh, u: NodalField | None = None) -> np.ndarray:
    if u is None:
        return evaluate_at(expr, mesh.centroids)
    return evaluate_at(expr, mesh.centroids, u.cell_values().mean(axis=1), gradient(u))


def _nodal_values(expr: Expression, mesh: TriMesh) -> np.ndarray:
    return evaluate_at(expr, mesh.nodes)


def _alpha_nodes(config: ScenarioConfig, mesh: TriMesh) -> np.ndarray | None:
    if config.alpha is None:
        return None
    return np.stack([_nodal_values(c, mesh) for c in config.alpha], axis=1)


def _make_h(config: ScenarioConfig) -> Callable:
    q = config.q

    if config.H == "expression":
        expr = config.H_expr

        def func(x, s, p):
            return evaluate_at(expr, x, s, p)
    else:
        a_e, b_e, f_e = config.a, config.b, config.f

        def func(x, s, p):
            pnorm = np.linalg.norm(p, axis=1)
            return (-evaluate_at(a_e, x, s, p) * pnorm**q + evaluate_at(b_e, x, s, p) * s
                    - evaluate_at(f_e, x, s, p))
    return func


# ---------------------------------------------------------------------------
# Pipeline stages


def _solve_u(config: ScenarioConfig, mesh: TriMesh, coeffs: _Coefficients, h: float) -> tuple[NodalField, dict]:
    if config.uses_affine_h:
        alpha = _alpha_nodes(config, mesh)
        peclet = mesh_peclet(coeffs.A, alpha)
        if peclet >= 1.0:
            raise ConfigError(f"mesh Peclet number {peclet:.3f} >= 1 at h={h}; refine or reduce the drift")
        b_nodes = _nodal_values(config.b, mesh)
        f_nodes = _nodal_values(config.f, mesh)
        report = solve_linear(coeffs.A, alpha, b_nodes, NodalField(mesh, f_nodes), mesh, tol=config.solver_tol)
        require_converged(report, "linear solve")
        trace = report.to_dict() | {"method": "direct", "peclet": peclet}
        return report.solution, trace
    H = CallbackH(_make_h(config), q=config.q)
    spec = SemilinearSpec(coeffs.A, H)
    report = fixed_point_solve(spec, config.relaxation, config.max_iter, config.solver_tol)
    require_converged(report, "fixed-point solve")
    return report.solution, report.to_dict() | {"method": "fixed_point", "relaxation": config.relaxation}


def _cell_data(config: ScenarioConfig, mesh: TriMesh, u: NodalField) -> dict:
    """``a_u``, ``b_u``, ``f_u`` and ``H(x, u, grad u)`` per cell."""
    grad = gradient(u)
    s = u.cell_values().mean(axis=1)
    x = mesh.centroids
    pnorm = np.linalg.norm(grad, axis=1)
    if config.uses_affine_h:
        if config.alpha is None:
            alpha_cells = np.zeros_like(grad)
        else:
            alpha_cells = np.stack([evaluate_at(c, x) for c in config.alpha], axis=1)
        a_u = np.linalg.norm(alpha_cells, axis=1)
        b_u = evaluate_at(config.b, x)
        f_u = evaluate_at(config.f, x)
        h_u = np.einsum("td,td->t", alpha_cells, grad) + b_u * s - f_u
    else:
        a_u = evaluate_at(config.a, x, s, grad)
        b_u = evaluate_at(config.b, x, s, grad)
        f_u = evaluate_at(config.f, x, s, grad)
        h_u = _make_h(config)(x, s, grad)
    return {"a": a_u, "b": b_u, "f": f_u, "H": h_u, "grad_norm": pnorm, "s": s}


def _boundary_gradient_check(mesh: TriMesh, grad_norm: np.ndarray, tol: Tolerances, h: float) -> Check:
    owners, _ = mesh.boundary_facets
    threshold = tol.boundary_gradient * float(grad_norm.mean())
    margin = float(grad_norm[owners].min()) - threshold
    return Check.positive("boundary_gradient", margin, h,
                          f"min boundary-cell |grad u| minus {tol.boundary_gradient:g} x mean |grad u|")


def _weak_max_check(coeffs: _Coefficients, f_u: np.ndarray, tol: Tolerances, h: float,
                    alpha=None, b_nodes=None) -> Check:
    mesh = coeffs.mesh
    report = solve_linear(coeffs.A, alpha, b_nodes, CellField(mesh, -np.abs(f_u) - 1.0), mesh)
    top = check_weak_max_principle(report.solution)
    return Check.at_least("weak_max_principle", -top, tol.weak_max, h,
                          "max of the solution with right-hand side -(|f_u| + 1); must be <= 0")


def _bounds_margin(values: np.ndarray, lower: float, upper: float) -> float:
    values = values[np.isfinite(values)]
    return float(min((values - lower).min(), (upper - values).min()))


def _ladder_values(profile: RadialProfile, ladder: LevelLadder) -> np.ndarray:
    keep = [k for k in range(ladder.size) if k not in ladder.dropped]
    return profile(ladder.radii[keep])


def _relative_error(approx: float, exact: float) -> float:
    return abs(approx - exact) / max(abs(exact), 1e-300)


def _pipeline(config: ScenarioConfig, h: float) -> ResolutionResult:
    """Solve, rearrange, symmetrize and solve the radial problem at mesh size ``h``."""
    tol = config.tolerances
    n = config.domain.dim
    checks: list[Check] = []
    with _stage("mesh"):
        mesh = build_mesh(config.domain.with_h(h))
    with _stage("coefficients"):
        coeffs = _Coefficients.build(config, mesh)
    with _stage("solve"):
        u, solve_trace = _solve_u(config, mesh, coeffs, h)
    with _stage("cell_data"):
        data = _cell_data(config, mesh, u)
        b_nodes = _nodal_values(config.b, mesh) if config.uses_affine_h else None
        inf_b = float(min(data["b"].min(), evaluate_at(config.b, mesh.nodes).min()))
        alpha = _alpha_nodes(config, mesh) if config.uses_affine_h else None
    checks.append(_weak_max_check(coeffs, data["f"], tol, h, alpha, b_nodes))
    checks.append(_boundary_gradient_check(mesh, data["grad_norm"], tol, h))
    interior = mesh.interior_nodes
    checks.append(Check.positive("positivity", float(u.values[interior].min()), h,
                                 "min of u over interior nodes"))
    if config.H == "expression":
        structural = (-data["a"] * data["grad_norm"] ** config.q + data["b"] * data["s"] - data["f"])
        checks.append(Check.at_least("structural_bound", float((data["H"] - structural).min()), tol.hyp_h, h,
                                     "H(x,u,grad u) + a|grad u|^q - b u + f over cells"))

    with _stage("rearrange"):
        grid = uniform_grid(equimeasurable_radius(mesh.area, n), config.radial_grid)
        u_star = schwarz_rearrangement(u, n)
        f_cells = CellField(mesh, data["f"])
        f_star = schwarz_rearrangement(f_cells, n)
    with _stage("symmetrize"):
        ladder = build_ladder(u, config.ladder, n)
        lam_cells = coeffs.lam
        a_cells = CellField(mesh, data["a"])
        lam_hat = hat_lambda(u, lam_cells, ladder)
        a_hat = hat_a(u, a_cells, lam_cells, lam_hat, ladder, config.q)
        F = flux_F(u, coeffs.A, ladder, lam_hat, CellField(mesh, data["H"]))
        psi_hat = hat_psi(F, ladder.R, config.radial_grid)
        eta = eta_gap(psi_hat, ladder)
        f_hat = hat_f(u, f_cells, ladder)

    R = ladder.R
    theorem2 = config.theorem in ("T2", "T2_gap")
    constants: dict = {
        "h": h,
        "n": n,
        "R": R,
        "M": ladder.max_value,
        "area": mesh.area,
        "q": config.q,
        "eta": eta,
        "inf_b": inf_b,
        "int_lambda_inv": float(mesh.cell_areas @ (1.0 / lam_cells.values)),
        "int_lambda_hat_inv": lam_hat.ball_integral(lambda v: 1.0 / v),
        "int_f_u": integrate(f_cells),
        "int_f_hat": f_hat.ball_integral(),
        "lambda_min": float(lam_cells.values.min()),
        "lambda_max": float(lam_cells.values.max()),
        "a_plus_min": float(np.maximum(data["a"], 0).min()),
        "a_plus_max": float(np.maximum(data["a"], 0).max()),
        "f_min": float(data["f"].min()),
        "f_max": float(data["f"].max()),
        "ladder_levels": ladder.size,
        "ladder_dropped": len(ladder.dropped),
        "norms": {
            "u_star_inf": float(u_star.values.max()),
            "u_inf": float(np.abs(u.values).max()),
            "u_L2": u_star.lp_norm(2.0),
            "grad_u_inf": float(data["grad_norm"].max()),
            "grad_u_L2": math.sqrt(float(mesh.cell_areas @ data["grad_norm"] ** 2)),
        },
    }

    with _stage("radial_solve"):
        if theorem2:
            delta, raw_ratio = delta_hat(psi_hat, ladder, inf_b)
            constants["delta_hat"] = delta
            constants["delta_ratio_raw"] = raw_ratio
            problem = RadialProblem(n, R, lam_hat, a_hat, f_hat, form="semilinear", q=config.q,
                                    delta=delta, grid_points=config.radial_grid)
            v = solve_semilinear_radial(problem)
            rhs = f_hat
        else:
            problem = RadialProblem(n, R, lam_hat, a_hat, f_star, form="abs_gradient",
                                    grid_points=config.radial_grid)
            v = solve_abs_gradient(problem)
            rhs = f_star

    symmetrized = SymmetrizedProblem(
        n, R, config.q, lam_hat, a_hat, rhs, constants.get("delta_hat", 0.0), eta,
        provenance={"scenario": config.name, "h": h, "psi": "u", "rhs": "f_hat" if theorem2 else "f_star"},
    )
    result = ResolutionResult(h, mesh, u, u_star, v, grid, lam_hat, a_hat, rhs, constants,
                              {"fem": solve_trace, "radial": v.trace()}, psi_hat, F, f_hat, ladder, problem,
                              symmetrized, checks)
    _symmetrization_checks(config, result, data, f_hat)
    _diagnostics(config, result, data, f_hat)
    return result


def _dominance_check(name: str, result: ResolutionResult, tol: Tolerances, lower: RadialProfile,
                     upper: RadialProfile, detail: str) -> Check:
    grid = result.grid
    margin = float((upper(grid) - lower(grid)).min())
    bound = tol.dominance(result.h, result.constants["norms"]["u_star_inf"],
                          result.constants["norms"]["grad_u_inf"])
    return Check.at_least(name, margin, bound, result.h, detail)


def _symmetrization_checks(config: ScenarioConfig, result: ResolutionResult, data: dict,
                           f_hat: RadialProfile) -> None:
    tol = config.tolerances
    c = result.constants
    h = result.h
    ladder = result.ladder
    q = config.q
    checks = result.checks
    checks.append(_dominance_check("dominance", result, tol, result.u_star, result.v.profile,
                                   "min over the radial grid of v - u*"))
    lam_vals = _ladder_values(result.lam_hat, ladder)
    checks.append(Check.at_least("lambda_hat_bounds", _bounds_margin(lam_vals, c["lambda_min"], c["lambda_max"]),
                                 tol.bounds, h, "min Lambda <= Lambda_hat <= max Lambda"))
    checks.append(Check.at_least(
        "lambda_inverse_conservation", -_relative_error(c["int_lambda_hat_inv"], c["int_lambda_inv"]),
        tol.conservation(h), h, "relative mismatch of the integrals of 1/Lambda_hat and 1/Lambda"))
    a_vals = _ladder_values(result.a_hat, ladder)
    ratio = c["lambda_max"] / c["lambda_min"]
    checks.append(Check.at_least(
        "a_hat_bounds", _bounds_margin(a_vals, c["a_plus_min"], c["a_plus_max"] * ratio ** (q - 1.0)),
        tol.bounds, h, "min a+ <= a_hat <= max a+ (max Lambda / min Lambda)^(q-1)"))
    if config.theorem in ("T2", "T2_gap"):
        checks.append(Check.at_least(
            "a_hat_bounds_theorem2",
            _bounds_margin(a_vals, c["a_plus_min"] / ratio ** (q - 1.0), c["a_plus_max"] * ratio ** (2.0 * q - 2.0)),
            tol.bounds, h, "inf a+ (Lambda ratio)^-(q-1) <= a_hat <= sup a+ (Lambda ratio)^(2q-2)"))
        f_vals = _ladder_values(f_hat, ladder)
        checks.append(Check.at_least("f_hat_bounds", _bounds_margin(f_vals, c["f_min"], c["f_max"]),
                                     tol.bounds, h, "min f_u <= f_hat <= max f_u"))
        checks.append(Check.at_least("f_conservation", -_relative_error(c["int_f_hat"], c["int_f_u"]),
                                     tol.conservation(h), h, "relative mismatch of the integrals of f_hat and f_u"))
        delta, inf_b = c["delta_hat"], c["inf_b"]
        checks.append(Check("delta_hat_range", min(delta, inf_b - delta), 0.0,
                            bool(delta > 0 and delta <= inf_b), h, False, "0 < delta_hat <= inf b"))
    checks.append(Check.at_least("key1_levels", result.constants["eta"], tol.key1, h,
                                 "min over levels of psi_hat(rho(a))/a - 1"))


def _diagnostics(config: ScenarioConfig, result: ResolutionResult, data: dict, f_hat: RadialProfile) -> None:
    ladder = result.ladder
    key2 = key2_check(ladder, CellField(result.mesh, data["H"]), CellField(result.mesh, data["a"]),
                      CellField(result.mesh, data["f"]), config.q, result.lam_hat, result.a_hat, f_hat,
                      result.F, tol=5e-2)
    k1 = key1_margins(result.psi_hat, ladder)
    result.diagnostics = {
        "key1_min_margin": float(np.nanmin(k1[1:])) if ladder.size > 1 else float("nan"),
        "key2_min_margin_exists": float(np.nanmin(key2.margin_exists)),
        "key2_min_margin_all": float(np.nanmin(key2.margin_all)),
        "key2_failing_levels": len(key2.failing_levels),
        "radial_path": result.v.path,
    }


def _gap_measure(result: ResolutionResult, fraction: float) -> float:
    grid = result.grid
    us = result.u_star(grid)
    mask = us > fraction * us.max()
    return float((result.v.profile(grid)[mask] / us[mask]).min() - 1.0)


# ---------------------------------------------------------------------------
# Theorem-level runners


def _new_report(config: ScenarioConfig) -> VerificationReport:
    return VerificationReport(
        scenario=config.name,
        theorem=config.theorem,
        provenance={
            "config_hash": config.config_hash(),
            "package_version": __version__,
            "resolutions": list(config.resolutions),
            "ladder": config.ladder,
            "radial_grid": config.radial_grid,
            "domain": {"kind": config.domain.kind, "params": list(config.domain.params)},
            "meshes": {},
        },
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    )


def _absorb(report: VerificationReport, result: ResolutionResult, fraction: float) -> None:
    key = _hkey(result.h)
    result.constants["dominance_margin"] = result.margin
    result.constants["restricted_margin"] = result.restricted_margin(fraction)
    for c in result.checks:
        report.add(c)
    report.constants[key] = result.constants
    report.traces[key] = result.traces
    report.diagnostics[key] = result.diagnostics
    report.provenance["meshes"][key] = result.mesh.stats()
    report.results.append(result)


def _refinement_check(report: VerificationReport, tol: Tolerances) -> None:
    if len(report.results) < 2:
        return
    coarse, fine = sorted(report.results, key=lambda r: -r.h)[-2:]
    floor = tol.dominance(fine.h, fine.constants["norms"]["u_star_inf"], fine.constants["norms"]["grad_u_inf"])
    slack = tol.refinement_slack * max(abs(coarse.margin), floor)
    report.add(Check.at_least("dominance_refinement", fine.margin - coarse.margin, slack, None,
                              f"dominance margin at h={fine.h} minus margin at h={coarse.h}"))


def _run_core(config: ScenarioConfig, expected: tuple[str, ...]) -> VerificationReport:
    if config.theorem not in expected:
        raise ConfigError(f"scenario {config.name!r} declares theorem {config.theorem}, expected {expected}")
    report = _new_report(config)
    for h in config.resolutions:
        _absorb(report, _pipeline(config, h), config.tolerances.gap_fraction)
    _refinement_check(report, config.tolerances)
    return report


def _add_gap_checks(report: VerificationReport, config: ScenarioConfig) -> None:
    tol = config.tolerances
    report.provenance["gap_restriction"] = (
        f"eta_prime = min(v/u*) - 1 over radii where u* > {tol.gap_fraction:g} max u*"
    )
    for result in report.results:
        eta_prime = _gap_measure(result, tol.gap_fraction)
        result.constants["eta_prime"] = eta_prime
        if config.domain.is_ball:
            report.add(Check.at_least("gap_degenerate", -abs(eta_prime), tol.gap_degenerate, result.h,
                                      "ball domain: |eta_prime| must be small"))
        else:
            report.add(Check.positive("gap_positive", eta_prime, result.h, "eta_prime > 0 on a non-ball domain"))
            scaled = RadialProfile(result.u_star.n, result.u_star.r, (1.0 + eta_prime) * result.u_star.values)
            report.add(_dominance_check("gap_dominance", result, tol, scaled, result.v.profile,
                                        "min of v - (1 + eta_prime) u* over the radial grid"))
    if len(report.results) >= 2 and not config.domain.is_ball:
        coarse, fine = sorted(report.results, key=lambda r: -r.h)[-2:]
        for key, label in (("eta_prime", "eta_prime_stability"), ("eta", "eta_stability")):
            a, b = coarse.constants[key], fine.constants[key]
            drift = abs(a - b) / max(abs(b), 1e-300)
            if key == "eta_prime":
                report.add(Check.at_least(label, -drift, tol.eta_stability, None,
                                          f"relative drift of {key} between h={coarse.h} and h={fine.h}"))
            else:
                report.constants.setdefault("stability", {})[key] = drift
        report.add(Check.positive("gap_sign_stable", min(coarse.constants["eta_prime"], fine.constants["eta_prime"]),
                                  None, "eta_prime positive at both of the two finest resolutions"))


def _add_delta_stability(report: VerificationReport, config: ScenarioConfig) -> None:
    if len(report.results) < 2:
        return
    coarse, fine = sorted(report.results, key=lambda r: -r.h)[-2:]
    a, b = coarse.constants["delta_hat"], fine.constants["delta_hat"]
    report.add(Check.at_least("delta_hat_stability", -abs(a - b) / b, config.tolerances.delta_stability, None,
                              f"relative change of delta_hat between h={coarse.h} and h={fine.h}"))


def run_theorem1(config: ScenarioConfig) -> VerificationReport:
    """Linear gradient growth: ``u* <= v`` with ``v`` the radial absolute-gradient solution."""
    return _run_core(config, ("T1",))


def run_theorem1_gap(config: ScenarioConfig) -> VerificationReport:
    report = _run_core(config, ("T1_gap",))
    _add_gap_checks(report, config)
    return report


def run_theorem2(config: ScenarioConfig) -> VerificationReport:
    """Superlinear gradient growth with ``inf b > 0``: semilinear radial comparison."""
    report = _run_core(config, ("T2",))
    _add_delta_stability(report, config)
    return report


def run_theorem2_gap(config: ScenarioConfig) -> VerificationReport:
    report = _run_core(config, ("T2_gap",))
    _add_delta_stability(report, config)
    _add_gap_checks(report, config)
    return report


def _talenti_pipeline(config: ScenarioConfig, h: float) -> ResolutionResult:
    tol = config.tolerances
    n = config.domain.dim
    with _stage("mesh"):
        mesh = build_mesh(config.domain.with_h(h))
    with _stage("coefficients"):
        coeffs = _Coefficients.build(config, mesh)
        if coeffs.A.smallest_eigenvalues().min() < 1.0 - 1e-12:
            raise ConfigError("the talenti scenario needs A >= Id")
        alpha = _alpha_nodes(config, mesh)
        alpha_sup = 0.0 if alpha is None else float(np.linalg.norm(alpha, axis=1).max())
    with _stage("solve"):
        u, trace = _solve_u(config, mesh, coeffs, h)
    checks: list[Check] = []
    b_nodes = _nodal_values(config.b, mesh)
    f_nodes = _nodal_values(config.f, mesh)
    checks.append(_weak_max_check(coeffs, _cell_values(config.f, mesh), tol, h, alpha, b_nodes))
    with _stage("rearrange"):
        abs_u = u.with_values(np.abs(u.values))
        u_star = schwarz_rearrangement(abs_u, n)
        f_star = schwarz_rearrangement(NodalField(mesh, np.abs(f_nodes)), n)
        R = u_star.R
        grid = uniform_grid(R, config.radial_grid)
    with _stage("radial_solve"):
        ones = RadialProfile(n, [0.0, R], [1.0, 1.0])
        drift = RadialProfile(n, [0.0, R], [alpha_sup, alpha_sup])
        problem = RadialProblem(n, R, ones, drift, f_star, form="er_drift", grid_points=config.radial_grid)
        v = solve_er_drift(problem)
    grad_norm = np.linalg.norm(gradient(u), axis=1)
    v_inf = float(np.abs(v.profile.values).max())
    constants = {
        "h": h,
        "n": n,
        "R": R,
        "M": float(u.values.max()),
        "area": mesh.area,
        "alpha_sup": alpha_sup,
        "relative_gap_inf": float(np.abs(v.profile(grid) - u_star(grid)).max()) / v_inf if v_inf > 0 else 0.0,
        "int_f_abs": integrate(NodalField(mesh, np.abs(f_nodes))),
        "norms": {
            "u_star_inf": float(u_star.values.max()),
            "u_inf": float(np.abs(u.values).max()),
            "u_L2": u_star.lp_norm(2.0),
            "grad_u_inf": float(grad_norm.max()) if len(grad_norm) else 0.0,
        },
    }
    result = ResolutionResult(h, mesh, u, u_star, v, grid, ones, drift, f_star, constants,
                              {"fem": trace, "radial": v.trace()}, problem=problem, checks=checks)
    checks.append(_dominance_check("dominance", result, tol, u_star, v.profile, "min over the radial grid of v - |u|*"))
    result.diagnostics = {"radial_path": v.path}
    return result


def run_talenti(config: ScenarioConfig) -> VerificationReport:
    """Classical comparison ``|u|* <= v`` for ``-div(A grad u) + alpha . grad u + b u = f``."""
    if config.theorem != "talenti":
        raise ConfigError(f"scenario {config.name!r} is not a talenti scenario")
    report = _new_report(config)
    for h in config.resolutions:
        _absorb(report, _talenti_pipeline(config, h), config.tolerances.gap_fraction)
    _refinement_check(report, config.tolerances)
    return report


def _majorant_env(result: ResolutionResult, grid: np.ndarray) -> dict:
    c = result.constants
    return {
        "r": grid,
        "a_hat": result.a_hat(grid),
        "f_hat": result.f_hat(grid),
        "f_star": result.rhs(grid),
        "lambda_hat": result.lam_hat(grid),
        "delta_hat": np.full_like(grid, c.get("delta_hat", 0.0)),
    }


def run_corollary_majorization(config: ScenarioConfig) -> VerificationReport:
    """Base T1/T2 run plus the radial solve with majorized coefficients ``a_bar, f_bar, delta_bar``."""
    if config.majorization is None:
        raise ConfigError("scenario has no majorization section")
    base = run_theorem1 if config.theorem == "T1" else run_theorem2
    report = base(replace(config, majorization=None))
    result = report.finest
    maj = config.majorization
    grid = result.grid
    env = _majorant_env(result, grid)
    problem = result.problem
    theorem2 = config.theorem == "T2"
    with _stage("majorization"):
        def radial(expr: Expression | None, default: np.ndarray) -> np.ndarray:
            if expr is None:
                return default
            vals = np.broadcast_to(expr(**{k: env[k] for k in expr.names}), grid.shape).astype(float)
            if not np.all(np.isfinite(vals)):
                raise ConfigError(f"majorant {expr.source!r} is not finite")
            return vals

        a_bar = radial(maj.a_bar, env["a_hat"])
        f_base = env["f_hat"] if theorem2 else env["f_star"]
        f_bar = radial(maj.f_bar, f_base)
        slack = 1e-12 * max(1.0, float(np.abs(f_base).max()))
        if np.any(a_bar < env["a_hat"] - 1e-12):
            raise ConfigError("majorant a_bar must dominate a_hat")
        if np.any(f_bar < f_base - slack):
            raise ConfigError("majorant f_bar must dominate " + ("f_hat" if theorem2 else "f_star"))
        n = problem.n
        changes = {"a": RadialProfile(n, grid, a_bar), "g": RadialProfile(n, grid, f_bar)}
        if theorem2:
            delta = result.constants["delta_hat"]
            delta_bar = float(radial(maj.delta_bar, np.full_like(grid, delta))[0])
            if not 0.0 < delta_bar <= delta * (1.0 + 1e-12):
                raise ConfigError(f"delta_bar must lie in (0, delta_hat = {delta:.6g}], got {delta_bar:.6g}")
            changes["delta"] = delta_bar
            report.constants[_hkey(result.h)]["delta_bar"] = delta_bar
            v_bar = solve_semilinear_radial(problem.replace(**changes))
        else:
            if maj.delta_bar is not None:
                raise ConfigError("delta_bar only applies to T2 scenarios")
            v_bar = solve_abs_gradient(problem.replace(**changes))
    report.majorant = v_bar
    report.traces[_hkey(result.h)]["majorant"] = v_bar.trace()
    tol = config.tolerances
    report.add(_dominance_check("majorant_dominance", result, tol, result.u_star, v_bar.profile,
                                "min over the radial grid of v_bar - u*"))
    report.add(Check.at_least("majorant_order", float((v_bar.profile(grid) - result.v.profile(grid)).min()),
                              tol.majorization, result.h, "min over the radial grid of v_bar - v"))
    report.theorem = f"{config.theorem}+majorization"
    return report


RUNNERS = {
    "T1": run_theorem1,
    "T1_gap": run_theorem1_gap,
    "T2": run_theorem2,
    "T2_gap": run_theorem2_gap,
    "talenti": run_talenti,
}


def run(config: ScenarioConfig) -> VerificationReport:
    """Dispatch on the declared theorem (and majorization section)."""
    if config.majorization is not None:
        return run_corollary_majorization(config)
    return RUNNERS[config.theorem](config)


# ---------------------------------------------------------------------------
# Export


def report_schema() -> dict:
    text = (resources.files("symm_compare") / "report.schema.json").read_text()
    return json.loads(text)


def validate_report(document: dict) -> None:
    import jsonschema

    jsonschema.validate(document, report_schema())


def export(report: VerificationReport, out_dir: str | Path) -> dict[str, Path]:
    """Write the JSON report, profile CSVs, the symmetrized problem and mesh data into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        document = report.to_dict()
        validate_report(document)
        paths = {"report": out / "report.json"}
        paths["report"].write_text(report.to_json())
        result = report.finest
        grid = result.grid
        columns = {
            "u_star": result.u_star(grid),
            "v": result.v.profile(grid),
            "lambda_hat": result.lam_hat(grid),
            "a_hat": result.a_hat(grid),
            "f_hat": result.rhs(grid),
        }
        paths["profiles"] = out / "profiles.csv"
        write_profiles_csv(paths["profiles"], grid, columns)
        plot = dict(columns)
        plot["margin"] = columns["v"] - columns["u_star"]
        if result.psi_hat is not None:
            plot["psi_hat"] = result.psi_hat(grid)
            plot["F"] = result.F(grid)
        if report.majorant is not None:
            plot["v_bar"] = report.majorant.profile(grid)
        paths["plot_data"] = out / "plot_data.csv"
        write_profiles_csv(paths["plot_data"], grid, plot)
        paths["v"] = out / "v.csv"
        write_profiles_csv(paths["v"], grid, {"v": columns["v"]})
        if result.symmetrized is not None:
            paths["symmetrized"] = out / "symmetrized.csv"
            paths["symmetrized_sidecar"] = out / "symmetrized.json"
            result.symmetrized.export(paths["symmetrized"], paths["symmetrized_sidecar"], len(grid))
        paths["mesh"] = out / "mesh.txt"
        write_mesh(result.mesh, paths["mesh"])
        paths["u"] = out / "u.txt"
        write_field(result.u, paths["u"])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report files: {exc.strerror}", exc.filename) from exc
    return paths
