"""Safe arithmetic expressions for scenario coefficients.

Grammar: numbers, the variables listed in :data:`VARIABLES`, ``+ - * / ^``
(``**`` is accepted as a synonym of ``^``), unary minus, parentheses and the
functions in :data:`FUNCTIONS`.  Expressions are parsed with :mod:`ast` and
only whitelisted node types are evaluated, so configs cannot execute code.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "log": np.log,
    "tanh": np.tanh,
}
CONSTANTS = {"pi": math.pi}
# x, y: coordinates; r: distance to the origin; s: solution value; p: |grad u|; px, py: gradient
VARIABLES = ("x", "y", "r", "s", "p", "px", "py")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call with keyword arrays for the variables it uses."""

    source: str
    tree: ast.Expression
    names: frozenset

    def __call__(self, **variables) -> np.ndarray:
        missing = self.names - set(variables)
        if missing:
            raise ConfigError(f"expression {self.source!r} needs {sorted(missing)}")
        with np.errstate(all="ignore"):
            return np.asarray(_evaluate(self.tree.body, variables), dtype=float)

    @property
    def is_constant(self) -> bool:
        return not self.names

    def depends_on(self, *names: str) -> bool:
        return bool(self.names & set(names))


def parse(source: str | float | int, extra_names: tuple[str, ...] = ()) -> Expression:
    """Parse ``source``; numbers are accepted directly.

    ``extra_names`` widens the variable set, e.g. with names of radial profiles.
    """
    if isinstance(source, bool):
        raise ConfigError("booleans are not expressions")
    if isinstance(source, (int, float)):
        source = repr(float(source))
    if not isinstance(source, str) or not source.strip():
        raise ConfigError(f"expected an expression string, got {source!r}")
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
    names = set()
    allowed = VARIABLES + tuple(extra_names)
    for node in ast.walk(tree):
        _check_node(node, source, names, allowed)
    return Expression(source, tree, frozenset(names))


def _check_node(node: ast.AST, source: str, names: set, allowed: tuple[str, ...]) -> None:
    if isinstance(node, (ast.Expression, ast.Load)) or type(node) in _BINOPS:
        return
    if isinstance(node, (ast.USub, ast.UAdd)):
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ConfigError(f"operator not allowed in {source!r}")
        return
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ConfigError(f"operator not allowed in {source!r}")
        return
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ConfigError(f"only numeric constants are allowed in {source!r}")
        return
    if isinstance(node, ast.Name):
        if node.id in allowed:
            names.add(node.id)
        elif node.id not in CONSTANTS and node.id not in FUNCTIONS:
            raise ConfigError(f"unknown name {node.id!r} in {source!r}")
        return
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ConfigError(f"unknown function in {source!r}")
        if node.keywords or len(node.args) != 1:
            raise ConfigError(f"functions take exactly one argument in {source!r}")
        return
    raise ConfigError(f"construct {type(node).__name__} not allowed in {source!r}")


def _evaluate(node: ast.AST, env: Mapping[str, np.ndarray]):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return CONSTANTS[node.id]
    if isinstance(node, ast.UnaryOp):
        value = _evaluate(node.operand, env)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](_evaluate(node.args[0], env))
    raise ConfigError(f"cannot evaluate {type(node).__name__}")


def evaluate_at(expr: Expression, points: np.ndarray, s=None, grad=None) -> np.ndarray:
    """Evaluate at ``points`` (shape ``(m, d)``) with optional solution values and gradients."""
    points = np.asarray(points, dtype=float)
    m = len(points)
    x = points[:, 0]
    y = points[:, 1] if points.shape[1] > 1 else np.zeros(m)
    env = {"x": x, "y": y, "r": np.hypot(x, y)}
    zeros = np.zeros(m)
    env["s"] = zeros if s is None else np.asarray(s, dtype=float)
    if grad is None:
        grad = np.zeros((m, points.shape[1]))
    grad = np.asarray(grad, dtype=float)
    env["px"] = grad[:, 0]
    env["py"] = grad[:, 1] if grad.shape[1] > 1 else zeros
    env["p"] = np.linalg.norm(grad, axis=1)
    out = np.broadcast_to(expr(**{k: env[k] for k in expr.names}), (m,)).astype(float)
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"expression {expr.source!r} is not finite on the domain")
    return out
