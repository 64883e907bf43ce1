import math

import numpy as np
import pytest

from symm_compare.errors import ConfigError
from symm_compare.expr import evaluate_at, parse


def test_caret_is_power_and_functions_evaluate():
    expr = parse("2^3 + sin(pi/2) + sqrt(x)")
    assert expr.names == {"x"}
    assert float(expr(x=np.array(4.0))) == pytest.approx(8 + 1 + 2)


def test_numbers_become_constant_expressions():
    expr = parse(1.5)
    assert expr.is_constant
    assert float(expr()) == 1.5


@pytest.mark.parametrize("source", [
    "__import__('os')",
    "x.real",
    "[x, y]",
    "x if y else 1",
    "lambda: 1",
    "open('f')",
    "sin(x, y)",
    "x < y",
    "'text'",
    "True",
    "z + 1",
    "",
])
def test_rejects_anything_outside_the_grammar(source):
    with pytest.raises(ConfigError):
        parse(source)


def test_rejects_non_string_input():
    with pytest.raises(ConfigError):
        parse([1, 2])
    with pytest.raises(ConfigError):
        parse(True)


def test_extra_names_extend_the_variable_set():
    with pytest.raises(ConfigError):
        parse("2*a_hat")
    expr = parse("2*a_hat + r", extra_names=("a_hat",))
    assert expr.depends_on("a_hat")
    assert float(expr(a_hat=np.array(1.0), r=np.array(0.5))) == 2.5


def test_missing_variable_is_reported():
    with pytest.raises(ConfigError, match="needs"):
        parse("x + y")(x=np.array(1.0))


def test_evaluate_at_fills_solution_and_gradient():
    pts = np.array([[0.3, 0.4], [1.0, 0.0]])
    grad = np.array([[3.0, 4.0], [0.0, -2.0]])
    expr = parse("r + s + p + px*py")
    out = evaluate_at(expr, pts, s=np.array([1.0, 2.0]), grad=grad)
    np.testing.assert_allclose(out, [0.5 + 1 + 5 + 12, 1 + 2 + 2 + 0])


def test_evaluate_at_broadcasts_constants():
    out = evaluate_at(parse("2"), np.zeros((5, 2)))
    np.testing.assert_array_equal(out, np.full(5, 2.0))


def test_evaluate_at_in_one_dimension_sets_y_to_zero():
    out = evaluate_at(parse("x + y + r"), np.array([[-0.5], [0.25]]))
    np.testing.assert_allclose(out, [0.0, 0.5])


def test_non_finite_values_are_config_errors():
    with pytest.raises(ConfigError, match="not finite"):
        evaluate_at(parse("1/x"), np.array([[0.0, 1.0]]))
    with pytest.raises(ConfigError):
        evaluate_at(parse("log(x)"), np.array([[-1.0, 0.0]]))


def test_unary_operators():
    assert float(parse("-x + +y")(x=np.array(2.0), y=np.array(5.0))) == 3.0
    assert float(parse("-(2^2)")()) == -4.0
    assert math.isclose(float(parse("exp(-1)*tanh(0)+cos(0)")()), 1.0)
