import math

import numpy as np
import pytest

from magnex.expr import Expr, ExprError, ExprEvalError, parse_expr


def test_literal_forms():
    assert parse_expr("1e5")() == 1e5
    assert parse_expr("2.5e-14")() == 2.5e-14
    assert parse_expr("0.125")() == 0.125
    assert parse_expr(".5")() == 0.5
    assert parse_expr("3")() == 3.0
    assert parse_expr("1E+2")() == 100.0


def test_constants_and_variables():
    assert parse_expr("2*pi")() == 6.283185307179586
    e = parse_expr("x + 2*y - z*t")
    assert e(x=1.0, y=2.0, z=3.0, t=4.0) == 1.0 + 4.0 - 12.0
    assert e.variables() == frozenset("xyzt")
    assert parse_expr("pi").is_constant()


def test_precedence_and_associativity():
    assert parse_expr("1 + 2*3")() == 7.0
    assert parse_expr("(1 + 2)*3")() == 9.0
    assert parse_expr("-2^2")() == -4.0      # ^ binds tighter than unary -
    assert parse_expr("2^-2")() == 0.25      # unary minus allowed in exponent
    assert parse_expr("2^3^2")() == 512.0    # right-associative
    assert parse_expr("6/3/2")() == 1.0      # / left-associative
    assert parse_expr("1 - 2 - 3")() == -4.0
    assert parse_expr("-x^2 + 1")(x=2.0) == -3.0


def test_comparisons_yield_indicator_values():
    assert parse_expr("1 < 2")() == 1.0
    assert parse_expr("2 <= 1")() == 0.0
    assert parse_expr("3 == 3")() == 1.0
    assert parse_expr("x >= 0")(x=-1e-30) == 0.0
    assert parse_expr("(x > 1)*5 + 1")(x=2.0) == 6.0
    # comparisons bind loosest
    assert parse_expr("1 + 1 == 2")() == 1.0


def test_functions():
    assert parse_expr("sin(0)")() == 0.0
    assert parse_expr("cos(0)")() == 1.0
    assert parse_expr("min(3, 2^2)")() == 3.0
    assert parse_expr("max(3, 2^2)")() == 4.0
    assert parse_expr("abs(-2)")() == 2.0
    assert parse_expr("tanh(0)")() == 0.0
    assert parse_expr("exp(1)")() == math.e
    assert parse_expr("log(exp(2))")() == pytest.approx(2.0, abs=1e-15)
    assert parse_expr("sqrt(16)")() == 4.0


def test_spec_ramp_and_region_examples():
    assert parse_expr("where(x < 250e-9, 8e5, -8e5)")(x=100e-9) == 8e5
    assert parse_expr("where(x < 250e-9, 8e5, -8e5)")(x=300e-9) == -8e5
    assert parse_expr("t/10e-12")(t=5e-12) == 0.5


def test_where_is_lazy_in_scalar_eval():
    e = parse_expr("where(x > 0, sqrt(x), 0)")
    assert e(x=4.0) == 2.0
    assert e(x=-4.0) == 0.0  # untaken sqrt branch must not raise


def test_domain_errors_name_subexpression():
    with pytest.raises(ExprEvalError, match="sqrt"):
        parse_expr("1 + sqrt(x)")(x=-1.0)
    with pytest.raises(ExprEvalError, match="log"):
        parse_expr("log(x)")(x=0.0)
    # division by zero follows IEEE rules, not an error
    assert parse_expr("1/x")(x=0.0) == math.inf


def test_parse_errors_carry_position():
    with pytest.raises(ExprError, match="column 5"):
        parse_expr("1 + $")
    with pytest.raises(ExprError, match="unknown identifier 'foo'"):
        parse_expr("2*foo")
    with pytest.raises(ExprError, match="unknown function"):
        parse_expr("foo(1)")
    with pytest.raises(ExprError, match="takes 1 argument"):
        parse_expr("sin(1, 2)")
    with pytest.raises(ExprError, match="takes 3 argument"):
        parse_expr("where(1, 2)")
    with pytest.raises(ExprError, match="end of input"):
        parse_expr("1 +")
    with pytest.raises(ExprError, match="trailing"):
        parse_expr("1 2")
    with pytest.raises(ExprError, match="'\\)'"):
        parse_expr("(1 + 2")


ROUND_TRIP_CASES = [
    "1e5",
    "-2^2 + x*y - z/t",
    "where(x < 250e-9, 8e5, -8e5)",
    "sin(2*pi*t/1e-9) * exp(-t/1e-10)",
    "min(3, 2^2) + max(x, -x)",
    "1 - 2 - 3 - x",
    "6/3/2/x",
    "2^3^x",
    "-(x + y)*z",
    "(x <= 0.5) * (y > 0.25) + where(z == 0, 1, 0)",
    "sqrt(abs(x)) + log(1 + abs(y))",
    "tanh((x - 250e-9)/5e-8)",
]


@pytest.mark.parametrize("src", ROUND_TRIP_CASES)
def test_print_parse_round_trip(src):
    e1 = parse_expr(src)
    e2 = parse_expr(str(e1))
    rng = np.random.default_rng(42)
    pts = rng.uniform(-2.0, 2.0, size=(1000, 4))
    for x, y, z, t in pts:
        assert e1(x, y, z, t) == e2(x, y, z, t)  # identical, not just close


def test_grid_eval_matches_scalar():
    e = parse_expr("where(x < 0, sqrt(-x), x^2) + (y > 0)*z - tanh(t - x)")
    rng = np.random.default_rng(3)
    X, Y, Z = rng.normal(size=(3, 4, 5))
    t = 0.3
    got = e.eval_grid(X, Y, Z, t)
    for idx in np.ndindex(X.shape):
        assert got[idx] == e(X[idx], Y[idx], Z[idx], t)


def test_grid_eval_constant_broadcast():
    e = parse_expr("2*pi")
    X = np.zeros((2, 3))
    out = e.eval_grid(X, X, X)
    assert out.shape == (2, 3)
    assert np.all(out == 2 * math.pi)


def test_evaluation_is_deterministic():
    e = parse_expr("sin(x)*exp(y) + z^t")
    a = e(0.3, 0.7, 1.1, 2.0)
    b = e(0.3, 0.7, 1.1, 2.0)
    assert a == b


def test_expr_repr_and_source_kept():
    e = parse_expr("1 +   2 * x")
    assert e.source == "1 +   2 * x"
    assert "2" in str(e) and "x" in str(e)
