import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracexit.errors import ConfigError
from fracexit.expr import Expr, as_function, is_zero_function


def test_arithmetic_and_functions():
    f = Expr("2*x**2 - exp(0) + abs(-x) + sin(0) + cos(0) * pi / pi")
    assert f(3.0) == pytest.approx(2 * 9 - 1 + 3 + 0 + 1)


def test_vectorised_and_constant_broadcast():
    xs = np.linspace(0, 1, 5)
    assert np.array_equal(Expr("x*(1 - x)")(xs), xs * (1 - xs))
    c = Expr("1")
    assert c.is_constant
    assert c(xs).shape == xs.shape


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "open('f')", "[x]", "x if x else 1", "lambda: 1", "y"])
def test_rejects_everything_outside_the_grammar(src):
    with pytest.raises(ConfigError):
        Expr(src)


def test_two_variables():
    k = Expr("y**(-1.5) * (1 + x)", ("x", "y"))
    assert k(1.0, 4.0) == pytest.approx(2 / 8)


def test_equality_follows_source():
    assert Expr("x") == Expr("x")
    assert Expr("x") != Expr("x + 0")
    assert hash(Expr("x")) == hash(Expr("x"))


def test_as_function_passes_callables_through():
    f = lambda x: x
    assert as_function(f) is f
    assert isinstance(as_function(2.5), Expr)


def test_zero_detection():
    assert is_zero_function(Expr("0"), 0, 1)
    assert not is_zero_function(Expr("x*(1-x)"), 0, 1)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_polynomial_matches_python(a, x):
    f = Expr(f"{a!r}*x**2 + x - 1")
    assert f(x) == pytest.approx(a * x * x + x - 1, rel=1e-12, abs=1e-9)
