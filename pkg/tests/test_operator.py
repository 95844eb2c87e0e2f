import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fracexit.analytic import laplacian_kernel, stable_time_scale
from fracexit.errors import DomainError, ReducedAccuracyWarning
from fracexit.kernel import KernelSpec, TwoSidedKernel
from fracexit.operator import (
    SmoothFunction,
    caputo_left,
    caputo_right,
    classical_caputo,
    diffusion_apply,
    free_generator_apply,
    rl_left,
    rl_right,
    two_sided_apply,
)
from fracexit.problem import DiffusionCoefficients, ProblemSpec


def power(p, a=0.0):
    return SmoothFunction(
        lambda x: (x - a) ** p,
        lambda x: p * (x - a) ** (p - 1),
        lambda x: p * (p - 1) * (x - a) ** (p - 2),
    )


def caputo_power(beta, p, r):
    """Caputo derivative of order beta of r^p, by the Gamma-function rule."""
    return math.gamma(p + 1) / math.gamma(p + 1 - beta) * r ** (p - beta)


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_left_caputo_of_powers(beta, p):
    k = KernelSpec.stable(beta)
    for x in (0.1, 0.5, 1.0):
        assert caputo_left(power(p), k, 0.0, x) == pytest.approx(-caputo_power(beta, p, x), rel=1e-7)


@pytest.mark.parametrize("beta", [0.3, 0.7])
def test_right_caputo_mirrors_left(beta):
    k = KernelSpec.stable(beta)
    f = SmoothFunction(lambda x: (1 - x) ** 2, lambda x: -2 * (1 - x), lambda x: 2.0)
    for x in (0.2, 0.6):
        assert caputo_right(f, k, 1.0, x) == pytest.approx(-caputo_power(beta, 2.0, 1 - x), rel=1e-7)


@pytest.mark.parametrize("beta", [0.25, 0.6])
def test_classical_caputo_independent_route(beta):
    f = SmoothFunction(np.exp, np.exp, np.exp)
    k = KernelSpec.stable(beta)
    for x in (0.3, 0.9):
        assert caputo_left(f, k, 0.0, x) == pytest.approx(-classical_caputo(f, beta, 0.0, "left", x), rel=1e-7)
        assert caputo_right(f, k, 1.0, x) == pytest.approx(-classical_caputo(f, beta, 1.0, "right", x), rel=1e-7)
    # Caputo derivative of x is x^(1 - beta) / Gamma(2 - beta)
    assert classical_caputo(power(1.0), beta, 0.0, "left", 0.5) == pytest.approx(0.5 ** (1 - beta) / math.gamma(2 - beta), rel=1e-9)


def test_constants_are_annihilated():
    k = KernelSpec.tempered(0.5, 1.0)
    c = SmoothFunction(lambda x: 3.0, lambda x: 0.0, lambda x: 0.0)
    assert caputo_left(c, k, 0.0, 0.4) == pytest.approx(0.0, abs=1e-12)
    assert caputo_right(c, k, 1.0, 0.4) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.05, 0.95), st.floats(-2, 2))
def test_rl_and_caputo_differ_by_boundary_term(beta, x, c):
    k = KernelSpec.stable(beta)
    f = SmoothFunction(lambda y: c + y * y, lambda y: 2 * y, lambda y: 2.0)
    assert rl_left(f, k, 0.0, x) - caputo_left(f, k, 0.0, x) == pytest.approx(-c * k.tail_mass(x, x), rel=1e-9, abs=1e-12)
    assert rl_right(f, k, 1.0, x) - caputo_right(f, k, 1.0, x) == pytest.approx(-(c + 1) * k.tail_mass(x, 1 - x), rel=1e-9, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(beta, s, t):
    spec = ProblemSpec(0.0, 1.0, TwoSidedKernel(KernelSpec.stable(beta), KernelSpec.tempered(0.4, 2.0)))
    f, g = power(2.0), SmoothFunction(np.sin, np.cos, lambda x: -np.sin(x))
    h = SmoothFunction(lambda x: s * f(x) + t * g(x), lambda x: s * f.d1(x) + t * g.d1(x), lambda x: s * f.d2(x) + t * g.d2(x))
    x = 0.37
    lhs = two_sided_apply(h, spec, x)
    rhs = s * two_sided_apply(f, spec, x) + t * two_sided_apply(g, spec, x)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-9)


def exit_time_profile(beta, extend=False):
    """(1 - x^2)^(beta/2) / Gamma(1 + beta), optionally extended by zero off (-1, 1)."""
    c, p = 1 / math.gamma(1 + beta), beta / 2

    def val(x):
        r = 1 - x * x
        return c * r**p if r > 0 else 0.0

    return SmoothFunction(
        val if extend else (lambda x: c * (1 - x * x) ** p),
        lambda x: -2 * p * c * x * (1 - x * x) ** (p - 1),
        lambda x: -2 * p * c * (1 - x * x) ** (p - 1) + 4 * p * (p - 1) * c * x * x * (1 - x * x) ** (p - 2),
    )


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_laplacian_normalised_operator_on_mean_exit_time(beta):
    # (1 - x^2)^(beta/2) / Gamma(1 + beta) solves -(-Delta)^(beta/2) u = -1 on (-1, 1)
    spec = ProblemSpec(-1.0, 1.0, laplacian_kernel(beta))
    for x in (0.0, 0.4):
        assert two_sided_apply(exit_time_profile(beta), spec, x) == pytest.approx(-1.0, rel=1e-6)


@pytest.mark.parametrize("beta", [0.3, 0.6])
def test_stable_pair_is_scaled_fractional_laplacian(beta):
    # the zero-extended profile is the classical fractional-Laplacian exit time, so the
    # whole-line generator of the unscaled pair returns the time-scale factor
    spec = ProblemSpec(-1.0, 1.0, TwoSidedKernel.symmetric(KernelSpec.stable(beta)))
    f = exit_time_profile(beta, extend=True)
    for x in (0.0, 0.5):
        assert free_generator_apply(f, spec, x) == pytest.approx(-stable_time_scale(beta), rel=1e-6)
        assert two_sided_apply(f, spec, x) == pytest.approx(-stable_time_scale(beta), rel=1e-6)


def test_diffusion_part():
    coeffs = DiffusionCoefficients("1 + x", "2")
    assert diffusion_apply(power(2.0), coeffs, 0.5) == pytest.approx(1.5 * 1.0 + 2 * 2.0)


def test_finite_difference_fallback_warns_and_is_close():
    k = KernelSpec.stable(0.5)
    f = SmoothFunction(np.exp, domain=(0.0, 1.0))
    with pytest.warns(ReducedAccuracyWarning):
        v = caputo_left(f, k, 0.0, 0.5)
    exact = caputo_left(SmoothFunction(np.exp, np.exp, np.exp), k, 0.0, 0.5)
    assert v == pytest.approx(exact, rel=1e-5)


def test_operators_vanish_at_terminal_and_reject_outside():
    k = KernelSpec.stable(0.5)
    assert caputo_left(power(2.0), k, 0.0, 0.0) == 0.0
    with pytest.raises(DomainError):
        caputo_left(power(2.0), k, 0.0, -0.1)
    with pytest.raises(DomainError):
        classical_caputo(power(2.0), 1.2, 0.0, "left", 0.5)
