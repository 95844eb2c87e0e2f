import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from fracexit.analytic import (
    StableExitFormulas,
    brownian_references,
    general_solution,
    harmonic_measure_lower,
    harmonic_measure_upper,
    laplacian_kernel,
    log_gamma,
    mean_exit_time,
    potential_density,
    stable_time_scale,
    tabulate,
)
from fracexit.errors import DomainError


def test_log_gamma():
    assert log_gamma(1.5) == pytest.approx(math.log(math.sqrt(math.pi) / 2), rel=1e-15)
    with pytest.raises(DomainError):
        log_gamma(0.0)


def test_mean_exit_time_values():
    assert mean_exit_time(0.5, 0.0) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-15)
    # 0.75^0.25 / Gamma(1.5)
    assert mean_exit_time(0.5, 0.5) == pytest.approx(1.0500751, abs=1e-7)
    assert mean_exit_time(0.5, -1.0) == 0.0


def test_interval_rescaling():
    F = StableExitFormulas(0.4, 0.0, 4.0)
    assert F.mean_exit_time(2.0) == pytest.approx(mean_exit_time(0.4, 0.0) * 2**0.4, rel=1e-14)
    assert F.harmonic_measure_upper(1.0) == pytest.approx(harmonic_measure_upper(0.4, -0.5), rel=1e-14)
    with pytest.raises(DomainError):
        F.mean_exit_time(5.0)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.5, 0.8, 0.95])
def test_harmonic_measure_is_regularised_incomplete_beta(beta):
    for x in (-0.99, -0.5, 0.0, 0.3, 0.9):
        assert harmonic_measure_upper(beta, x) == pytest.approx(special.betainc(beta / 2, beta / 2, (1 + x) / 2), abs=1e-12)
    assert harmonic_measure_upper(beta, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert harmonic_measure_upper(beta, 1.0) == 1.0
    assert harmonic_measure_upper(beta, -1.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-1, 1))
def test_harmonic_measures_complement_and_monotone(beta, x):
    assert harmonic_measure_lower(beta, x) + harmonic_measure_upper(beta, x) == pytest.approx(1.0, abs=1e-14)
    x2 = min(1.0, x + 0.05)
    assert harmonic_measure_upper(beta, x2) >= harmonic_measure_upper(beta, x) - 1e-14


@pytest.mark.parametrize("beta", [0.3, 0.7])
def test_potential_density_inner_integral_against_quadrature(beta):
    x, y = 0.2, -0.4
    z = (1 - x * x) * (1 - y * y) / (x - y) ** 2
    inner = integrate.quad(lambda r: r ** (beta / 2 - 1) * (1 + r) ** -0.5, 0, z, limit=200)[0]
    expect = 2**-beta * math.pi**-0.5 * math.gamma(0.5) / math.gamma(beta / 2) ** 2 * abs(x - y) ** (beta - 1) * inner
    assert potential_density(beta, x, y) == pytest.approx(expect, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_potential_density_symmetric_and_positive(beta, x, y):
    if abs(x - y) < 1e-6:
        return
    h = potential_density(beta, x, y)
    assert h > 0
    assert h == pytest.approx(potential_density(beta, y, x), rel=1e-12)
    assert h == pytest.approx(potential_density(beta, -x, -y), rel=1e-12)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("x", [0.0, 0.5])
def test_potential_integral_of_one_is_mean_exit_time(beta, x):
    F = StableExitFormulas(beta)
    assert F.potential_integral(x, lambda y: 1.0) == pytest.approx(F.mean_exit_time(x), abs=1e-9)


def test_potential_density_diagonal_raises():
    with pytest.raises(DomainError):
        potential_density(0.5, 0.1, 0.1)


def test_general_solution_combines_parts():
    beta, x = 0.6, 0.3
    v = general_solution(beta, x, 2.0, 5.0, lambda y: 1.0)
    assert v == pytest.approx(2 + 3 * harmonic_measure_upper(beta, x) + mean_exit_time(beta, x), rel=1e-10)


def test_time_scale_and_laplacian_kernel():
    assert stable_time_scale(0.5) == pytest.approx(math.sqrt(2), rel=1e-15)
    k = laplacian_kernel(0.5).left
    assert k.scale * stable_time_scale(0.5) == pytest.approx(1.0, rel=1e-15)


def test_brownian_references():
    r = brownian_references(1.0, 0.0, 1.0, 0.3)
    assert r["exit_prob_upper"] == pytest.approx(0.3)
    assert r["mean_exit_time"] == pytest.approx(0.105)
    # tiny drift agrees with the zero-drift limit
    r2 = brownian_references(1.0, 0.0, 1.0, 0.3, gamma=1e-6)
    assert r2["mean_exit_time"] == pytest.approx(0.105, rel=1e-5)
    # drift toward b raises the upper-exit probability
    assert brownian_references(1.0, 0.0, 1.0, 0.3, gamma=1.0)["exit_prob_upper"] > 0.3


def test_tabulate():
    assert np.allclose(tabulate(lambda x: 2 * x, [0.0, 1.0]), [0.0, 2.0])
