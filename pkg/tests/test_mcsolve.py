import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fracexit.analytic import brownian_references
from fracexit.errors import ConfigError, DomainError, KernelError
from fracexit.expr import Expr
from fracexit.kernel import KernelSpec, TwoSidedKernel
from fracexit.mcsolve import (
    ExitSide,
    PathConfig,
    block_stream,
    estimate_caputo_solution,
    estimate_exit_statistics,
    estimate_potential_integral,
    estimate_rl_solution,
    sample_path,
    simulate,
)
from fracexit.problem import DiffusionCoefficients, ProblemSpec

from conftest import corrected_mean_exit, stable_pair

FAST = PathConfig(n_paths=4000, block_size=1000, seed=7)


def close(est, value, sigmas=4.0, bias=0.0):
    return abs(est.mean - value) <= sigmas * est.stderr + bias


def test_pure_transport_exits_at_deterministic_time():
    spec = ProblemSpec(0.0, 1.0, TwoSidedKernel.symmetric(KernelSpec.zero()), g=1.0, coeffs=DiffusionCoefficients(gamma="1"))
    s = simulate(spec, 0.5, PathConfig(n_paths=50))
    assert np.allclose(s.tau, 0.5, atol=1e-12)
    assert np.all(s.side == 1)
    assert np.allclose(s.F, 0.5, atol=1e-12)


def test_zero_data_gives_zero():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5))
    est = estimate_caputo_solution(spec, 0.3, FAST)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_exit_probabilities_partition_and_symmetry():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.6))
    st_ = estimate_exit_statistics(spec, 0.0, FAST)
    assert st_["P_lower"].mean + st_["P_upper"].mean + st_["P_upper"].censored_fraction == pytest.approx(1.0, abs=1e-12)
    assert close(st_["P_upper"], 0.5)


@pytest.mark.parametrize("x", [-0.6, 0.4])
def test_harmonic_measure_against_incomplete_beta(x):
    beta = 0.5
    spec = ProblemSpec(-1.0, 1.0, stable_pair(beta))
    st_ = estimate_exit_statistics(spec, x, FAST)
    exact = special.betainc(beta / 2, beta / 2, (1 + x) / 2)
    assert close(st_["P_upper"], exact)


def test_mean_exit_time_matches_kernel_normalised_closed_form():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    cfg = PathConfig(n_paths=20000, block_size=5000, seed=3)
    est = estimate_rl_solution(spec, 0.0, cfg)
    assert close(est, corrected_mean_exit(0.5, 0.0), bias=2e-3)


def test_brownian_mean_exit_time_and_probability():
    spec = ProblemSpec(0.0, 1.0, TwoSidedKernel.symmetric(KernelSpec.zero()), coeffs=DiffusionCoefficients(alpha="0.5"))
    cfg = PathConfig(n_paths=8000, block_size=2000, dt=1e-4, seed=1)
    st_ = estimate_exit_statistics(spec, 0.3, cfg)
    ref = brownian_references(0.5, 0.0, 1.0, 0.3)
    assert close(st_["P_upper"], ref["exit_prob_upper"], bias=5e-3)
    assert close(st_["E_tau"], ref["mean_exit_time"], bias=5e-3)


def test_discount_is_bounded_and_consistent():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), lam=2.0)
    st_ = estimate_exit_statistics(spec, 0.2, FAST)
    s = simulate(spec, 0.2, FAST)
    assert np.all((s.discount > 0) & (s.discount <= 1))
    assert np.allclose(s.discount, np.exp(-2.0 * s.tau))
    assert st_["E_discount_upper"].mean <= st_["P_upper"].mean


def test_determinism_and_worker_invariance():
    spec = ProblemSpec(0.0, 1.0, TwoSidedKernel(KernelSpec.stable(0.5), KernelSpec.tempered(0.7, 2.0)), g=1.0)
    a = simulate(spec, 0.4, PathConfig(n_paths=1200, block_size=300, eps=1e-2, dt=1e-2, seed=11, workers=1))
    b = simulate(spec, 0.4, PathConfig(n_paths=1200, block_size=300, eps=1e-2, dt=1e-2, seed=11, workers=4))
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.F, b.F) and np.array_equal(a.x_exit, b.x_exit)
    c = simulate(spec, 0.4, PathConfig(n_paths=1200, block_size=300, eps=1e-2, dt=1e-2, seed=12))
    assert not np.array_equal(a.tau, c.tau)


def test_standard_error_scales_like_inverse_root_n():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    e1 = estimate_rl_solution(spec, 0.0, PathConfig(n_paths=2000, seed=5))
    e2 = estimate_rl_solution(spec, 0.0, PathConfig(n_paths=8000, seed=5))
    assert e1.stderr / e2.stderr == pytest.approx(2.0, rel=0.15)


def test_potential_of_one_is_the_exit_time():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5))
    pot = estimate_potential_integral(spec, 1.0, 0.1, FAST)
    tau = estimate_exit_statistics(spec, 0.1, FAST)["E_tau"]
    assert pot.mean == pytest.approx(tau.mean, rel=1e-12)


def test_odd_probe_integrates_to_zero_from_centre():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5))
    assert close(estimate_potential_integral(spec, Expr("x"), 0.0, FAST), 0.0)
    with pytest.raises(ConfigError):
        estimate_potential_integral(spec.with_(lam=1.0), 1.0, 0.0, FAST)


def test_rl_estimator_requires_zero_boundary_data():
    with pytest.raises(ConfigError):
        estimate_rl_solution(ProblemSpec(0.0, 1.0, stable_pair(0.5), u_b=1.0), 0.5, FAST)


def test_interrupted_process_lands_on_the_boundary():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5))
    s = simulate(spec, 0.0, FAST)
    assert np.any(np.abs(s.x_exit) > 1)  # overshoot happens
    t = s.interrupted(-1.0, 1.0)
    assert set(np.unique(t.x_exit[t.side != 0])) <= {-1.0, 1.0}
    assert np.array_equal(t.tau, s.tau)


def test_samples_csv_and_records():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    s = simulate(spec, 0.0, PathConfig(n_paths=5))
    lines = s.to_csv().splitlines()
    assert lines[0] == "tau,side,x_exit,F,discount_at_exit"
    assert len(lines) == 6
    assert s[0].side in (ExitSide.LOWER, ExitSide.UPPER)
    one = sample_path(spec, 0.0, PathConfig(), block_stream(0, 0))
    assert one.tau > 0


def test_censoring_warns():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    with pytest.warns(UserWarning, match="censored"):
        est = estimate_rl_solution(spec, 0.0, PathConfig(n_paths=500, t_max=0.05))
    assert est.censored_fraction > 0.05


def test_bad_start_and_kernel():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5))
    with pytest.raises(DomainError):
        simulate(spec, 1.0, FAST)
    bad = KernelSpec.custom(Expr("y**(-2.5)", ("x", "y")), x_dependent=False)
    with pytest.raises(KernelError):
        simulate(ProblemSpec(-1.0, 1.0, TwoSidedKernel.symmetric(bad)), 0.0, FAST)


def test_path_config_validation_and_round_trip():
    cfg = PathConfig(eps=1e-3, seed=9)
    assert PathConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="mc.eps"):
        PathConfig(eps=-1.0)
    with pytest.raises(ConfigError, match="mc.bogus"):
        PathConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="mc.bridge"):
        PathConfig.from_dict({"bridge": 1})


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(-0.8, 0.8))
def test_complementary_boundary_data(beta, x):
    # u_a = 1, u_b = 0 and u_a = 0, u_b = 1 add up to the constant 1 path by path
    spec = ProblemSpec(-1.0, 1.0, stable_pair(beta))
    cfg = PathConfig(n_paths=300, seed=2)
    lo = estimate_caputo_solution(spec.with_(u_a=1.0), x, cfg)
    hi = estimate_caputo_solution(spec.with_(u_b=1.0), x, cfg)
    assert lo.mean + hi.mean == pytest.approx(1.0 - lo.censored_fraction, abs=1e-12)


def test_bias_ladder():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    ref = corrected_mean_exit(0.5, 0.0)
    ests = [estimate_rl_solution(spec, 0.0, PathConfig(eps=eps, n_paths=20000, seed=1)) for eps in (1e-2, 1e-3, 1e-4)]
    for e in ests:
        assert close(e, ref, sigmas=3, bias=e.diagnostics["discard_bias_bound"])
    assert close(ests[-1], ref, sigmas=3)
    bounds = [e.diagnostics["discard_bias_bound"] for e in ests]
    assert bounds[0] > bounds[1] > bounds[2]


def test_doubling_paths_shrinks_stderr():
    spec = ProblemSpec(-1.0, 1.0, stable_pair(0.5), g=1.0)
    e1 = estimate_rl_solution(spec, 0.0, PathConfig(n_paths=5000, seed=8))
    e2 = estimate_rl_solution(spec, 0.0, PathConfig(n_paths=10000, seed=8))
    assert e2.stderr / e1.stderr == pytest.approx(2**-0.5, rel=0.15)
