import math

import numpy as np
import pytest

from fracexit.kernel import KernelSpec, TwoSidedKernel
from fracexit.problem import DiffusionCoefficients, ProblemSpec


def stable_pair(beta, scale=1.0):
    return TwoSidedKernel.symmetric(KernelSpec.stable(beta, scale))


def corrected_mean_exit(beta, x):
    """Mean exit time from (-1, 1) for the process built from ``KernelSpec.stable(beta)`` on both sides.

    Evaluated with mpmath at 30 digits; the factor 2 cos(pi beta / 2) converts
    the fractional-Laplacian closed form to this kernel's time scale.
    """
    import mpmath as mp

    mp.mp.dps = 30
    val = (1 - mp.mpf(x) ** 2) ** (mp.mpf(beta) / 2) / mp.gamma(1 + mp.mpf(beta)) / (2 * mp.cos(mp.pi * mp.mpf(beta) / 2))
    return float(val)


@pytest.fixture
def poisson():
    return ProblemSpec(0.0, 1.0, TwoSidedKernel.symmetric(KernelSpec.zero()), g=1.0, coeffs=DiffusionCoefficients(alpha=1.0))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance check; lines are printed in the terminal summary."""

    def record(label, ok, detail=""):
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
