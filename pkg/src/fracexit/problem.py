"""Problem data for the two-sided boundary value problem.

The equation solved everywhere in this package is::

    -D_{a+*} u - D_{b-*} u + gamma u' + alpha u'' = lam u - g   on (a, b)
    u(a) = u_a,  u(b) = u_b

with ``lam >= 0``. Its solution is ``E[u_a e^{-lam tau} 1{exit at a}] +
E[u_b e^{-lam tau} 1{exit at b}] + E[int_0^tau e^{-lam t} g(X_t) dt]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError
from .expr import Expr, as_function, is_zero_function
from .kernel import TwoSidedKernel, check_H1

ENDPOINT_TOL = 1e-8


def _zero():
    return Expr("0")


@dataclass(frozen=True)
class DiffusionCoefficients:
    """Drift ``gamma`` and diffusion ``alpha`` of the local part ``gamma f' + alpha f''``."""

    gamma: Callable = field(default_factory=_zero)
    alpha: Callable = field(default_factory=_zero)

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_function(self.gamma))
        object.__setattr__(self, "alpha", as_function(self.alpha))

    def is_zero(self, a: float, b: float) -> bool:
        return is_zero_function(self.gamma, a, b) and is_zero_function(self.alpha, a, b)

    def regime_issues(self, a: float, b: float) -> list[str]:
        """Describe violations of the hypotheses that make ``{a, b}`` regular.

        Either ``alpha > 0`` with ``alpha'`` and ``gamma`` vanishing at both
        terminals, or ``alpha == 0`` with ``gamma`` vanishing at both terminals.
        """
        issues = []
        xs = np.linspace(a, b, 65)
        alpha = np.broadcast_to(np.asarray(self.alpha(xs), dtype=float), xs.shape)
        gamma_ends = np.abs(np.asarray(self.gamma(np.array([a, b])), dtype=float))
        if np.any(gamma_ends > ENDPOINT_TOL):
            issues.append("drift gamma must vanish at both terminals")
        if np.all(alpha == 0.0):
            return issues
        if np.any(alpha <= 0.0):
            issues.append("diffusion alpha must be positive on [a, b] or identically zero")
        h = 1e-6 * (b - a)
        da = [
            (float(self.alpha(a + h)) - float(self.alpha(a))) / h,
            (float(self.alpha(b)) - float(self.alpha(b - h))) / h,
        ]
        if max(abs(v) for v in da) > 1e-6 * max(1.0, float(np.max(np.abs(alpha)))) + 1e-6:
            issues.append("alpha' must vanish at both terminals")
        return issues


@dataclass(frozen=True)
class ProblemSpec:
    """Complete data of one two-sided boundary value problem."""

    a: float
    b: float
    kernel: TwoSidedKernel
    lam: float = 0.0
    g: Callable = field(default_factory=_zero)
    u_a: float = 0.0
    u_b: float = 0.0
    coeffs: DiffusionCoefficients = field(default_factory=DiffusionCoefficients)

    def __post_init__(self):
        object.__setattr__(self, "g", as_function(self.g))
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ConfigError(f"need finite a < b, got a={self.a}, b={self.b}", "problem.interval")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"discount lam must be >= 0, got {self.lam}", "problem.lam")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def has_diffusion(self) -> bool:
        return not is_zero_function(self.coeffs.alpha, self.a, self.b)

    @property
    def has_drift(self) -> bool:
        return not is_zero_function(self.coeffs.gamma, self.a, self.b)

    def regime_issues(self) -> list[str]:
        """Reasons the well-posedness hypotheses may fail; empty when they hold."""
        issues = self.coeffs.regime_issues(self.a, self.b)
        if not self.has_diffusion:
            h1 = check_H1(self.kernel, self.a, self.b)
            if not h1.passed:
                msg = f"no diffusion and condition H1 {h1.status}: {h1.message}"
                if self.lam > 0 and not self.kernel.is_zero:
                    warnings.warn(msg + "; boundary regularity is not guaranteed", stacklevel=2)
                else:
                    issues.append(msg)
        return issues

    def validate(self) -> ProblemSpec:
        issues = self.regime_issues()
        if issues:
            raise ConfigError("; ".join(issues), "problem")
        return self

    def with_(self, **changes) -> ProblemSpec:
        return replace(self, **changes)
