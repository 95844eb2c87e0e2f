r"""Closed-form references for symmetric stable exits from an interval, plus classical diffusion formulas.

The stable formulas are stated for the fractional Laplacian
:math:`-(-\Delta)^{\beta/2}` on ``(-1, 1)`` and carried to ``(a, b)`` by the
affine map ``x -> 2 (x - a) / (b - a) - 1``. Times and potential densities
scale by ``((b - a) / 2) ** beta``. Exit probabilities are scale-free.

A symmetric pair of :meth:`KernelSpec.stable` kernels generates
``stable_time_scale(beta) * (-(-Delta)^{beta/2})`` with
``stable_time_scale(beta) = 2 cos(pi beta / 2)``. The process therefore runs
faster than the one behind these formulas. Divide exit times and potential
integrals by that factor when comparing, or build the kernel with
:func:`laplacian_kernel`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError
from .kernel import KernelSpec, TwoSidedKernel

QUAD_TOL = 1e-13


def log_gamma(z: float) -> float:
    """``log Gamma(z)`` for ``z > 0``."""
    if not z > 0:
        raise DomainError(f"log_gamma needs z > 0, got {z}")
    return math.lgamma(z)


def stable_time_scale(beta: float) -> float:
    """Ratio between the two-sided stable operator and the fractional Laplacian of the same order."""
    _check_beta(beta)
    return 2.0 * math.cos(math.pi * beta / 2)


def laplacian_kernel(beta: float) -> TwoSidedKernel:
    """Symmetric stable kernel whose two-sided operator is exactly ``-(-Delta)^{beta/2}``."""
    return TwoSidedKernel.symmetric(KernelSpec.stable(beta, scale=1.0 / stable_time_scale(beta)))


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")


def _quad(f, lo, hi, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, epsabs=QUAD_TOL, epsrel=1e-12, limit=500, **kw)
    if not math.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge (error estimate {err:.2g})")
    return val


@dataclass(frozen=True)
class StableExitFormulas:
    """Exit functionals of the symmetric ``beta``-stable process on ``(a, b)``."""

    beta: float
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        _check_beta(self.beta)
        if not self.a < self.b:
            raise DomainError(f"need a < b, got ({self.a}, {self.b})")

    @property
    def half_width(self) -> float:
        return (self.b - self.a) / 2

    def to_reference(self, x: float) -> float:
        """Image of ``x`` in ``[-1, 1]``; raises if ``x`` lies outside ``[a, b]``."""
        if not self.a <= x <= self.b:
            raise DomainError(f"x={x} lies outside [{self.a}, {self.b}]")
        return min(1.0, max(-1.0, 2 * (x - self.a) / (self.b - self.a) - 1))

    def mean_exit_time(self, x: float) -> float:
        s = self.to_reference(x)
        b = self.beta
        if abs(s) == 1.0:
            return 0.0
        return math.exp(b / 2 * math.log1p(-s * s) - log_gamma(1 + b)) * self.half_width**b

    def harmonic_measure_upper(self, x: float) -> float:
        r"""Probability of leaving through ``b``.

        Uses :math:`c \int_{-1}^{s} (1 - y^2)^{\beta/2 - 1} dy` with
        :math:`c = 2^{1-\beta}\Gamma(\beta)/\Gamma(\beta/2)^2`. The integrable
        endpoint singularity is absorbed by an algebraic-weight rule on the
        shorter half, and the other half follows from ``h(-s) = 1 - h(s)``.
        """
        s = self.to_reference(x)
        if s > 0:
            return 1.0 - StableExitFormulas(self.beta).harmonic_measure_upper(-s)
        b = self.beta
        if s == -1.0:
            return 0.0
        c = math.exp((1 - b) * math.log(2) + log_gamma(b) - 2 * log_gamma(b / 2))
        val = _quad(lambda y: (1 - y) ** (b / 2 - 1), -1.0, s, weight="alg", wvar=(b / 2 - 1, 0.0))
        return min(1.0, max(0.0, c * val))

    def harmonic_measure_lower(self, x: float) -> float:
        return 1.0 - self.harmonic_measure_upper(x)

    def potential_density(self, x: float, y: float) -> float:
        r"""Occupation density :math:`H(x, y)` before exit.

        The inner integral :math:`\int_0^z r^{\beta/2-1}(1+r)^{-1/2} dr` is the
        incomplete beta function
        :math:`B(\beta/2, (1-\beta)/2)\, I_{z/(1+z)}(\beta/2, (1-\beta)/2)`.
        """
        s, t = self.to_reference(x), self.to_reference(y)
        if s == t:
            raise DomainError("the potential density is singular on the diagonal x = y")
        return self._reduced_density(s, t) * abs(s - t) ** (self.beta - 1) * self.half_width ** (self.beta - 1)

    def _reduced_density(self, s: float, t: float) -> float:
        """``H * |s - t|^(1 - beta)`` in reference coordinates; bounded, and continuous across ``s = t``."""
        b = self.beta
        if abs(s) == 1.0 or abs(t) == 1.0:
            return 0.0
        d2 = (s - t) ** 2
        num = (1 - s * s) * (1 - t * t)
        p, q = b / 2, (1 - b) / 2
        inner = special.beta(p, q) * special.betainc(p, q, num / (num + d2))
        return math.exp(-b * math.log(2) - 2 * log_gamma(b / 2)) * inner

    def potential_integral(self, x: float, f: Callable[[float], float]) -> float:
        """``int_a^b f(y) H(x, y) dy``, split at ``y = x`` where the density blows up."""
        xv = float(x)
        s = self.to_reference(xv)
        if abs(s) == 1.0:
            return 0.0
        b = self.beta
        r0 = self._reduced_density(s, s)
        # the |x - y|^(beta - 1) factor of the diagonal value goes into
        # QUADPACK's algebraic weight; the remainder is bounded
        head = lambda y: f(y) * r0
        rest = lambda y: (
            f(y) * (self._reduced_density(s, self.to_reference(y)) - r0) * abs(xv - y) ** (b - 1) if y != xv else 0.0
        )
        total = _quad(head, self.a, xv, weight="alg", wvar=(0.0, b - 1))
        total += _quad(head, xv, self.b, weight="alg", wvar=(b - 1, 0.0))
        total += _quad(rest, self.a, xv) + _quad(rest, xv, self.b)
        return total

    def general_solution(self, x: float, u_lower: float, u_upper: float, g: Callable[[float], float] | None = None) -> float:
        """Solution with boundary values ``u_lower``, ``u_upper`` and source ``g`` at zero discount."""
        out = (u_upper - u_lower) * self.harmonic_measure_upper(x) + u_lower
        if g is not None:
            out += self.potential_integral(x, g)
        return out


def mean_exit_time(beta: float, x: float) -> float:
    """``(1 - x^2)^{beta/2} / Gamma(1 + beta)`` on ``(-1, 1)``."""
    return StableExitFormulas(beta).mean_exit_time(x)


def harmonic_measure_upper(beta: float, x: float) -> float:
    return StableExitFormulas(beta).harmonic_measure_upper(x)


def harmonic_measure_lower(beta: float, x: float) -> float:
    return StableExitFormulas(beta).harmonic_measure_lower(x)


def potential_density(beta: float, x: float, y: float) -> float:
    return StableExitFormulas(beta).potential_density(x, y)


def general_solution(beta: float, x: float, u_lower: float, u_upper: float, g: Callable[[float], float] | None = None) -> float:
    return StableExitFormulas(beta).general_solution(x, u_lower, u_upper, g)


def brownian_references(alpha: float, a: float, b: float, x: float, gamma: float = 0.0) -> dict[str, float]:
    """Exit probability through ``b`` and mean exit time for ``gamma f' + alpha f''`` with constants.

    With ``gamma = 0`` these are ``(x - a)/(b - a)`` and ``(x - a)(b - x)/(2 alpha)``.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not a <= x <= b:
        raise DomainError(f"x={x} lies outside [{a}, {b}]")
    L = b - a
    k = gamma / alpha
    if abs(k * L) < 1e-8:
        return {"exit_prob_upper": (x - a) / L, "mean_exit_time": (x - a) * (b - x) / (2 * alpha)}
    p = math.expm1(-k * (x - a)) / math.expm1(-k * L)
    return {"exit_prob_upper": p, "mean_exit_time": (L * p - (x - a)) / gamma}


def tabulate(fn: Callable[[float], float], xs) -> np.ndarray:
    return np.array([fn(float(x)) for x in np.atleast_1d(xs)])
