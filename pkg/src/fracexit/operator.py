r"""Pointwise evaluation of the generalized Caputo / Riemann-Liouville operators.

Each one-sided operator is a jump integral plus a boundary term, e.g. ::

    (-D_{a+*} f)(x) = int_0^{x-a} (f(x-y) - f(x)) nu(x, y) dy + (f(a) - f(x)) T(x, x-a)

with ``T`` the kernel's tail mass. The integrand is singular like
:math:`y^{-\beta}` at ``y = 0``. On ``[0, delta]`` the difference is written as
an integral of ``f'`` and integrated by parts once more, which leaves
``f'(x)`` times the truncated first moment plus a bounded ``f''`` remainder.
The remainder is integrated exactly, so nothing is dropped. The rest of the
range goes to adaptive quadrature.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Literal

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError, ReducedAccuracyWarning
from .kernel import KernelSpec, Side
from .problem import DiffusionCoefficients, ProblemSpec

QUAD_TOL = 1e-10
QUAD_LIMIT = 2**14
DELTA_MAX = 1e-3

_EPS = sys.float_info.epsilon


@dataclass(frozen=True)
class SmoothFunction:
    """A scalar function with optional analytic first and second derivatives.

    Missing derivatives are replaced by finite differences that never sample
    outside ``domain`` (one-sided stencils near its ends).
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float] | None = None
    second_derivative: Callable[[float], float] | None = None
    domain: tuple[float, float] | None = None

    def __call__(self, x):
        return self.value(x)

    def _step(self, power: float) -> float:
        scale = (self.domain[1] - self.domain[0]) if self.domain else 1.0
        return _EPS**power * scale

    def _stencil_side(self, x: float, reach: float) -> int:
        if self.domain is None:
            return 0
        a, b = self.domain
        if x - reach < a:
            return 1
        if x + reach > b:
            return -1
        return 0

    def d1(self, x: float) -> float:
        if self.derivative is not None:
            return float(self.derivative(x))
        warnings.warn("first derivative taken by finite differences", ReducedAccuracyWarning, stacklevel=3)
        h = self._step(1 / 3)
        f = self.value
        s = self._stencil_side(x, h)
        if s == 0:
            return float(f(x + h) - f(x - h)) / (2 * h)
        # second-order one-sided stencil
        return s * float(-3 * f(x) + 4 * f(x + s * h) - f(x + 2 * s * h)) / (2 * h)

    def d2(self, x: float) -> float:
        if self.second_derivative is not None:
            return float(self.second_derivative(x))
        warnings.warn("second derivative taken by finite differences", ReducedAccuracyWarning, stacklevel=3)
        f = self.value
        if self.derivative is not None:
            h = self._step(1 / 3)
            d = self.derivative
            s = self._stencil_side(x, h)
            if s == 0:
                return float(d(x + h) - d(x - h)) / (2 * h)
            return s * float(-3 * d(x) + 4 * d(x + s * h) - d(x + 2 * s * h)) / (2 * h)
        h = self._step(1 / 4)
        s = self._stencil_side(x, h)
        if s == 0:
            return float(f(x + h) - 2 * f(x) + f(x - h)) / h**2
        return float(2 * f(x) - 5 * f(x + s * h) + 4 * f(x + 2 * s * h) - f(x + 3 * s * h)) / h**2

    def on(self, a: float, b: float) -> SmoothFunction:
        """Same function with finite-difference stencils confined to ``[a, b]``."""
        return self if self.domain is not None else replace(self, domain=(a, b))


def _as_smooth(f) -> SmoothFunction:
    return f if isinstance(f, SmoothFunction) else SmoothFunction(f)


def _quad(fun, lo, hi, what, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        kw = {"points": points} if points is not None and math.isfinite(hi) else {}
        val, err, info = integrate.quad(
            fun, lo, hi, epsabs=QUAD_TOL * 1e-2, epsrel=1e-12, limit=QUAD_LIMIT, full_output=1, **kw
        )[:3]
    if not math.isfinite(val) or err > max(QUAD_TOL, 1e-9 * abs(val)):
        raise QuadratureError(f"{what}: no convergence on [{lo}, {hi}] (estimate {val:.6g}, error {err:.2g})")
    return val


def _log_points(lo: float, hi: float) -> list[float]:
    if not math.isfinite(hi) or hi <= 10 * lo:
        return []
    n = int(math.log10(hi / lo))
    return [lo * 10.0**k for k in range(1, n + 1) if lo * 10.0**k < hi]


def jump_integral(f: SmoothFunction, k: KernelSpec, x: float, reach: float, direction: int, delta_max: float = DELTA_MAX) -> float:
    r"""Return :math:`\int_0^{reach} (f(x + \sigma y) - f(x)) \nu(x, y)\,dy`, with ``σ = direction``.

    ``reach`` may be ``inf`` when ``f`` is defined on the whole line.
    """
    if reach <= 0 or k.is_zero:
        return 0.0
    d = min(delta_max, reach / 2) if math.isfinite(reach) else delta_max
    sigma = float(direction)

    def M(s):
        if s <= 0.0:
            return k.moment(x, 0.0, d)
        return k.moment(x, s, d) - s * k.mass(x, s, d)

    near = sigma * f.d1(x) * M(0.0)
    near += _quad(lambda s: f.d2(x + sigma * s) * M(s), 0.0, d, "near-field remainder")
    far = _quad(
        lambda y: (f(x + sigma * y) - f(x)) * k.density_at(x, y),
        d,
        reach,
        "far-field jump integral",
        points=_log_points(d, reach),
    )
    return near + far


def _check_x(x, a, b):
    if x < a or (b is not None and x > b):
        raise DomainError(f"x={x} lies outside [{a}, {b if b is not None else 'inf'}]")


def caputo_left(f, kernel: KernelSpec, a: float, x: float, b: float | None = None, delta_max: float = DELTA_MAX) -> float:
    """Generalized left-sided Caputo-type operator ``(-D_{a+*} f)(x)``."""
    _check_x(x, a, b)
    if x == a:
        return 0.0
    f = _as_smooth(f)
    J = jump_integral(f, kernel, x, x - a, -1, delta_max)
    return J + (f(a) - f(x)) * kernel.tail_mass(x, x - a)


def caputo_right(f, kernel: KernelSpec, b: float, x: float, a: float | None = None, delta_max: float = DELTA_MAX) -> float:
    """Generalized right-sided Caputo-type operator ``(-D_{b-*} f)(x)``."""
    if x > b or (a is not None and x < a):
        raise DomainError(f"x={x} lies outside [{a}, {b}]")
    if x == b:
        return 0.0
    f = _as_smooth(f)
    J = jump_integral(f, kernel, x, b - x, +1, delta_max)
    return J + (f(b) - f(x)) * kernel.tail_mass(x, b - x)


def rl_left(f, kernel: KernelSpec, a: float, x: float, b: float | None = None, delta_max: float = DELTA_MAX) -> float:
    """Left RL-type operator: the Caputo form with ``f(a)`` replaced by 0 in the boundary term."""
    _check_x(x, a, b)
    if x == a:
        return 0.0
    f = _as_smooth(f)
    J = jump_integral(f, kernel, x, x - a, -1, delta_max)
    return J - f(x) * kernel.tail_mass(x, x - a)


def rl_right(f, kernel: KernelSpec, b: float, x: float, a: float | None = None, delta_max: float = DELTA_MAX) -> float:
    if x > b or (a is not None and x < a):
        raise DomainError(f"x={x} lies outside [{a}, {b}]")
    if x == b:
        return 0.0
    f = _as_smooth(f)
    J = jump_integral(f, kernel, x, b - x, +1, delta_max)
    return J - f(x) * kernel.tail_mass(x, b - x)


def classical_caputo(f, beta: float, terminal: float, side: Side | str, x: float) -> float:
    r"""Standard Caputo derivative :math:`D^\beta` of order ``beta`` in (0, 1).

    Evaluated from the Marchaud-type form with QUADPACK's algebraic-weight
    rule (QAWS) absorbing :math:`y^{-\beta}`; it shares no code with
    :func:`caputo_left`, which makes it a cross-check. With the classical
    stable kernel, ``caputo_left(f) == -classical_caputo(f, side="left")``.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"order beta must lie in (0, 1), got {beta}")
    f = _as_smooth(f)
    side = Side(side)
    if side is Side.LEFT:
        R, sigma = x - terminal, -1.0
    else:
        R, sigma = terminal - x, 1.0
    if R < 0:
        raise DomainError(f"x={x} lies on the wrong side of terminal {terminal}")
    if R == 0:
        return 0.0
    fx = f(x)

    def quotient(y):
        if y == 0.0:
            return -sigma * f.d1(x)
        return (fx - f(x + sigma * y)) / y

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            quotient, 0.0, R, weight="alg", wvar=(-beta, 0.0), epsabs=1e-13, epsrel=1e-13, limit=QUAD_LIMIT
        )
    if err > QUAD_TOL:
        raise QuadratureError(f"classical Caputo quadrature error {err:.2g}")
    g1 = special.gamma(1.0 - beta)
    return (fx - f(terminal)) / (g1 * R**beta) + beta / g1 * val


def diffusion_apply(f, coeffs: DiffusionCoefficients, x: float) -> float:
    """Local part ``gamma(x) f'(x) + alpha(x) f''(x)``."""
    f = _as_smooth(f)
    g = float(coeffs.gamma(x))
    al = float(coeffs.alpha(x))
    out = 0.0
    if g != 0.0:
        out += g * f.d1(x)
    if al != 0.0:
        out += al * f.d2(x)
    return out


def two_sided_apply(f, spec: ProblemSpec, x: float, flavor: Literal["caputo", "rl"] = "caputo", delta_max: float = DELTA_MAX) -> float:
    """Two-sided operator ``-L_{[a,b]*} f`` (``flavor="caputo"``) or ``-L_{[a,b]} f`` (``"rl"``)."""
    a, b = spec.interval
    _check_x(x, a, b)
    f = _as_smooth(f).on(a, b)
    if flavor == "caputo":
        left, right = caputo_left, caputo_right
    elif flavor == "rl":
        left, right = rl_left, rl_right
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return (
        left(f, spec.kernel.left, a, x, b, delta_max)
        + right(f, spec.kernel.right, b, x, a, delta_max)
        + diffusion_apply(f, spec.coeffs, x)
    )


def free_generator_apply(f, spec: ProblemSpec, x: float, delta_max: float = DELTA_MAX) -> float:
    """Generator of the unrestricted process, integrating jumps over the whole line.

    ``f`` must be defined on the real line (supply an extension).
    """
    f = _as_smooth(f)
    return (
        jump_integral(f, spec.kernel.left, x, math.inf, -1, delta_max)
        + jump_integral(f, spec.kernel.right, x, math.inf, +1, delta_max)
        + diffusion_apply(f, spec.coeffs, x)
    )
