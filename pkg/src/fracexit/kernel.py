r"""Jump kernels :math:`\nu(x, y)` and the integrals every solver needs.

A :class:`KernelSpec` describes one side of the jump measure as a function of
the jump *magnitude* ``y > 0``. A :class:`TwoSidedKernel` pairs two of them:

* ``left`` drives the left-terminal operator :math:`-D_{a+*}^{(\nu)}`, i.e. jumps
  from ``x`` down to ``x - y``;
* ``right`` drives the right-terminal operator :math:`-D_{b-*}^{(\nu)}`, i.e.
  jumps up to ``x + y``.

On the real line the combined density is therefore ``left(x, -y)`` for
``y < 0`` and ``right(x, y)`` for ``y > 0``.

The classical stable kernel is :math:`\beta / (\Gamma(1-\beta) y^{1+\beta})`,
which makes :math:`-D_{a+*}^{(\nu)}` equal to minus the Caputo derivative of
order :math:`\beta`.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, KernelError, QuadratureError
from .expr import Expr, as_function

DEFAULT_QUAD_TOL = 1e-10
H1_LADDER = tuple(2.0**-k for k in range(4, 21))


class Side(str, enum.Enum):
    """Direction of a jump: ``LEFT`` moves toward ``a``, ``RIGHT`` toward ``b``."""

    LEFT = "left"
    RIGHT = "right"


class Variant(str, enum.Enum):
    CLASSICAL_STABLE = "classical-stable"
    TEMPERED_STABLE = "tempered-stable"
    VARIABLE_ORDER = "variable-order"
    CUSTOM = "custom"
    NONE = "none"


def _quad(f, lo, hi, tol=DEFAULT_QUAD_TOL, what="integral"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(f, lo, hi, epsabs=tol, epsrel=1e-12, limit=500, full_output=1)[:3]
    if not math.isfinite(val) or (err > max(100 * tol, 1e-8 * abs(val)) and info.get("last", 0) >= 500):
        raise QuadratureError(f"{what} on [{lo}, {hi}] did not converge (estimate {val}, error {err})")
    return val, err


@dataclass(frozen=True)
class KernelSpec:
    """One side of a jump kernel.

    Parameters per variant:

    ``classical-stable``
        ``beta`` in (0, 1); density ``scale * beta / (Gamma(1-beta) y^(1+beta))``.
    ``tempered-stable``
        as above times ``exp(-tempering * y)``.
    ``variable-order``
        ``order(x)`` with values in (0, 1) replaces ``beta``.
    ``custom``
        ``density(x, y)`` for ``y > 0`` and optionally ``tail(x, r)``; missing
        integrals fall back to adaptive quadrature with absolute tolerance ``tol``.
    ``none``
        the zero kernel.
    """

    variant: Variant
    beta: float | None = None
    tempering: float = 0.0
    order: Callable | None = None
    density: Callable | None = None
    tail: Callable | None = None
    scale: float = 1.0
    tol: float = DEFAULT_QUAD_TOL
    x_dependent: bool = field(default=False)

    def __post_init__(self):
        v = Variant(self.variant)
        object.__setattr__(self, "variant", v)
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise KernelError("scale must be a finite nonnegative number")
        if v in (Variant.CLASSICAL_STABLE, Variant.TEMPERED_STABLE):
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise KernelError(f"beta must lie strictly inside (0, 1), got {self.beta}")
            if not self.tempering >= 0.0:
                raise KernelError("tempering rate must be nonnegative")
            if v is Variant.CLASSICAL_STABLE and self.tempering != 0.0:
                raise KernelError("classical-stable kernels take no tempering")
        elif v is Variant.VARIABLE_ORDER:
            if self.order is None:
                raise KernelError("variable-order kernels need an order function")
            object.__setattr__(self, "order", as_function(self.order))
            object.__setattr__(self, "x_dependent", True)
        elif v is Variant.CUSTOM:
            if self.density is None:
                raise KernelError("custom kernels need a density")
            object.__setattr__(self, "density", as_function(self.density, ("x", "y")))
            if self.tail is not None:
                object.__setattr__(self, "tail", as_function(self.tail, ("x", "r")))
            if isinstance(self.density, Expr):
                object.__setattr__(self, "x_dependent", not _ignores_x(self.density))

    # -- constructors ------------------------------------------------------

    @classmethod
    def stable(cls, beta: float, scale: float = 1.0) -> KernelSpec:
        return cls(Variant.CLASSICAL_STABLE, beta=beta, scale=scale)

    @classmethod
    def tempered(cls, beta: float, tempering: float, scale: float = 1.0) -> KernelSpec:
        return cls(Variant.TEMPERED_STABLE, beta=beta, tempering=tempering, scale=scale)

    @classmethod
    def variable_order(cls, order, scale: float = 1.0) -> KernelSpec:
        return cls(Variant.VARIABLE_ORDER, order=order, scale=scale)

    @classmethod
    def custom(cls, density, tail=None, x_dependent: bool = True, tol: float = DEFAULT_QUAD_TOL) -> KernelSpec:
        return cls(Variant.CUSTOM, density=density, tail=tail, x_dependent=x_dependent, tol=tol)

    @classmethod
    def zero(cls) -> KernelSpec:
        return cls(Variant.NONE)

    # -- helpers -----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.variant is Variant.NONE or self.scale == 0.0

    @property
    def has_closed_forms(self) -> bool:
        return self.variant is not Variant.CUSTOM

    def order_at(self, x):
        """Stability index at ``x`` (``None`` for custom and zero kernels)."""
        if self.variant is Variant.VARIABLE_ORDER:
            b = np.asarray(self.order(x), dtype=float)
            if np.any((b <= 0.0) | (b >= 1.0)):
                raise KernelError(f"variable order left (0, 1) near x={x}")
            return b
        return self.beta

    def _stable_const(self, x):
        b = self.order_at(x)
        return b, self.scale * b / special.gamma(1.0 - b)

    # -- pointwise evaluation ---------------------------------------------

    def density_at(self, x, y):
        """Density for jump magnitudes ``y > 0``; vectorised over numpy inputs."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("kernel density is evaluated at jump magnitudes y > 0 only")
        v = self.variant
        if self.is_zero:
            out = np.zeros(np.broadcast(np.asarray(x, dtype=float), y).shape)
        elif v is Variant.CUSTOM:
            out = np.asarray(self.density(x, y), dtype=float)
        else:
            b, c = self._stable_const(x)
            out = c * y ** (-1.0 - b)
            if v is Variant.TEMPERED_STABLE and self.tempering > 0:
                out = out * np.exp(-self.tempering * y)
        return float(out) if np.ndim(out) == 0 else out

    def tail_mass(self, x, r):
        r"""Return :math:`\int_r^\infty \nu(x, y)\,dy` for ``r > 0``."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("tail mass needs a radius r > 0")
        v = self.variant
        if self.is_zero:
            out = np.zeros(np.broadcast(np.asarray(x, dtype=float), r).shape)
        elif v is Variant.CUSTOM:
            if self.tail is not None:
                out = np.asarray(self.tail(x, r), dtype=float)
            else:
                out = np.vectorize(self._custom_tail, otypes=[float])(x, r)
        else:
            b = self.order_at(x)
            g1 = special.gamma(1.0 - b)
            th = self.tempering
            if v is Variant.TEMPERED_STABLE and th > 0:
                # Gamma(-b, z) rewritten through the regularised Q(1-b, z)
                out = self.scale * (
                    r ** (-b) * np.exp(-th * r) / g1 - th**b * special.gammaincc(1.0 - b, th * r)
                )
                out = np.maximum(out, 0.0)
            else:
                out = self.scale * r ** (-b) / g1
        return float(out) if np.ndim(out) == 0 else out

    def moment(self, x, lo, hi):
        r"""Return :math:`\int_{lo}^{hi} y\,\nu(x, y)\,dy` for ``0 <= lo <= hi``.

        ``hi`` may be ``inf`` for tempered kernels.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo < 0) or np.any(hi < lo):
            raise DomainError("moment needs 0 <= lo <= hi")
        v = self.variant
        if self.is_zero:
            out = np.zeros(np.broadcast(np.asarray(x, dtype=float), lo, hi).shape)
        elif v is Variant.CUSTOM:
            out = np.vectorize(self._custom_moment, otypes=[float])(x, lo, hi)
        else:
            b, c = self._stable_const(x)
            th = self.tempering
            if v is Variant.TEMPERED_STABLE and th > 0:
                p = special.gammainc
                out = self.scale * b * th ** (b - 1.0) * (p(1.0 - b, th * hi) - p(1.0 - b, th * lo))
            else:
                out = c * (hi ** (1.0 - b) - lo ** (1.0 - b)) / (1.0 - b)
        return float(out) if np.ndim(out) == 0 else out

    def mass(self, x, lo, hi):
        r"""Return :math:`\int_{lo}^{hi} \nu(x, y)\,dy` for ``0 < lo <= hi``."""
        hi = np.asarray(hi, dtype=float)
        t_hi = np.where(np.isinf(hi), 0.0, self.tail_mass(x, np.where(np.isinf(hi), 1.0, hi)))
        out = self.tail_mass(x, lo) - t_hi
        return float(out) if np.ndim(out) == 0 else out

    # -- quadrature fallbacks for custom kernels --------------------------

    def _custom_tail(self, x, r):
        f = lambda y: float(self.density(x, y))
        val, _ = _quad(f, r, 2 * r, self.tol, "tail mass")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            far, err, info = integrate.quad(f, 2 * r, np.inf, epsabs=self.tol, epsrel=1e-12, limit=500, full_output=1)[:3]
        if not math.isfinite(far) or err > max(1e3 * self.tol, 1e-6 * abs(far)):
            raise KernelError(f"tail integral of the kernel diverges or is unresolved beyond r={r}")
        return val + far

    def _custom_moment(self, x, lo, hi):
        if hi == lo:
            return 0.0
        f = lambda y: y * float(self.density(x, y))
        if lo > 0:
            return _quad(f, lo, hi, self.tol, "moment")[0]
        if math.isinf(hi):
            return _small_jump_moment(f, 1.0, self.tol) + _quad(f, 1.0, hi, self.tol, "moment")[0]
        return _small_jump_moment(f, hi, self.tol)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        v = self.variant
        d: dict = {"variant": v.value}
        if v in (Variant.CLASSICAL_STABLE, Variant.TEMPERED_STABLE):
            d["beta"] = self.beta
        if v is Variant.TEMPERED_STABLE:
            d["tempering"] = self.tempering
        if v is Variant.VARIABLE_ORDER:
            d["order"] = _source(self.order, "order")
        if v is Variant.CUSTOM:
            d["density"] = _source(self.density, "density")
            if self.tail is not None:
                d["tail"] = _source(self.tail, "tail")
            if self.tol != DEFAULT_QUAD_TOL:
                d["tol"] = self.tol
        if self.scale != 1.0 and v is not Variant.NONE:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict, path: str = "kernel") -> KernelSpec:
        from .errors import ConfigError

        if not isinstance(d, dict):
            raise ConfigError("expected an object", path)
        if "variant" not in d:
            raise ConfigError("missing field", f"{path}.variant")
        try:
            v = Variant(d["variant"])
        except ValueError:
            raise ConfigError(f"unknown variant {d['variant']!r}", f"{path}.variant") from None
        allowed = {
            Variant.CLASSICAL_STABLE: {"beta", "scale"},
            Variant.TEMPERED_STABLE: {"beta", "tempering", "scale"},
            Variant.VARIABLE_ORDER: {"order", "scale"},
            Variant.CUSTOM: {"density", "tail", "tol"},
            Variant.NONE: set(),
        }[v]
        for key in d:
            if key != "variant" and key not in allowed:
                raise ConfigError("unknown key", f"{path}.{key}")
        required = {
            Variant.CLASSICAL_STABLE: ("beta",),
            Variant.TEMPERED_STABLE: ("beta", "tempering"),
            Variant.VARIABLE_ORDER: ("order",),
            Variant.CUSTOM: ("density",),
            Variant.NONE: (),
        }[v]
        for key in required:
            if key not in d:
                raise ConfigError("missing field", f"{path}.{key}")
        for key in ("beta", "tempering", "scale", "tol"):
            if key in d and (isinstance(d[key], bool) or not isinstance(d[key], (int, float))):
                raise ConfigError("expected a number", f"{path}.{key}")
        try:
            kw = {k: val for k, val in d.items() if k != "variant"}
            if v is Variant.CUSTOM:
                kw["density"] = Expr(kw["density"], ("x", "y"))
                if "tail" in kw:
                    kw["tail"] = Expr(kw["tail"], ("x", "r"))
            if v is Variant.VARIABLE_ORDER:
                kw["order"] = Expr(kw["order"])
            return cls(v, **kw)
        except KernelError as exc:
            raise ConfigError(str(exc), path) from None


def _ignores_x(e: Expr) -> bool:
    import ast

    return not any(isinstance(n, ast.Name) and n.id == "x" for n in ast.walk(ast.parse(e.source, mode="eval")))


def _source(f, name):
    if isinstance(f, Expr):
        return f.source
    raise KernelError(f"{name} is a Python callable and cannot be serialised; use an expression string")


def _small_jump_moment(f, hi: float, tol: float) -> float:
    r"""Integrate ``f(y) = y nu(y)`` over ``(0, hi]`` by dyadic shells.

    Shell integrals of a power-law integrand decay geometrically, so once the
    shell ratio settles the remaining shells are summed in closed form. A ratio
    that settles at or above one means the small-jump moment diverges.
    """
    total = 0.0
    prev = None
    prev_ratio = None
    for k in range(400):
        s = _quad(f, hi * 2.0 ** -(k + 1), hi * 2.0**-k, tol * 1e-3, "small-jump moment")[0]
        total += s
        if s == 0.0 and k >= 4:
            return total
        if prev:
            ratio = s / prev
            if prev_ratio is not None and k >= 6 and abs(ratio - prev_ratio) < 1e-6 * max(1.0, ratio):
                if ratio >= 1.0 - 1e-9:
                    raise KernelError("small-jump first moment diverges (condition H0 fails)")
                return total + s * ratio / (1.0 - ratio)
            if k >= 6 and abs(s) < 1e-3 * tol and ratio < 1.0:
                return total + s * ratio / (1.0 - ratio)
            prev_ratio = ratio
        prev = s
    if prev_ratio is not None and prev_ratio >= 1.0:
        raise KernelError("small-jump first moment diverges (condition H0 fails)")
    raise QuadratureError("small-jump moment: shell sums did not settle")


@dataclass(frozen=True)
class TwoSidedKernel:
    """Kernels for jumps toward ``a`` (``left``) and toward ``b`` (``right``)."""

    left: KernelSpec
    right: KernelSpec

    @classmethod
    def symmetric(cls, k: KernelSpec) -> TwoSidedKernel:
        return cls(k, k)

    def side(self, side: Side | str) -> KernelSpec:
        return self.left if Side(side) is Side.LEFT else self.right

    @property
    def is_symmetric(self) -> bool:
        return self.left == self.right

    @property
    def is_zero(self) -> bool:
        return self.left.is_zero and self.right.is_zero

    @property
    def x_dependent(self) -> bool:
        return self.left.x_dependent or self.right.x_dependent

    def to_dict(self) -> dict:
        if self.is_symmetric:
            return self.left.to_dict()
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict, path: str = "kernel") -> TwoSidedKernel:
        from .errors import ConfigError

        if isinstance(d, dict) and ("left" in d or "right" in d):
            extra = set(d) - {"left", "right"}
            if extra:
                raise ConfigError("unknown key", f"{path}.{sorted(extra)[0]}")
            for s in ("left", "right"):
                if s not in d:
                    raise ConfigError("missing field", f"{path}.{s}")
            return cls(KernelSpec.from_dict(d["left"], f"{path}.left"), KernelSpec.from_dict(d["right"], f"{path}.right"))
        return cls.symmetric(KernelSpec.from_dict(d, path))


def _check_point(x, interval):
    if interval is not None:
        a, b = interval
        if not a <= x <= b:
            raise DomainError(f"x={x} lies outside [{a}, {b}]")


def eval_density(kernel: TwoSidedKernel, x: float, y: float, interval: tuple[float, float] | None = None) -> float:
    """Combined jump density at signed jump ``y``; negative ``y`` jumps toward ``a``."""
    _check_point(x, interval)
    if y == 0:
        raise DomainError("the jump density is undefined at y = 0")
    if y < 0:
        return kernel.left.density_at(x, -y)
    return kernel.right.density_at(x, y)


def tail_mass(kernel: TwoSidedKernel, x: float, r: float, side: Side | str) -> float:
    """Intensity of jumps longer than ``r`` in direction ``side``."""
    return kernel.side(side).tail_mass(x, r)


def truncated_first_moment(kernel: TwoSidedKernel, x: float, eps: float) -> float:
    r""":math:`\int_{|y| \le \varepsilon} |y| \nu(x, y)\,dy`, both directions summed."""
    if not eps > 0:
        raise DomainError("truncation radius must be positive")
    return kernel.left.moment(x, 0.0, eps) + kernel.right.moment(x, 0.0, eps)


def min_moment(kernel: KernelSpec, x: float, eps: float) -> float:
    r""":math:`\int_0^\infty \min(y, \varepsilon) \nu(x, y)\,dy` for one side."""
    return kernel.moment(x, 0.0, eps) + eps * kernel.tail_mass(x, eps)


@dataclass
class H0Report:
    status: str  # "pass", "fail" or "inconclusive"
    sup_moment: float
    sup_x_derivative: float
    tightness: list[tuple[float, float]]
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class H1Report:
    status: str
    C: float
    q: float
    residual: float
    per_side: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def check_H0(kernel: TwoSidedKernel, grid, decay_tol: float = 1e-2) -> H0Report:
    r"""Numerical diagnostic for condition (H0) over the points in ``grid``.

    Estimates :math:`\sup_x \int \min(1, |y|) \nu(x, y) dy`, a finite-difference
    bound on the same quantity for :math:`\partial_x \nu`, and the decay of the
    truncated first moment along :math:`\varepsilon = 10^{-2}, 10^{-4}, 10^{-6}`.
    Passing requires finite bounds and a truncated moment that decreases
    along the ladder, losing at least the fraction ``decay_tol`` overall.
    """
    xs = np.atleast_1d(np.asarray(grid, dtype=float))
    if xs.size == 0:
        raise DomainError("check_H0 needs a nonempty grid")
    eps_ladder = (1e-2, 1e-4, 1e-6)
    try:
        moments = np.array([min_moment(kernel.left, x, 1.0) + min_moment(kernel.right, x, 1.0) for x in xs])
        trunc = [max(truncated_first_moment(kernel, x, e) for x in xs) for e in eps_ladder]
    except KernelError as exc:
        return H0Report("fail", math.inf, math.nan, [], str(exc))
    except QuadratureError as exc:
        return H0Report("inconclusive", math.nan, math.nan, [], str(exc))
    sup_m = float(np.max(moments))
    if xs.size > 1 and kernel.x_dependent:
        order = np.argsort(xs)
        dx = np.diff(xs[order])
        ok = dx > 0
        slopes = np.abs(np.diff(moments[order]))[ok] / dx[ok]
        sup_d = float(np.max(slopes)) if slopes.size else 0.0
    else:
        sup_d = 0.0
    tight = list(zip(eps_ladder, trunc))
    if not (math.isfinite(sup_m) and math.isfinite(sup_d)):
        return H0Report("fail", sup_m, sup_d, tight, "moment bound is not finite")
    decreasing = all(t2 <= t1 for t1, t2 in zip(trunc, trunc[1:]))
    if not decreasing or trunc[-1] > (1.0 - decay_tol) * trunc[0]:
        return H0Report("fail", sup_m, sup_d, tight, "truncated first moment does not vanish as eps -> 0")
    return H0Report("pass", sup_m, sup_d, tight)


def check_H1(kernel: TwoSidedKernel, a: float, b: float, ladder=H1_LADDER, residual_tol: float = 0.05) -> H1Report:
    r"""Fit :math:`m(\varepsilon) \ge C \varepsilon^q` at both terminals for condition (H1).

    ``m`` is the :math:`\min(|y|, \varepsilon)` moment of jumps leaving through
    ``a`` (the ``left`` kernel at ``a``) and through ``b`` (the ``right`` kernel
    at ``b``). ``q`` is the least-squares slope in log-log space and ``C`` the
    largest constant keeping ``C eps^q`` below every ladder value, so curved
    profiles (tempering) still pass when the bound holds. The reported values
    are the weaker of the two sides; a fit residual above ``residual_tol`` is
    noted in the message.
    """
    if not a < b:
        raise DomainError("check_H1 needs a < b")
    eps = np.asarray(ladder, dtype=float)
    per_side = {}
    for name, k, x in (("a", kernel.left, a), ("b", kernel.right, b)):
        try:
            m = np.array([min_moment(k, x, e) for e in eps])
        except (KernelError, QuadratureError) as exc:
            return H1Report("inconclusive", math.nan, math.nan, math.nan, per_side, str(exc))
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            per_side[name] = (0.0, math.nan, math.nan)
            return H1Report("fail", 0.0, math.nan, math.nan, per_side, f"jump moment at {name} vanishes")
        A = np.vstack([np.ones_like(eps), np.log(eps)]).T
        coef, *_ = np.linalg.lstsq(A, np.log(m), rcond=None)
        resid = float(np.sqrt(np.mean((A @ coef - np.log(m)) ** 2)))
        q_side = float(coef[1])
        per_side[name] = (float(np.min(m / eps**q_side)), q_side, resid)
    C = min(v[0] for v in per_side.values())
    q = max(v[1] for v in per_side.values())
    res = max(v[2] for v in per_side.values())
    note = f"power-law fit residual {res:.3g} (profile is not a pure power)" if res > residual_tol else ""
    if C > 0 and 0 < q < 1:
        return H1Report("pass", C, q, res, per_side, note)
    return H1Report("fail", C, q, res, per_side, "fitted exponent outside (0, 1)")
