"""Monte Carlo solver built on the free jump-diffusion behind the two-sided operator.

Jumps longer than ``eps`` arrive as a compound Poisson stream with intensity
``T_left(x, eps) + T_right(x, eps)`` (tail masses). Jump lengths are drawn by
inverting the normalised tail mass. Drift and diffusion advance by Euler steps
between jumps. Exit from ``(a, b)`` is checked after every step and every jump.

Paths run in fixed-size blocks. Block ``k`` draws from the stream seeded by
``(seed, k)``, and sums use :func:`math.fsum`, so an estimate depends only on
``(seed, n_paths, block_size)``. The worker count does not affect it.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, KernelError
from .kernel import KernelSpec, Variant, check_H0, truncated_first_moment
from .problem import ProblemSpec

THREADS_ENV = "FRACEXIT_THREADS"
CENSOR_WARN = 0.05
_CELLS = 32
_TABLE_POINTS = 257


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PathConfig:
    """Simulation controls.

    ``compensate`` adds the drift ``int_0^eps y (nu_right - nu_left) dy`` that
    the discarded small jumps would have produced on average. ``bridge`` adds
    the Brownian-bridge crossing test between Euler steps when ``alpha > 0``.
    """

    eps: float = 1e-4
    dt: float = 1e-3
    t_max: float = 50.0
    seed: int = 0
    n_paths: int = 10_000
    compensate: bool = True
    bridge: bool = True
    block_size: int = 16_384
    workers: int = field(default_factory=default_workers, compare=False)

    def __post_init__(self):
        for name in ("eps", "dt", "t_max"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"must be a positive number, got {v!r}", f"mc.{name}")
        for name, lo in (("n_paths", 1), ("block_size", 1), ("workers", 1)):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"must be an integer >= {lo}, got {v!r}", f"mc.{name}")
        for name in ("compensate", "bridge"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError("expected true or false", f"mc.{name}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}", "mc.seed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict, path: str = "mc") -> PathConfig:
        if not isinstance(d, dict):
            raise ConfigError("expected an object", path)
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError("unknown key", f"{path}.{k}")
        try:
            return cls(**d)
        except ConfigError as exc:
            raise ConfigError(exc.message, path + exc.path[2:]) from None


class ExitSide(str, enum.Enum):
    LOWER = "lower"
    UPPER = "upper"
    CENSORED = "censored"


_SIDE_CODE = {-1: ExitSide.LOWER, 1: ExitSide.UPPER, 0: ExitSide.CENSORED}


@dataclass(frozen=True)
class ExitSample:
    tau: float
    side: ExitSide
    x_exit: float
    F: float
    discount_at_exit: float


@dataclass
class ExitSamples:
    """Column store of many :class:`ExitSample` records; ``side`` codes are -1, +1 and 0 (censored)."""

    tau: np.ndarray
    side: np.ndarray
    x_exit: np.ndarray
    F: np.ndarray
    discount: np.ndarray

    def __len__(self) -> int:
        return self.tau.size

    def __getitem__(self, i: int) -> ExitSample:
        return ExitSample(
            float(self.tau[i]), _SIDE_CODE[int(self.side[i])], float(self.x_exit[i]), float(self.F[i]), float(self.discount[i])
        )

    @property
    def censored_fraction(self) -> float:
        return float(np.count_nonzero(self.side == 0)) / len(self)

    def interrupted(self, a: float, b: float) -> ExitSamples:
        """Exit positions of the process that lands on the nearest boundary point instead of overshooting."""
        x = self.x_exit.copy()
        x[self.side == -1] = a
        x[self.side == 1] = b
        return ExitSamples(self.tau, self.side, x, self.F, self.discount)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "side", "x_exit", "F", "discount_at_exit"])
        for i in range(len(self)):
            s = self[i]
            w.writerow([repr(s.tau), s.side.value, repr(s.x_exit), repr(s.F), repr(s.discount_at_exit)])
        return buf.getvalue()

    @staticmethod
    def concat(parts: list[ExitSamples]) -> ExitSamples:
        return ExitSamples(*(np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(ExitSamples)))


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    censored_fraction: float
    seed: int
    diagnostics: dict = field(default_factory=dict, compare=False)
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "censored_fraction": self.censored_fraction,
            "seed": self.seed,
            "warnings": list(self.warnings),
        }


# -- kernel-side helpers -----------------------------------------------------


class _CellFunction:
    """``f(x)`` exactly for closed-form kernels, frozen per x-cell otherwise."""

    def __init__(self, f: Callable, exact: bool, x_dependent: bool, a: float, b: float):
        self.f, self.a, self.b = f, a, b
        self.exact = exact
        if exact:
            return
        if x_dependent:
            self.centers = a + (np.arange(_CELLS) + 0.5) * (b - a) / _CELLS
        else:
            self.centers = np.array([(a + b) / 2])
        self.values = np.array([float(f(c)) for c in self.centers])

    def cell(self, x):
        n = self.centers.size
        return np.clip(((np.asarray(x) - self.a) / (self.b - self.a) * n).astype(int), 0, n - 1)

    def __call__(self, x):
        if self.exact:
            return np.broadcast_to(np.asarray(self.f(x), dtype=float), np.shape(x))
        return self.values[self.cell(x)]


class _JumpSampler:
    """Rate and inverse-transform sampler of jump lengths ``> eps`` for one side."""

    def __init__(self, k: KernelSpec, eps: float, a: float, b: float):
        self.k, self.eps = k, eps
        self.zero = k.is_zero
        self.rate = _CellFunction(lambda x: k.tail_mass(x, eps), k.has_closed_forms, k.x_dependent, a, b)
        self.power_law = k.variant in (Variant.CLASSICAL_STABLE, Variant.VARIABLE_ORDER)
        if self.zero or self.power_law:
            return
        # beyond this length every jump leaves the interval, so its exact size is moot
        r_max = max(16 * (b - a), 2 * eps)
        self.log_r = np.linspace(math.log(eps), math.log(r_max), _TABLE_POINTS)
        r = np.exp(self.log_r)
        if k.x_dependent and not k.has_closed_forms:
            self.cells = _CellFunction(lambda x: 0.0, False, True, a, b)
            xs = self.cells.centers
        else:
            self.cells = None
            xs = np.array([(a + b) / 2])
        tables = []
        for x in xs:
            T = np.asarray(k.tail_mass(x, r), dtype=float)
            with np.errstate(divide="ignore"):
                lq = np.log(np.maximum(T, 1e-300) / T[0])
            tables.append(np.minimum.accumulate(lq))
        self.log_q = np.array(tables)

    def sample(self, x, u):
        """Jump lengths for uniforms ``u`` in (0, 1] at pre-jump states ``x``."""
        if self.power_law:
            beta = np.broadcast_to(np.asarray(self.k.order_at(x), dtype=float), np.shape(u))
            return self.eps * u ** (-1.0 / beta)
        lu = np.log(u)
        rows = self.cells.cell(x) if self.cells is not None else np.zeros(np.shape(u), dtype=int)
        out = np.empty(np.shape(u))
        for r in np.unique(rows):
            m = rows == r
            lq = self.log_q[r]
            # np.interp needs increasing abscissae
            out[m] = np.exp(np.interp(lu[m], lq[::-1], self.log_r[::-1]))
        return out


class _Model:
    """Everything a block simulation needs, evaluated once per run."""

    def __init__(self, spec: ProblemSpec, cfg: PathConfig):
        a, b = spec.interval
        self.a, self.b = a, b
        self.lam = spec.lam
        self.left = _JumpSampler(spec.kernel.left, cfg.eps, a, b)
        self.right = _JumpSampler(spec.kernel.right, cfg.eps, a, b)
        self.g = spec.g
        self.gamma = spec.coeffs.gamma
        self.alpha = spec.coeffs.alpha
        self.has_diffusion = spec.has_diffusion
        comp = None
        if cfg.compensate and not spec.kernel.is_symmetric:
            kl, kr = spec.kernel.left, spec.kernel.right
            comp = _CellFunction(
                lambda x: kr.moment(x, 0.0, cfg.eps) - kl.moment(x, 0.0, cfg.eps),
                kl.has_closed_forms and kr.has_closed_forms,
                spec.kernel.x_dependent,
                a,
                b,
            )
        self.comp = comp
        self.stepping = spec.has_drift or self.has_diffusion or comp is not None
        self.dt = cfg.dt
        self.t_max = cfg.t_max
        self.bridge = cfg.bridge and self.has_diffusion

    def rates(self, x):
        rl = np.zeros(np.shape(x)) if self.left.zero else self.left.rate(x)
        rr = np.zeros(np.shape(x)) if self.right.zero else self.right.rate(x)
        return rl, rr

    def drift(self, x):
        xc = np.clip(x, self.a, self.b)
        out = np.broadcast_to(np.asarray(self.gamma(xc), dtype=float), np.shape(x))
        if self.comp is not None:
            out = out + self.comp(xc)
        return out

    def var(self, x):
        xc = np.clip(x, self.a, self.b)
        return 2.0 * np.broadcast_to(np.asarray(self.alpha(xc), dtype=float), np.shape(x))

    def source(self, x):
        return np.broadcast_to(np.asarray(self.g(x), dtype=float), np.shape(x))

    def weight(self, t, s):
        """``int_t^{t+s} e^{-lam r} dr``."""
        if self.lam == 0.0:
            return s
        return np.exp(-self.lam * t) * (-np.expm1(-self.lam * s)) / self.lam


def _waiting_times(rng, model: _Model, x):
    rl, rr = model.rates(x)
    total = rl + rr
    e = rng.standard_exponential(np.shape(x))
    with np.errstate(divide="ignore"):
        return np.where(total > 0, e / np.where(total > 0, total, 1.0), np.inf)


def _simulate_block(model: _Model, x0: float, n: int, rng: np.random.Generator) -> ExitSamples:
    a, b = model.a, model.b
    X = np.full(n, float(x0))
    t = np.zeros(n)
    F = np.zeros(n)
    side = np.zeros(n, dtype=np.int8)
    x_exit = np.full(n, float(x0))
    R = _waiting_times(rng, model, X)
    idx = np.arange(n)
    step_cap = model.dt if model.stepping else math.inf
    while idx.size:
        x, tt, r = X[idx], t[idx], R[idx]
        horizon = model.t_max - tt
        jump_now = r <= np.minimum(step_cap, horizon)
        s = np.minimum(np.minimum(r, step_cap), horizon)
        xn = x
        exit_code = np.zeros(idx.size, dtype=np.int8)
        if model.stepping:
            mu = model.drift(x)
            xn = x + mu * s
            if model.has_diffusion:
                sig2 = model.var(x)
                xn = xn + np.sqrt(sig2 * s) * rng.standard_normal(idx.size)
                exit_code[xn <= a] = -1
                exit_code[xn >= b] = 1
                if model.bridge:
                    u = rng.random(idx.size)
                    inside = exit_code == 0
                    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                        d = sig2 * s / 2.0
                        pa = np.where(inside & (d > 0), np.exp(-(x - a) * (xn - a) / d), 0.0)
                        pb = np.where(inside & (d > 0), np.exp(-(b - x) * (b - xn) / d), 0.0)
                    hit_a = inside & (u < pa)
                    hit_b = inside & ~hit_a & (u < pa + pb)
                    exit_code[hit_a] = -1
                    exit_code[hit_b] = 1
                    xn = np.where(hit_a, a, np.where(hit_b, b, xn))
            else:
                lo, hi = xn <= a, xn >= b
                with np.errstate(divide="ignore", invalid="ignore"):
                    s = np.where(lo, (a - x) / mu, np.where(hi, (b - x) / mu, s))
                xn = np.where(lo, a, np.where(hi, b, xn))
                exit_code[lo] = -1
                exit_code[hi] = 1
        F[idx] += model.source(x) * model.weight(tt, s)
        tt = tt + s
        moved = exit_code != 0
        jump_now &= ~moved
        r = r - s
        if np.any(jump_now):
            j = np.flatnonzero(jump_now)
            xj = xn[j]
            rl, rr = model.rates(xj)
            u_side = rng.random(j.size)
            u_len = 1.0 - rng.random(j.size)
            down = u_side * (rl + rr) < rl
            y = np.empty(j.size)
            if np.any(down):
                y[down] = -model.left.sample(xj[down], u_len[down])
            if np.any(~down):
                y[~down] = model.right.sample(xj[~down], u_len[~down])
            xj = xj + y
            xn = xn.copy()
            xn[j] = xj
            exit_code[j[xj <= a]] = -1
            exit_code[j[xj >= b]] = 1
            r = r.copy()
            r[j] = _waiting_times(rng, model, xj)
        X[idx], t[idx], R[idx] = xn, tt, r
        done = exit_code != 0
        side[idx[done]] = exit_code[done]
        x_exit[idx[done]] = xn[done]
        censored = ~done & (tt >= model.t_max)
        x_exit[idx[censored]] = xn[censored]
        idx = idx[~(done | censored)]
    discount = np.ones(n) if model.lam == 0.0 else np.exp(-model.lam * t)
    return ExitSamples(t, side, x_exit, F, discount)


# -- public API -----------------------------------------------------------------


def _check_start(spec: ProblemSpec, x0: float):
    if not spec.a < x0 < spec.b:
        raise DomainError(f"start point {x0} must lie inside ({spec.a}, {spec.b})")


def _check_kernel(spec: ProblemSpec):
    if spec.kernel.is_zero:
        return
    rep = check_H0(spec.kernel, np.linspace(spec.a, spec.b, 9))
    if not rep.passed:
        raise KernelError(f"kernel fails condition H0 ({rep.status}): {rep.message}")


def sample_path(spec: ProblemSpec, x0: float, cfg: PathConfig, stream: np.random.Generator) -> ExitSample:
    """Simulate one free path from ``x0`` until it leaves ``(a, b)`` or reaches ``t_max``."""
    _check_start(spec, x0)
    _check_kernel(spec)
    return _simulate_block(_Model(spec, cfg), x0, 1, stream)[0]


def block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(block)])))


def simulate(spec: ProblemSpec, x0: float, cfg: PathConfig) -> ExitSamples:
    """``cfg.n_paths`` independent exit samples from ``x0``."""
    _check_start(spec, x0)
    _check_kernel(spec)
    model = _Model(spec, cfg)
    sizes = [min(cfg.block_size, cfg.n_paths - s) for s in range(0, cfg.n_paths, cfg.block_size)]
    run = lambda k: _simulate_block(model, x0, sizes[k], block_stream(cfg.seed, k))
    if cfg.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]
    return ExitSamples.concat(parts)


def summarize(values: np.ndarray, samples: ExitSamples, cfg: PathConfig, diagnostics: dict | None = None) -> Estimate:
    """Mean and standard error of per-path ``values``, with order-independent summation."""
    v = np.asarray(values, dtype=float)
    n = v.size
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1) if n > 1 else 0.0
    cf = samples.censored_fraction
    notes = []
    if cf > CENSOR_WARN:
        msg = f"{100 * cf:.1f}% of paths were censored at t_max={cfg.t_max}"
        warnings.warn(msg, stacklevel=3)
        notes.append(msg)
    return Estimate(mean, math.sqrt(var / n), n, cf, cfg.seed, dict(diagnostics or {}), tuple(notes))


def _diagnostics(spec: ProblemSpec, x0: float, cfg: PathConfig, samples: ExitSamples) -> dict:
    m = _Model(spec, cfg)
    rl, rr = m.rates(np.array([x0]))
    mean_tau = math.fsum(samples.tau) / len(samples)
    rate = truncated_first_moment(spec.kernel, x0, cfg.eps) if not spec.kernel.is_zero else 0.0
    return {
        "eps": cfg.eps,
        "dt": cfg.dt,
        "t_max": cfg.t_max,
        "block_size": cfg.block_size,
        "compensate": cfg.compensate,
        "bridge": cfg.bridge,
        "jump_rate_at_start": float(rl[0] + rr[0]),
        "mean_exit_time": mean_tau,
        "discard_bias_bound": float(rate * mean_tau),
    }


def estimate_rl_solution(spec: ProblemSpec, x: float, cfg: PathConfig) -> Estimate:
    """``E int_0^tau e^{-lam t} g(X_t) dt``, the solution with zero boundary data."""
    if spec.u_a != 0 or spec.u_b != 0:
        raise ConfigError("the RL estimator needs zero boundary data", "problem.boundary")
    spec.validate()
    s = simulate(spec, x, cfg)
    return summarize(s.F, s, cfg, _diagnostics(spec, x, cfg, s))


def caputo_values(spec: ProblemSpec, s: ExitSamples) -> np.ndarray:
    return spec.u_a * s.discount * (s.side == -1) + spec.u_b * s.discount * (s.side == 1) + s.F


def estimate_caputo_solution(spec: ProblemSpec, x: float, cfg: PathConfig) -> Estimate:
    """Stochastic representation of the Dirichlet problem with boundary data ``u_a``, ``u_b``."""
    spec.validate()
    s = simulate(spec, x, cfg)
    return summarize(caputo_values(spec, s), s, cfg, _diagnostics(spec, x, cfg, s))


def estimate_exit_statistics(spec: ProblemSpec, x: float, cfg: PathConfig) -> dict[str, Estimate]:
    """Exit probabilities, mean exit time and discounted exit weights from one ensemble."""
    spec.validate()
    s = simulate(spec, x, cfg)
    diag = _diagnostics(spec, x, cfg, s)
    lower = (s.side == -1).astype(float)
    upper = (s.side == 1).astype(float)
    return {
        "P_lower": summarize(lower, s, cfg, diag),
        "P_upper": summarize(upper, s, cfg, diag),
        "E_tau": summarize(s.tau, s, cfg, diag),
        "E_discount_lower": summarize(s.discount * lower, s, cfg, diag),
        "E_discount_upper": summarize(s.discount * upper, s, cfg, diag),
    }


def estimate_potential_integral(spec: ProblemSpec, g_probe, x: float, cfg: PathConfig) -> Estimate:
    """``E int_0^tau g_probe(X_t) dt``, the probe integrated against the occupation measure."""
    if spec.lam != 0:
        raise ConfigError("the potential measure is defined for lam = 0", "problem.lam")
    probe = spec.with_(g=g_probe, u_a=0.0, u_b=0.0)
    probe.validate()
    s = simulate(probe, x, cfg)
    return summarize(s.F, s, cfg, _diagnostics(probe, x, cfg, s))
