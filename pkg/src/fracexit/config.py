"""JSON run configurations: schema checks with field paths, and lossless re-emission.

A complete document looks like::

    {
      "engine": "compare",
      "problem": {"interval": [-1, 1], "lam": 0, "g": "1", "boundary": [0, 0],
                  "gamma": "0", "alpha": "0",
                  "kernel": {"variant": "classical-stable", "beta": 0.5}},
      "points": [0.0, 0.5],
      "fd": {"N": 400, "Ns": [100, 200, 400, 800], "boundary_layer": true, "reference": "analytic"},
      "mc": {"eps": 1e-4, "dt": 1e-3, "t_max": 50, "seed": 0, "n_paths": 10000, ...},
      "analytic": {"formula": "solution", "normalization": "kernel"},
      "operator": {"function": "x**2", "flavor": "caputo"},
      "compare": {"fd_tol": 0.005, "mc_sigma": 3.0},
      "output": {"path": null, "format": "csv", "samples": null}
    }

Every block except ``problem`` may be omitted; defaults are filled in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .expr import Expr
from .kernel import TwoSidedKernel, Variant
from .mcsolve import PathConfig
from .problem import DiffusionCoefficients, ProblemSpec

ENGINES = ("fd", "mc", "analytic", "operator-eval", "compare", "convergence")
FORMULAS = ("solution", "mean_exit_time", "harmonic_upper", "harmonic_lower")


@dataclass(frozen=True)
class FDSettings:
    N: int = 400
    Ns: tuple[int, ...] = (100, 200, 400, 800)
    boundary_layer: bool = True
    reference: str = "analytic"


@dataclass(frozen=True)
class AnalyticSettings:
    """``normalization="kernel"`` rescales the closed forms to the configured kernel's time scale."""

    formula: str = "solution"
    normalization: str = "kernel"


@dataclass(frozen=True)
class OperatorSettings:
    function: str = "x"
    flavor: str = "caputo"


@dataclass(frozen=True)
class CompareSettings:
    fd_tol: float = 5e-3
    mc_sigma: float = 3.0


@dataclass(frozen=True)
class OutputSettings:
    path: str | None = None
    format: str = "csv"
    samples: str | None = None


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    engine: str = "fd"
    points: tuple[float, ...] = ()
    fd: FDSettings = field(default_factory=FDSettings)
    mc: PathConfig = field(default_factory=PathConfig)
    analytic: AnalyticSettings = field(default_factory=AnalyticSettings)
    operator: OperatorSettings = field(default_factory=OperatorSettings)
    compare: CompareSettings = field(default_factory=CompareSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def with_engine(self, engine: str) -> RunConfig:
        return check_engine(replace(self, engine=engine))


# -- helpers -----------------------------------------------------------------


def _obj(d, path):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    return d


def _keys(d, allowed, path):
    for k in d:
        if k not in allowed:
            raise ConfigError("unknown key", f"{path}.{k}" if path else k)


def _num(v, path, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError("expected a finite number", path)
    if integer and (not isinstance(v, int)):
        raise ConfigError("expected an integer", path)
    if positive and not v > 0:
        raise ConfigError("must be positive", path)
    return v


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError("expected true or false", path)
    return v


def _expr(v, path):
    try:
        return Expr(v)
    except ConfigError as exc:
        raise ConfigError(exc.message, path) from None


def _choice(v, options, path):
    if v not in options:
        raise ConfigError(f"must be one of {', '.join(options)}", path)
    return v


def _source(f, path):
    if isinstance(f, Expr):
        return f.source
    raise ConfigError("only expression strings can be written to a config", path)


# -- problem -----------------------------------------------------------------


def problem_from_dict(d, path: str = "problem") -> ProblemSpec:
    d = _obj(d, path)
    _keys(d, {"interval", "lam", "g", "boundary", "gamma", "alpha", "kernel"}, path)
    for req in ("interval", "kernel"):
        if req not in d:
            raise ConfigError("missing field", f"{path}.{req}")
    iv = d["interval"]
    if not isinstance(iv, list) or len(iv) != 2:
        raise ConfigError("expected [a, b]", f"{path}.interval")
    a, b = (_num(v, f"{path}.interval") for v in iv)
    bd = d.get("boundary", [0, 0])
    if not isinstance(bd, list) or len(bd) != 2:
        raise ConfigError("expected [u_a, u_b]", f"{path}.boundary")
    u_a, u_b = (_num(v, f"{path}.boundary") for v in bd)
    lam = _num(d.get("lam", 0), f"{path}.lam")
    if lam < 0:
        raise ConfigError(f"discount lam must be >= 0, got {lam}", f"{path}.lam")
    kernel = TwoSidedKernel.from_dict(d["kernel"], f"{path}.kernel")
    coeffs = DiffusionCoefficients(_expr(d.get("gamma", "0"), f"{path}.gamma"), _expr(d.get("alpha", "0"), f"{path}.alpha"))
    try:
        spec = ProblemSpec(float(a), float(b), kernel, float(lam), _expr(d.get("g", "0"), f"{path}.g"), float(u_a), float(u_b), coeffs)
    except ConfigError as exc:
        raise ConfigError(exc.message, f"{path}.{exc.path.split('.')[-1]}") from None
    issues = spec.regime_issues()
    if issues:
        raise ConfigError("; ".join(issues), path)
    return spec


def problem_to_dict(spec: ProblemSpec) -> dict:
    return {
        "interval": [spec.a, spec.b],
        "lam": spec.lam,
        "g": _source(spec.g, "problem.g"),
        "boundary": [spec.u_a, spec.u_b],
        "gamma": _source(spec.coeffs.gamma, "problem.gamma"),
        "alpha": _source(spec.coeffs.alpha, "problem.alpha"),
        "kernel": spec.kernel.to_dict(),
    }


# -- whole document ----------------------------------------------------------


def analytic_eligible(spec: ProblemSpec) -> str | None:
    """Reason the closed forms do not apply to ``spec``, or ``None`` when they do."""
    k = spec.kernel
    if not k.is_symmetric or k.left.variant is not Variant.CLASSICAL_STABLE:
        return "closed forms need a symmetric classical-stable kernel"
    if spec.has_drift or spec.has_diffusion:
        return "closed forms need gamma == 0 and alpha == 0"
    if spec.lam != 0:
        return "closed forms need lam == 0"
    return None


def check_engine(cfg: RunConfig) -> RunConfig:
    _choice(cfg.engine, ENGINES, "engine")
    if cfg.engine == "analytic":
        why = analytic_eligible(cfg.problem)
        if why:
            raise ConfigError(why, "engine")
    if cfg.engine == "convergence" and cfg.fd.reference == "analytic":
        why = analytic_eligible(cfg.problem)
        if why:
            raise ConfigError(why + " (use reference 'finest')", "fd.reference")
    for i, x in enumerate(cfg.points):
        if not cfg.problem.a <= x <= cfg.problem.b:
            raise ConfigError(f"point {x} lies outside the interval", f"points[{i}]")
    return cfg


def _block(cls, d, path, conv):
    d = _obj(d, path)
    names = set(cls.__dataclass_fields__)
    _keys(d, names, path)
    kw = {}
    for k, v in d.items():
        kw[k] = conv[k](v, f"{path}.{k}") if k in conv else v
    return cls(**kw)


def config_from_dict(doc) -> RunConfig:
    doc = _obj(doc, "")
    _keys(doc, {"engine", "problem", "points", "fd", "mc", "analytic", "operator", "compare", "output"}, "")
    if "problem" not in doc:
        raise ConfigError("missing field", "problem")
    problem = problem_from_dict(doc["problem"])
    pts = doc.get("points", [])
    if not isinstance(pts, list):
        raise ConfigError("expected a list of numbers", "points")
    points = tuple(float(_num(x, f"points[{i}]")) for i, x in enumerate(pts))

    def n_list(v, p):
        if not isinstance(v, list) or not v:
            raise ConfigError("expected a list of grid sizes", p)
        return tuple(_num(n, p, positive=True, integer=True) for n in v)

    fd = _block(
        FDSettings,
        doc.get("fd", {}),
        "fd",
        {
            "N": lambda v, p: _num(v, p, positive=True, integer=True),
            "Ns": n_list,
            "boundary_layer": _bool,
            "reference": lambda v, p: _choice(v, ("analytic", "finest"), p),
        },
    )
    mc = PathConfig.from_dict(doc.get("mc", {}), "mc")
    analytic = _block(
        AnalyticSettings,
        doc.get("analytic", {}),
        "analytic",
        {"formula": lambda v, p: _choice(v, FORMULAS, p), "normalization": lambda v, p: _choice(v, ("kernel", "laplacian"), p)},
    )
    operator = _block(
        OperatorSettings,
        doc.get("operator", {}),
        "operator",
        {"function": lambda v, p: _expr(v, p).source, "flavor": lambda v, p: _choice(v, ("caputo", "rl"), p)},
    )
    compare = _block(
        CompareSettings,
        doc.get("compare", {}),
        "compare",
        {"fd_tol": lambda v, p: _num(v, p, positive=True), "mc_sigma": lambda v, p: _num(v, p, positive=True)},
    )

    def opt_str(v, p):
        if v is not None and not isinstance(v, str):
            raise ConfigError("expected a string or null", p)
        return v

    output = _block(
        OutputSettings,
        doc.get("output", {}),
        "output",
        {"path": opt_str, "samples": opt_str, "format": lambda v, p: _choice(v, ("csv", "json"), p)},
    )
    engine = doc.get("engine", "fd")
    if not isinstance(engine, str):
        raise ConfigError("expected a string", "engine")
    return check_engine(RunConfig(problem, engine, points, fd, mc, analytic, operator, compare, output))


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON document; schema problems raise :class:`ConfigError` with a field path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno})", "") from None
    return config_from_dict(doc)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "engine": cfg.engine,
        "problem": problem_to_dict(cfg.problem),
        "points": list(cfg.points),
        "fd": {"N": cfg.fd.N, "Ns": list(cfg.fd.Ns), "boundary_layer": cfg.fd.boundary_layer, "reference": cfg.fd.reference},
        "mc": cfg.mc.to_dict(),
        "analytic": {"formula": cfg.analytic.formula, "normalization": cfg.analytic.normalization},
        "operator": {"function": cfg.operator.function, "flavor": cfg.operator.flavor},
        "compare": {"fd_tol": cfg.compare.fd_tol, "mc_sigma": cfg.compare.mc_sigma},
        "output": {"path": cfg.output.path, "format": cfg.output.format, "samples": cfg.output.samples},
    }


def emit_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)
