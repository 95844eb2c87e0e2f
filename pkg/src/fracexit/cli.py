"""Batch front end: ``fracexit <command> CONFIG.json [overrides]``.

Exit codes: 0 on success, 1 on a numerical failure or a failed comparison,
2 on a configuration error. Each run writes its primary output (CSV or JSON)
and a JSON manifest recording every tunable value that shaped the numbers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from . import analytic as an
from . import fdsolve, mcsolve, operator
from .config import RunConfig, analytic_eligible, check_engine, config_to_dict, parse_config
from .errors import ConfigError, DomainError, FracExitError, KernelError, ReducedAccuracyWarning
from .expr import Expr

COMMANDS = {
    "solve-fd": "fd",
    "solve-mc": "mc",
    "analytic": "analytic",
    "operator-eval": "operator-eval",
    "compare": "compare",
    "convergence": "convergence",
}
DEFAULT_POINTS = 11


@dataclass
class RunResult:
    exit_code: int
    columns: list[str] = field(default_factory=list)
    rows: list[list] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
        return buf.getvalue()

    def json(self) -> str:
        recs = self.records or [dict(zip(self.columns, r)) for r in self.rows]
        return json.dumps({"results": recs, **self.extra}, indent=2, default=_jsonable)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v).__name__)


def _points(cfg: RunConfig, interior: bool = False) -> list[float]:
    if cfg.points:
        pts = list(cfg.points)
    else:
        pts = list(np.linspace(cfg.problem.a, cfg.problem.b, DEFAULT_POINTS))
    if interior:
        bad = [x for x in pts if not cfg.problem.a < x < cfg.problem.b]
        if bad:
            raise ConfigError(f"Monte Carlo start points must be interior, got {bad[0]}", "points")
    return pts


def _analytic_factor(cfg: RunConfig) -> float:
    """Time-scale divisor turning fractional-Laplacian closed forms into values for the configured kernel."""
    if cfg.analytic.normalization == "laplacian":
        return 1.0
    k = cfg.problem.kernel.left
    return k.scale * an.stable_time_scale(k.beta)


def analytic_values(cfg: RunConfig, xs) -> list[float]:
    spec = cfg.problem
    k = spec.kernel.left
    F = an.StableExitFormulas(k.beta, spec.a, spec.b)
    c = _analytic_factor(cfg)
    out = []
    for x in xs:
        f = cfg.analytic.formula
        if f == "mean_exit_time":
            v = F.mean_exit_time(x) / c
        elif f == "harmonic_upper":
            v = F.harmonic_measure_upper(x)
        elif f == "harmonic_lower":
            v = F.harmonic_measure_lower(x)
        else:
            v = (spec.u_b - spec.u_a) * F.harmonic_measure_upper(x) + spec.u_a
            if not (isinstance(spec.g, Expr) and spec.g.is_constant and float(spec.g(0.0)) == 0.0):
                v += F.potential_integral(x, lambda y: float(spec.g(y))) / c
        out.append(v)
    return out


def run_fd(cfg: RunConfig) -> RunResult:
    u = fdsolve.solve_bvp(cfg.problem, cfg.fd.N, mcsolve.default_workers(), cfg.fd.boundary_layer)
    res = RunResult(0, ["x", "u"], [[x, v] for x, v in zip(u.grid, u.values)])
    res.extra["diagnostics"] = u.diagnostics
    if cfg.points:
        res.extra["at_points"] = [{"x": x, "u": float(u(x))} for x in cfg.points]
    return res


def run_mc(cfg: RunConfig) -> RunResult:
    res = RunResult(0, ["x", "mean", "stderr", "n", "censored_fraction"])
    samples = []
    for x in _points(cfg, interior=True):
        s = mcsolve.simulate(cfg.problem, x, cfg.mc)
        est = mcsolve.summarize(mcsolve.caputo_values(cfg.problem, s), s, cfg.mc)
        res.rows.append([x, est.mean, est.stderr, est.n, est.censored_fraction])
        res.records.append({"x": x, **est.to_dict()})
        samples.append((x, s))
    if cfg.output.samples:
        with open(cfg.output.samples, "w") as fh:
            for i, (x, s) in enumerate(samples):
                text = s.to_csv()
                lines = text.splitlines()
                if i == 0:
                    fh.write("x0," + lines[0] + "\n")
                fh.writelines(f"{x!r},{ln}\n" for ln in lines[1:])
    return res


def run_analytic(cfg: RunConfig) -> RunResult:
    xs = _points(cfg)
    return RunResult(0, ["x", cfg.analytic.formula], [[x, v] for x, v in zip(xs, analytic_values(cfg, xs))])


def run_operator(cfg: RunConfig) -> RunResult:
    f = Expr(cfg.operator.function)
    sf = operator.SmoothFunction(lambda x: float(f(x)), domain=cfg.problem.interval)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReducedAccuracyWarning)
        for x in _points(cfg):
            rows.append([x, operator.two_sided_apply(sf, cfg.problem, x, cfg.operator.flavor)])
    return RunResult(0, ["x", "value"], rows)


def run_compare(cfg: RunConfig) -> RunResult:
    """Table ``x, fd, mc, mc_stderr, analytic`` plus per-point pass/fail.

    Only the configured points are compared; an empty list gives an empty report.
    """
    xs = list(cfg.points)
    bad = [x for x in xs if not cfg.problem.a < x < cfg.problem.b]
    if bad:
        raise ConfigError(f"comparison points must be interior, got {bad[0]}", "points")
    res = RunResult(0, ["x", "fd", "mc", "mc_stderr", "analytic"])
    if not xs:
        res.extra["report"] = []
        return res
    u = fdsolve.solve_bvp(cfg.problem, cfg.fd.N, mcsolve.default_workers(), cfg.fd.boundary_layer)
    have_exact = analytic_eligible(cfg.problem) is None
    exact = analytic_values(replace(cfg, analytic=replace(cfg.analytic, formula="solution")), xs) if have_exact else [None] * len(xs)
    report = []
    tol, sig = cfg.compare.fd_tol, cfg.compare.mc_sigma
    for x, ex in zip(xs, exact):
        est = mcsolve.estimate_caputo_solution(cfg.problem, x, cfg.mc)
        fd = float(u(x))
        res.rows.append([x, fd, est.mean, est.stderr, ex])
        if ex is not None:
            fd_err = abs(fd - ex)
            z = abs(est.mean - ex) / est.stderr if est.stderr > 0 else (0.0 if est.mean == ex else math.inf)
            ok_fd, ok_mc = fd_err <= tol, z <= sig
            report.append({"x": x, "fd_error": fd_err, "fd_pass": ok_fd, "mc_z": z, "mc_pass": ok_mc})
        else:
            gap = abs(est.mean - fd)
            ok = gap <= sig * est.stderr + tol
            report.append({"x": x, "mc_fd_gap": gap, "bound": sig * est.stderr + tol, "fd_pass": ok, "mc_pass": ok})
    res.extra["report"] = report
    if not all(r["fd_pass"] and r["mc_pass"] for r in report):
        res.exit_code = 1
    return res


def run_convergence(cfg: RunConfig) -> RunResult:
    Ns = list(cfg.fd.Ns)
    if cfg.fd.reference == "analytic":
        c = replace(cfg, analytic=replace(cfg.analytic, formula="solution"))
        ref = lambda xs: np.array(analytic_values(c, xs))
    else:
        ref = fdsolve.solve_bvp(cfg.problem, Ns[-1], mcsolve.default_workers(), cfg.fd.boundary_layer)
    table = fdsolve.convergence_study(cfg.problem, Ns, ref, mcsolve.default_workers())
    return RunResult(0, ["N", "error", "order"], [[r.N, r.error, r.order] for r in table])


RUNNERS = {
    "fd": run_fd,
    "mc": run_mc,
    "analytic": run_analytic,
    "operator-eval": run_operator,
    "compare": run_compare,
    "convergence": run_convergence,
}


def manifest(cfg: RunConfig, result: RunResult | None, exit_code: int, error: str | None = None) -> dict:
    return {
        "package_version": __version__,
        "engine": cfg.engine,
        "exit_code": exit_code,
        "error": error,
        "config": config_to_dict(cfg),
        "decisions": {
            "eps": cfg.mc.eps,
            "dt": cfg.mc.dt,
            "t_max": cfg.mc.t_max,
            "seed": cfg.mc.seed,
            "n_paths": cfg.mc.n_paths,
            "block_size": cfg.mc.block_size,
            "compensate": cfg.mc.compensate,
            "bridge": cfg.mc.bridge,
            "N": cfg.fd.N,
            "Ns": list(cfg.fd.Ns),
            "boundary_layer": cfg.fd.boundary_layer,
            "delta": operator.DELTA_MAX,
            "operator_quad_tol": operator.QUAD_TOL,
            "pivot_tol": fdsolve.PIVOT_TOL,
            "fd_tol": cfg.compare.fd_tol,
            "mc_sigma": cfg.compare.mc_sigma,
            "analytic_normalization": cfg.analytic.normalization,
        },
        "extra": result.extra if result else {},
    }


def run(cfg: RunConfig, out=None) -> int:
    """Execute ``cfg`` and write its artefacts; returns the exit code."""
    out = out or sys.stdout
    result, error = None, None
    try:
        result = RUNNERS[cfg.engine](cfg)
        code = result.exit_code
    except (ConfigError, DomainError, KernelError) as exc:
        code, error = 2, str(exc)
    except (FracExitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code, error = 1, f"{type(exc).__name__}: {exc}"
    man = manifest(cfg, result, code, error)
    body = None
    if result is not None:
        body = result.csv() if cfg.output.format == "csv" else result.json()
    if cfg.output.path:
        if body is not None:
            with open(cfg.output.path, "w") as fh:
                fh.write(body)
        with open(cfg.output.path + ".manifest.json", "w") as fh:
            json.dump(man, fh, indent=2, default=_jsonable)
    else:
        if body is not None:
            out.write(body)
        out.write(json.dumps({"manifest": man}, default=_jsonable) + "\n")
    if error:
        print(f"fracexit: {error}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracexit", description="Two-sided fractional boundary value problems and exit statistics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="JSON run configuration, or - for stdin")
        s.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        s.add_argument("--eps", type=float, help="small-jump cutoff")
        s.add_argument("--dt", type=float, help="Euler step for drift and diffusion")
        s.add_argument("--tmax", type=float, help="path-time cap")
        s.add_argument("--seed", type=int)
        s.add_argument("--x", type=float, nargs="+", help="evaluation points")
        s.add_argument("--N", type=int, help="grid cells for the finite-difference solver")
        s.add_argument("--output", help="write results here (manifest goes to OUTPUT.manifest.json)")
        s.add_argument("--format", choices=("csv", "json"))
    return p


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    mc = {}
    for flag, name in (("paths", "n_paths"), ("eps", "eps"), ("dt", "dt"), ("tmax", "t_max"), ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            mc[name] = v
    if mc:
        cfg = replace(cfg, mc=replace(cfg.mc, **mc))
    if args.x is not None:
        cfg = replace(cfg, points=tuple(args.x))
    if args.N is not None:
        cfg = replace(cfg, fd=replace(cfg.fd, N=args.N))
    out = {}
    if args.output is not None:
        out["path"] = args.output
    if args.format is not None:
        out["format"] = args.format
    if out:
        cfg = replace(cfg, output=replace(cfg.output, **out))
    return check_engine(replace(cfg, engine=COMMANDS[args.command]))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = sys.stdin.read() if args.config == "-" else open(args.config).read()
        cfg = apply_overrides(parse_config(text), args)
    except OSError as exc:
        print(f"fracexit: cannot read config: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError, KernelError) as exc:
        print(f"fracexit: configuration error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
