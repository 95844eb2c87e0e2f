"""Deterministic grid solver for the two-sided Caputo-type boundary value problem.

The jump integrals are discretised by product integration: ``u`` is replaced
by a piecewise-linear interpolant on the uniform grid and integrated exactly
against the kernel, cell by cell. On the cell touching ``x_i`` only the
finite first moment of the kernel enters, so the ``y = 0`` singularity is
never sampled. Boundary terms use ``u_0 = u_a`` and ``u_N = u_b`` exactly. The
local part uses second-order central differences.

Without diffusion, solutions grow like ``dist**(beta/2)`` off a terminal, and
plain linear interpolation then converges like ``h**(beta/2)`` in the sup
norm. When the stability index at a terminal is known, the interpolation is
linear in the mapped coordinate ``S = I_t(p_a, p_b)`` (regularised incomplete
beta of ``t = (x - a)/(b - a)``) instead. That coordinate absorbs the
boundary power and restores first-order accuracy. Cell weights then come
from Gauss-Legendre rules, and from Gauss-Jacobi rules on the two kinds of
singular cells.
"""

from __future__ import annotations

import csv
import io
import json
import functools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg, special

from .errors import ConfigError, SolverError
from .kernel import KernelSpec, Variant
from .operator import SmoothFunction, two_sided_apply
from .problem import ProblemSpec

PIVOT_TOL = 1e-14
MIN_INTERVALS = 8


@dataclass
class GridFunction:
    """Values on the ``N + 1`` equispaced nodes ``a = x_0 < ... < x_N = b``."""

    grid: np.ndarray
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if self.grid.size < 3:
            raise ValueError("a grid function needs at least 3 nodes")
        steps = np.diff(self.grid)
        h = (self.grid[-1] - self.grid[0]) / (self.grid.size - 1)
        if h <= 0 or np.max(np.abs(steps - h)) > 1e-12 * h + 4 * np.finfo(float).eps * np.max(np.abs(self.grid)):
            raise ValueError("grid spacing is not uniform")

    @property
    def N(self) -> int:
        return self.grid.size - 1

    @property
    def h(self) -> float:
        return (self.grid[-1] - self.grid[0]) / self.N

    def __call__(self, x):
        """Piecewise-linear interpolation."""
        return np.interp(x, self.grid, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "u"])
        for x, u in zip(self.grid, self.values):
            w.writerow([repr(float(x)), repr(float(u))])
        return buf.getvalue()


@dataclass
class DiscreteSystem:
    """Interior linear system ``matrix @ u_int = rhs``.

    ``operator`` holds the rows of the discretised ``-L_{[a,b]*}`` for the
    interior nodes against all ``N + 1`` nodes; ``matrix = lam I - operator``
    restricted to interior columns.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    operator: np.ndarray
    grid: np.ndarray
    spec: ProblemSpec


def _one_side_weights(k: KernelSpec, x: float, n_cells: int, h: float):
    """Product-integration weights for piecewise-linear ``u`` on one side of ``x``.

    Returns ``(w, t)``: ``w[m]`` multiplies ``u`` at the node ``m`` cells away
    (``m = 1..n_cells``, index 0 unused) and ``t`` is the tail mass beyond the
    terminal. The diagonal receives ``-(sum(w) + t)``.
    """
    w = np.zeros(n_cells + 1)
    if k.is_zero or n_cells == 0:
        return w, 0.0
    edges = h * np.arange(n_cells + 1, dtype=float)
    w[1] += k.moment(x, 0.0, h) / h
    if n_cells > 1:
        lo, hi = edges[1:-1], edges[2:]
        m0 = np.atleast_1d(k.mass(x, lo, hi))
        m1 = np.atleast_1d(k.moment(x, lo, hi))
        B = (m1 - lo * m0) / h
        A = m0 - B
        w[1:-1] += A
        w[2:] += B
    t = float(k.tail_mass(x, n_cells * h))
    return w, t


def _quad_cell(f, lo, hi):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def boundary_exponents(spec: ProblemSpec) -> tuple[float | None, float | None]:
    """Exponents ``p`` of the expected ``dist**p`` boundary layer at ``a`` and ``b``.

    Recognised only without diffusion and when both kernels have the same
    stability index at the terminal, giving ``p = beta / 2``; otherwise ``None``.
    """
    if spec.has_diffusion:
        return None, None
    out = []
    for x in (spec.a, spec.b):
        bl = _order(spec.kernel.left, x)
        br = _order(spec.kernel.right, x)
        out.append(bl / 2 if bl is not None and br is not None and abs(bl - br) < 1e-12 else None)
    return out[0], out[1]


def _order(k: KernelSpec, x: float):
    if k.is_zero or not k.has_closed_forms:
        return None
    return float(k.order_at(x))


@functools.lru_cache(maxsize=64)
def _jacobi(n: int, power: float):
    """Gauss-Jacobi rule for weight ``(1 + s)**power`` on ``[-1, 1]``."""
    return special.roots_jacobi(n, 0.0, power)


class _Mapping:
    """Coordinate ``S = I_t(p_a, p_b)`` (regularised incomplete beta) in which ``u`` is interpolated.

    A solution behaving like ``dist**p`` at a terminal is smooth as a function
    of ``S``, so piecewise-linear interpolation in ``S`` keeps its accuracy
    across the whole boundary layer. Cells right of the midpoint work with the
    complement ``1 - S`` to avoid cancellation near ``b``.
    """

    GL_POINTS = 12
    JACOBI_POINTS = 16

    def __init__(self, grid: np.ndarray, pa: float, pb: float):
        self.a, self.b = grid[0], grid[-1]
        self.N = grid.size - 1
        self.h = (self.b - self.a) / self.N
        self.grid = grid
        self.pa, self.pb = pa, pb
        xi, om = np.polynomial.legendre.leggauss(self.GL_POINTS)
        self.xi = (xi + 1) / 2
        self.omega = om / 2
        t = np.arange(self.N + 1) / self.N
        self.S = special.betainc(pa, pb, t)
        self.C = special.betainc(pb, pa, 1 - t)
        self.upper = (np.arange(self.N) + 0.5) / self.N > 0.5
        z = grid[:-1, None] + self.h * self.xi[None, :]
        self.theta = np.array([self._theta(j, z[j]) for j in range(self.N)])

    def _theta(self, j: int, z):
        t = (np.asarray(z, dtype=float) - self.a) / (self.b - self.a)
        if self.upper[j]:
            c = special.betainc(self.pb, self.pa, np.clip(1 - t, 0.0, 1.0))
            return (self.C[j] - c) / (self.C[j] - self.C[j + 1])
        s = special.betainc(self.pa, self.pb, np.clip(t, 0.0, 1.0))
        return (s - self.S[j]) / (self.S[j + 1] - self.S[j])

    def row_weights(self, k: KernelSpec, i: int, side: int) -> np.ndarray:
        """Coefficients over all nodes of one side's jump integral plus its boundary term."""
        N, h, x = self.N, self.h, self.grid[i]
        row = np.zeros(N + 1)
        if k.is_zero:
            return row
        if side < 0:
            cells = np.arange(0, i)
            near, terminal, term_node = i - 1, 0, 0
            dist_lo, dist_hi = (i - cells - 1) * h, (i - cells) * h
            y = x - (self.grid[cells, None] + h * self.xi[None, :])
            tail = float(k.tail_mass(x, i * h))
        else:
            cells = np.arange(i, N)
            near, terminal, term_node = i, N - 1, N
            dist_lo, dist_hi = (cells - i) * h, (cells - i + 1) * h
            y = (self.grid[cells, None] + h * self.xi[None, :]) - x
            tail = float(k.tail_mass(x, (N - i) * h))
        regular = (cells != near) & ((cells != terminal) | self._smooth_at(terminal))
        rc = cells[regular]
        if rc.size:
            M = np.atleast_1d(k.mass(x, dist_lo[regular], dist_hi[regular]))
            W = h * np.sum(self.omega * self.theta[rc] * k.density_at(x, y[regular]), axis=1)
            np.add.at(row, rc, M - W)
            np.add.at(row, rc + 1, W)
            row[i] -= M.sum()
        if terminal != near and not self._smooth_at(terminal):
            j = terminal
            lo, hi = dist_lo[j - cells[0]], dist_hi[j - cells[0]]
            M = float(k.mass(x, lo, hi))
            W = self._terminal_cell(k, x, side)
            row[j] += M - W
            row[j + 1] += W
            row[i] -= M
        W = self._near_cell(k, i, near, side)
        row[i + side] += W
        row[i] -= W
        row[term_node] += tail
        row[i] -= tail
        return row

    def _near_cell(self, k: KernelSpec, i: int, near: int, side: int) -> float:
        """Weight of the neighbour across the cell adjacent to ``x``, where ``nu ~ y**(-1-beta)``."""
        x, h = self.grid[i], self.h
        if (near == 0 and self.pa != 1.0) or (near == self.N - 1 and self.pb != 1.0):
            # the neighbour cell is also the singular terminal cell
            if side < 0:
                return _quad_cell(lambda y: (1.0 - self._theta(near, x - y)) * k.density_at(x, y), 0.0, h)
            return _quad_cell(lambda y: self._theta(near, x + y) * k.density_at(x, y), 0.0, h)
        bk = float(k.order_at(x))
        s, w = _jacobi(self.JACOBI_POINTS, -bk)
        y = h * (1 + s) / 2
        lin = 1.0 - self._theta(near, x - y) if side < 0 else self._theta(near, x + y)
        return (h / 2) ** (1 - bk) * float(np.sum(w * lin * k.density_at(x, y) * y**bk))

    def _terminal_cell(self, k: KernelSpec, x: float, side: int) -> float:
        """``int theta nu`` over the cell touching a terminal, where ``u ~ dist**p``."""
        h = self.h
        p = self.pa if side < 0 else self.pb
        s, w = _jacobi(self.JACOBI_POINTS, p)
        u = h * (1 + s) / 2
        scale = (h / 2) ** (1 + p)
        if side < 0:
            z = self.a + u
            rel = self._theta(0, z) / u**p
            return scale * float(np.sum(w * rel * k.density_at(x, x - z)))
        z = self.b - u
        M = float(k.mass(x, self.b - h - x, self.b - x))
        rel = (1.0 - self._theta(self.N - 1, z)) / u**p
        return M - scale * float(np.sum(w * rel * k.density_at(x, z - x)))

    def _smooth_at(self, cell: int) -> bool:
        return (cell == 0 and self.pa == 1.0) or (cell == self.N - 1 and self.pb == 1.0)


def _assemble_row(spec: ProblemSpec, grid: np.ndarray, i: int, mapping: _Mapping | None = None) -> np.ndarray:
    N = grid.size - 1
    h = (spec.b - spec.a) / N
    x = grid[i]
    if mapping is not None:
        row = mapping.row_weights(spec.kernel.left, i, -1) + mapping.row_weights(spec.kernel.right, i, +1)
    else:
        row = np.zeros(N + 1)
        wl, tl = _one_side_weights(spec.kernel.left, x, i, h)
        row[i - np.arange(1, i + 1)] += wl[1:]
        row[0] += tl
        wr, tr = _one_side_weights(spec.kernel.right, x, N - i, h)
        row[i + np.arange(1, N - i + 1)] += wr[1:]
        row[N] += tr
        row[i] -= wl.sum() + tl + wr.sum() + tr
    g = float(spec.coeffs.gamma(x))
    al = float(spec.coeffs.alpha(x))
    if g:
        row[i + 1] += g / (2 * h)
        row[i - 1] -= g / (2 * h)
    if al:
        row[i + 1] += al / h**2
        row[i - 1] += al / h**2
        row[i] -= 2 * al / h**2
    return row


def assemble(spec: ProblemSpec, N: int, workers: int = 1, boundary_layer: bool = True) -> DiscreteSystem:
    """Discretise ``-L_{[a,b]*} u = lam u - g`` on ``N`` uniform cells.

    With ``boundary_layer`` the terminal cells use the exponents from
    :func:`boundary_exponents`. Rows are independent and may be assembled by
    ``workers`` threads; the result does not depend on the assembly order.
    """
    if not isinstance(N, (int, np.integer)) or N < MIN_INTERVALS:
        raise ConfigError(f"need at least {MIN_INTERVALS} grid cells, got {N}", "N")
    grid = np.linspace(spec.a, spec.b, N + 1)
    pa, pb = boundary_exponents(spec) if boundary_layer else (None, None)
    mapping = None if pa is None and pb is None else _Mapping(grid, pa or 1.0, pb or 1.0)
    interior = range(1, N)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(lambda i: _assemble_row(spec, grid, i, mapping), interior))
    else:
        rows = [_assemble_row(spec, grid, i, mapping) for i in interior]
    K = np.array(rows)
    matrix = spec.lam * np.eye(N - 1) - K[:, 1:N]
    g = np.broadcast_to(np.asarray(spec.g(grid[1:N]), dtype=float), (N - 1,))
    rhs = g + K[:, 0] * spec.u_a + K[:, N] * spec.u_b
    return DiscreteSystem(matrix, rhs, K, grid, spec)


def gl_weights(beta: float, n: int) -> np.ndarray:
    """Grunwald-Letnikov coefficients ``(-1)^k binom(beta, k)``, ``k = 0..n``."""
    w = np.empty(n + 1)
    w[0] = 1.0
    for k in range(1, n + 1):
        w[k] = w[k - 1] * (1.0 - (beta + 1.0) / k)
    return w


def assemble_gl(spec: ProblemSpec, N: int) -> DiscreteSystem:
    """First-order Grunwald-Letnikov discretisation, for classical-stable kernels only.

    Serves as an independent cross-check of :func:`assemble`: with
    ``KernelSpec.stable(beta, scale)`` each one-sided operator is ``-scale``
    times the standard Caputo derivative, whose GL form acts on ``u - u(terminal)``.
    """
    if not isinstance(N, (int, np.integer)) or N < MIN_INTERVALS:
        raise ConfigError(f"need at least {MIN_INTERVALS} grid cells, got {N}", "N")
    for k in (spec.kernel.left, spec.kernel.right):
        if not k.is_zero and k.variant is not Variant.CLASSICAL_STABLE:
            raise ConfigError("the Grunwald-Letnikov path needs classical-stable kernels", "kernel")
    grid = np.linspace(spec.a, spec.b, N + 1)
    h = (spec.b - spec.a) / N
    K = np.zeros((N - 1, N + 1))
    for k, sigma in ((spec.kernel.left, -1), (spec.kernel.right, +1)):
        if k.is_zero:
            continue
        w = gl_weights(k.beta, N) * (k.scale * h ** (-k.beta))
        for r, i in enumerate(range(1, N)):
            m = i if sigma < 0 else N - i
            cols = i + sigma * np.arange(m + 1)
            K[r, cols] -= w[: m + 1]
            K[r, 0 if sigma < 0 else N] += w[: m + 1].sum()
    for r, i in enumerate(range(1, N)):
        x = grid[i]
        g = float(spec.coeffs.gamma(x))
        al = float(spec.coeffs.alpha(x))
        K[r, i + 1] += g / (2 * h) + al / h**2
        K[r, i - 1] += -g / (2 * h) + al / h**2
        K[r, i] -= 2 * al / h**2
    matrix = spec.lam * np.eye(N - 1) - K[:, 1:N]
    gv = np.broadcast_to(np.asarray(spec.g(grid[1:N]), dtype=float), (N - 1,))
    rhs = gv + K[:, 0] * spec.u_a + K[:, N] * spec.u_b
    return DiscreteSystem(matrix, rhs, K, grid, spec)


def solve_system(system: DiscreteSystem) -> GridFunction:
    A = system.matrix
    spec = system.spec
    with warnings.catch_warnings():
        # singularity is reported through SolverError below
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=True)
    anorm = np.linalg.norm(A, 1)
    rcond = linalg.lapack.dgecon(lu, anorm, norm="1")[0]
    cond = 1.0 / rcond if rcond > 0 else math.inf
    if np.min(np.abs(np.diag(lu))) < PIVOT_TOL * max(anorm, 1.0):
        raise SolverError(f"singular system: pivot below {PIVOT_TOL:g} (condition estimate {cond:.3g})", cond)
    u_int = linalg.lu_solve((lu, piv), system.rhs)
    values = np.empty(system.grid.size)
    values[0] = spec.u_a
    values[-1] = spec.u_b
    values[1:-1] = u_int
    residual = float(np.max(np.abs(A @ u_int - system.rhs))) if u_int.size else 0.0
    return GridFunction(
        system.grid,
        values,
        {"residual": residual, "condition_estimate": cond, "N": system.grid.size - 1},
    )


def solve_bvp(spec: ProblemSpec, N: int, workers: int = 1, boundary_layer: bool = True, scheme: str = "product") -> GridFunction:
    """Solve the Dirichlet problem on ``N`` cells; ``diagnostics`` carries residual and condition.

    ``scheme="gl"`` switches to the Grunwald-Letnikov cross-check path.
    """
    if scheme == "gl":
        return solve_system(assemble_gl(spec, N))
    if scheme != "product":
        raise ConfigError(f"unknown scheme {scheme!r}", "scheme")
    return solve_system(assemble(spec, N, workers, boundary_layer))


def hermite_lift(a: float, b: float, u_a: float, u_b: float) -> SmoothFunction:
    """Cubic from ``u_a`` to ``u_b`` with zero slope at both ends."""
    L = b - a
    du = u_b - u_a

    def value(x):
        t = (np.asarray(x, dtype=float) - a) / L
        return u_a + du * t * t * (3 - 2 * t)

    def d1(x):
        t = (np.asarray(x, dtype=float) - a) / L
        return du * 6 * t * (1 - t) / L

    def d2(x):
        t = (np.asarray(x, dtype=float) - a) / L
        return du * (6 - 12 * t) / L**2

    return SmoothFunction(value, d1, d2, domain=(a, b))


@dataclass
class ReducedProblem:
    """Zero-boundary RL problem for ``w = u - phi`` plus the lift itself."""

    spec: ProblemSpec
    phi: SmoothFunction
    endpoint_residuals: tuple[float, float]

    def recombine(self, w: GridFunction) -> GridFunction:
        return GridFunction(w.grid, w.values + self.phi(w.grid), dict(w.diagnostics))


def reduce_to_rl(spec: ProblemSpec, phi: SmoothFunction | None = None, slope_tol: float = 1e-6) -> ReducedProblem:
    """Shift the boundary data into the source term.

    With ``u = w + phi``, ``w`` vanishes at both terminals and solves the RL-type
    problem with source ``g - lam phi + (-L_{[a,b]*} phi)``. ``phi`` defaults to
    :func:`hermite_lift`. The values ``|(-L_{[a,b]*} phi)(a)|`` and ``(b)`` are
    reported, not enforced.
    """
    a, b = spec.interval
    if phi is None:
        if spec.u_a == 0 and spec.u_b == 0:
            phi = SmoothFunction(lambda x: 0.0 * np.asarray(x, dtype=float), lambda x: 0.0, lambda x: 0.0, (a, b))
        else:
            phi = hermite_lift(a, b, spec.u_a, spec.u_b)
    phi = phi.on(a, b)
    if abs(float(phi(a)) - spec.u_a) > 1e-12 * max(1.0, abs(spec.u_a)) or abs(float(phi(b)) - spec.u_b) > 1e-12 * max(1.0, abs(spec.u_b)):
        raise ConfigError("lift does not match the boundary values", "phi")
    if abs(phi.d1(a)) > slope_tol or abs(phi.d1(b)) > slope_tol:
        raise ConfigError("lift must have zero slope at both terminals", "phi")
    if spec.u_a == 0 and spec.u_b == 0 and phi.derivative is not None and float(np.max(np.abs(phi(np.linspace(a, b, 9))))) == 0.0:
        return ReducedProblem(spec, phi, (0.0, 0.0))

    g0, lam = spec.g, spec.lam

    def g_reduced(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        Lphi = np.array([two_sided_apply(phi, spec, float(t)) for t in xs])
        out = np.asarray(g0(xs), dtype=float) - lam * np.asarray(phi(xs), dtype=float) + Lphi
        return out if np.ndim(x) else float(out[0])

    ends = (abs(two_sided_apply(phi, spec, a)), abs(two_sided_apply(phi, spec, b)))
    return ReducedProblem(spec.with_(g=g_reduced, u_a=0.0, u_b=0.0), phi, ends)


@dataclass
class ConvergenceRow:
    N: int
    error: float
    order: float | None


def convergence_study(spec: ProblemSpec, Ns: Sequence[int], reference: GridFunction | Callable, workers: int = 1) -> list[ConvergenceRow]:
    """Sup-norm errors against ``reference`` and observed orders from successive ratios.

    A :class:`GridFunction` reference is compared at the nodes it shares with
    each grid; a callable reference is evaluated at every node.
    """
    Ns = list(Ns)
    if len(Ns) < 3:
        raise ConfigError("a convergence study needs at least three grid sizes", "Ns")
    for n1, n2 in zip(Ns, Ns[1:]):
        if n2 <= n1 or n2 % n1:
            raise ConfigError("each grid size must divide the next", "Ns")
    rows: list[ConvergenceRow] = []
    for N in Ns:
        u = solve_bvp(spec, N, workers)
        if isinstance(reference, GridFunction):
            ratio = reference.N // N
            if reference.N % N:
                raise ConfigError(f"reference grid ({reference.N}) is not a refinement of N={N}", "reference")
            ref = reference.values[::ratio]
        else:
            ref = np.asarray(reference(u.grid), dtype=float)
        err = float(np.max(np.abs(u.values - ref)))
        order = None
        if rows and rows[-1].error > 0 and err > 0:
            order = math.log(rows[-1].error / err) / math.log(N / rows[-1].N)
        rows.append(ConvergenceRow(N, err, order))
    return rows


def diagnostics_json(u: GridFunction, table: list[ConvergenceRow] | None = None) -> str:
    out = dict(u.diagnostics)
    if table is not None:
        out["convergence"] = [{"N": r.N, "error": r.error, "order": r.order} for r in table]
    return json.dumps(out, indent=2)
