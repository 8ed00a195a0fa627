"""Value function as the smallest majorant of the reward in ``{lambda * h_c}``.

For a start point ``x`` the minimizing merge point is found from the sign of

    Delta(c) = sup_{y <= x} g/h_c  -  sup_{y >= x} g/h_c      (in log space)

If the decreasing limit ``h_b`` already attains its global sup to the left
of ``x`` the minimizer is ``c = b``; symmetrically for the increasing limit
``h_a``.  Otherwise ``Delta`` is positive as ``c -> a`` and negative as
``c -> b`` and the root ``c*`` is bracketed and solved for.  The value is
``lambda* h_{c*}(x)`` with ``lambda*`` the common supremum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bm_harmonic import BMFamily
from .errors import BisectionFailure, DomainError, UnboundedValue
from .model import AmbiguityProblem, DriftSelector, SolverSettings, ValueSolution, constant_theta, merge_point
from .ode_harmonic import ODEFamily, default_truncation

ODE_VALUE_TOL = 1e-4
_BIG = 1e6  # log-ratio difference standing in for an infinite one


def default_range(diffusion) -> tuple[float, float]:
    if diffusion.family == "GeometricBM":
        return 0.05, 20.0
    lo, hi = -5.0, 5.0
    if math.isfinite(diffusion.a):
        lo = diffusion.a + 1e-2 * max(1.0, abs(diffusion.a))
        hi = max(hi, lo + 10.0)
    if math.isfinite(diffusion.b):
        hi = diffusion.b - 1e-2 * max(1.0, abs(diffusion.b))
        lo = min(lo, hi - 10.0)
    return lo, hi


def make_family(problem: AmbiguityProblem, settings: SolverSettings, x_min: float, x_max: float):
    d = problem.diffusion
    closed_form = d.family == "ArithmeticBM" or (d.family == "GeometricBM" and problem.kappa == 0)
    path = settings.path
    if path == "auto":
        path = "analytic" if closed_form else "ode"
    if path == "analytic":
        if not closed_form:
            raise ValueError("no closed-form harmonic functions for this diffusion; use the ode path")
        return BMFamily.for_problem(problem)
    return ODEFamily(problem, default_truncation(d, x_min, x_max))


@dataclass(frozen=True)
class RatioProfile:
    """Suprema of ``g/h_c`` over ``{y <= x}`` and ``{y >= x}``.

    ``inf`` marks a ratio that diverges toward a grid end (confirmed by a
    monotone trend over the last 10% of nodes); it is never saturated.
    """

    c: float
    x: float
    sup_left: float
    sup_right: float
    argmax_left: float
    argmax_right: float

    @property
    def sup(self) -> float:
        return max(self.sup_left, self.sup_right)


@dataclass(frozen=True)
class ValuePoint:
    x: float
    v: float
    c_star: float
    lambda_star: float
    case: int
    argmax_left: float
    argmax_right: float
    residual: float


class _Context:
    """Grid with ``x`` inserted plus cached reward values for one start point."""

    def __init__(self, solver: "MajorantSolver", x: float):
        y = solver.grid
        i = int(np.searchsorted(y, x))
        if i < y.size and y[i] == x:
            self.y = y
        else:
            self.y = np.insert(y, i, x)
        self.ix = i
        self.x = x
        self.logg = np.insert(solver._logg, i, solver._log_reward(x)) if self.y is not y else solver._logg


class MajorantSolver:
    """Smallest-majorant solver for one ``AmbiguityProblem``.

    Parameters
    ----------
    problem
        Diffusion, ambiguity radius, discount rate and reward.
    settings
        ``grid_n`` and ``[x_min, x_max]`` define the grid on which suprema are
        taken; ``tol`` is the relative value tolerance of the stopping test
        (raised to ``1e-4`` on the tabulated ODE path).
    family
        Optional prebuilt ``{h_c}`` family (closed form or ODE tables).
    """

    def __init__(self, problem: AmbiguityProblem, settings: SolverSettings | None = None, family=None, grid=None):
        settings = settings or SolverSettings()
        self.problem = problem
        self.settings = settings
        d = problem.diffusion
        lo, hi = default_range(d)
        x_min = settings.x_min if settings.x_min is not None else lo
        x_max = settings.x_max if settings.x_max is not None else hi
        if not (d.a < x_min < x_max < d.b):
            raise DomainError("solver range must lie inside the state interval")
        self.family = family if family is not None else make_family(problem, settings, x_min, x_max)
        if grid is None:
            if d.family == "GeometricBM" or (math.isfinite(d.a) and d.a >= 0 and x_min > 0):
                grid = np.geomspace(x_min, x_max, settings.grid_n)
            else:
                grid = np.linspace(x_min, x_max, settings.grid_n)
        grid = np.asarray(grid, dtype=float)
        kinks = [p for p in problem.reward.breakpoints() if grid[0] < p < grid[-1]]
        self.grid = np.union1d(grid, kinks)
        self._discontinuities = np.array(problem.reward.discontinuities())
        self._logg = self._log_reward(self.grid)
        analytic = getattr(self.family, "analytic", False)
        self.value_tol = settings.tol if analytic else max(settings.tol, ODE_VALUE_TOL)
        c_range = getattr(self.family, "c_range", None)
        self.c_range = c_range
        self._log_c = c_range is None and self.family.lower == 0.0

    # ------------------------------------------------------------------
    def _log_reward(self, y):
        with np.errstate(divide="ignore"):
            return np.log(self.problem.reward(y))

    def _dlog_reward(self, y: float, side: str) -> float:
        g = self.problem.reward
        return g.slope(y, side) / g(y)

    def _log_ratio(self, c: float, ctx: _Context) -> np.ndarray:
        return ctx.logg - self.family.log_h(c, ctx.y)

    def _diverges(self, logr: np.ndarray, end: int) -> bool:
        n = max(3, logr.size // 10)
        tail = logr[-n:] if end > 0 else logr[:n][::-1]
        return bool(np.all(np.isfinite(tail)) and np.all(np.diff(tail) > 0))

    def _smooth_cell(self, a: float, b: float) -> bool:
        if self._discontinuities.size == 0:
            return True
        return not np.any((self._discontinuities >= a) & (self._discontinuities <= b))

    def _polish(self, c: float, ctx: _Context, gi: int, lo: int, hi: int, best: float) -> tuple[float, float]:
        """Refine a discrete maximizer by solving for a stationary point in the adjacent cells."""
        y, logg = ctx.y, ctx.logg
        arg = y[gi]
        fam = self.family
        for j in (gi - 1, gi + 1):
            if j < lo or j > hi:
                continue
            a, b = (y[j], y[gi]) if j < gi else (y[gi], y[j])
            ia, ib = min(j, gi), max(j, gi)
            if not (np.isfinite(logg[ia]) and np.isfinite(logg[ib])) or not self._smooth_cell(a, b):
                continue

            def dlr(t, side):
                return self._dlog_reward(t, side) - float(fam.dlog_h(c, t))

            da, db = dlr(a, "right"), dlr(b, "left")
            if not (da > 0 > db):
                continue
            root = brentq(lambda t: dlr(t, "right"), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            val = float(self._log_reward(root) - fam.log_h(c, root))
            if val > best:
                best, arg = val, root
        return best, arg

    def _side_sup(self, c: float, ctx: _Context, logr: np.ndarray, side: str) -> tuple[float, float]:
        if side == "left":
            lo, hi = 0, ctx.ix
        else:
            lo, hi = ctx.ix, ctx.y.size - 1
        seg = logr[lo : hi + 1]
        k = int(np.argmax(seg))
        best = float(seg[k])
        gi = lo + k
        if best == -math.inf:
            return -math.inf, math.nan
        # an edge maximizer other than x itself may signal a sup beyond the grid
        if gi == 0 != ctx.ix and self._diverges(logr, -1):
            return math.inf, ctx.y[0]
        if gi == logr.size - 1 != ctx.ix and self._diverges(logr, +1):
            return math.inf, ctx.y[-1]
        return self._polish(c, ctx, gi, lo, hi, best)

    def _profile(self, c: float, ctx: _Context) -> tuple[float, float, float, float]:
        logr = self._log_ratio(c, ctx)
        L, aL = self._side_sup(c, ctx, logr, "left")
        R, aR = self._side_sup(c, ctx, logr, "right")
        return L, R, aL, aR

    # ------------------------------------------------------------------
    def _check_x(self, x: float) -> float:
        x = float(x)
        if not (self.grid[0] <= x <= self.grid[-1]):
            raise DomainError(f"x={x:g} outside the solver grid [{self.grid[0]:g}, {self.grid[-1]:g}]")
        return x

    def sup_ratio(self, c: float, x: float, side: str = "both") -> RatioProfile:
        """Suprema of ``g/h_c`` on either side of ``x``."""
        ctx = _Context(self, self._check_x(x))
        L, R, aL, aR = self._profile(float(c), ctx)
        if side == "left":
            R, aR = math.nan, math.nan
        elif side == "right":
            L, aL = math.nan, math.nan
        return RatioProfile(float(c), ctx.x, math.exp(L), math.exp(R), aL, aR)

    def _c_transform(self):
        if self.c_range is not None:
            return (lambda c: c), (lambda t: t)
        if self._log_c:
            return math.log, math.exp
        return (lambda c: c), (lambda t: t)

    def _bracket(self, delta) -> tuple[float, float]:
        to_t, from_t = self._c_transform()
        if self.c_range is not None:
            lo_c, hi_c = self.c_range
            span = hi_c - lo_c
            lo_c, hi_c = lo_c + 1e-9 * span, hi_c - 1e-9 * span
            if not (delta(lo_c) > 0 and delta(hi_c) <= 0):
                raise BisectionFailure(
                    f"Delta(c) does not change sign on the tabulated range [{lo_c:g}, {hi_c:g}]"
                )
            return to_t(lo_c), to_t(hi_c)
        t_lo, t_hi = to_t(self.grid[0]), to_t(self.grid[-1])
        width = t_hi - t_lo
        for k in range(60):
            if delta(from_t(t_lo)) > 0:
                break
            t_lo -= width * 2.0**k
        else:
            raise BisectionFailure("Delta(c) stays nonpositive as c decreases")
        for k in range(60):
            if delta(from_t(t_hi)) <= 0:
                break
            t_hi += width * 2.0**k
        else:
            raise BisectionFailure("Delta(c) stays positive as c increases")
        return t_lo, t_hi

    def value_at(self, x: float) -> ValuePoint:
        """Value ``v(x)`` with the minimizing merge point and level."""
        x = self._check_x(x)
        ctx = _Context(self, x)
        fam = self.family
        if np.all(ctx.logg == -math.inf):
            return ValuePoint(x, 0.0, math.nan, 0.0, 0, math.nan, math.nan, 0.0)

        # Case 1: decreasing limit, global sup reached on {y <= x}
        L, R, aL, aR = self._profile(fam.upper, ctx)
        if L >= R and math.isfinite(L):
            return self._point(x, fam.upper, L, R, aL, aR, 1)
        # Case 2: increasing limit, global sup reached on {y >= x}
        L, R, aL, aR = self._profile(fam.lower, ctx)
        if R >= L and math.isfinite(R):
            return self._point(x, fam.lower, L, R, aL, aR, 2)

        # Case 3
        to_t, from_t = self._c_transform()
        cache: dict[float, tuple] = {}

        def delta(c: float) -> float:
            prof = self._profile(c, ctx)
            cache[c] = prof
            L, R = prof[0], prof[1]
            if L == R:
                return 0.0
            return float(np.clip(L - R, -_BIG, _BIG))

        try:
            t_lo, t_hi = self._bracket(delta)
        except BisectionFailure:
            # a side whose sup diverges for every c tried means no member dominates g
            if cache and (all(p[1] == math.inf for p in cache.values()) or all(p[0] == math.inf for p in cache.values())):
                raise UnboundedValue(f"g/h_c is unbounded for every merge point tried at x={x:g}") from None
            raise
        t_star = brentq(lambda t: delta(from_t(t)), t_lo, t_hi, xtol=1e-14, rtol=1e-14, maxiter=400)
        c_star = self._smallest_root(delta, from_t, t_lo, t_star)
        L, R, aL, aR = cache.get(c_star) or self._profile(c_star, ctx)
        if not (math.isfinite(L) and math.isfinite(R)):
            raise UnboundedValue(f"no finite majorant in the family at x={x:g}")
        if self.c_range is not None:
            lo_c, hi_c = self.c_range
            if min(c_star - lo_c, hi_c - c_star) < 0.01 * (hi_c - lo_c):
                warnings.warn(f"minimizing merge point {c_star:g} is close to the tabulated range edge")
        return self._point(x, c_star, L, R, aL, aR, 3)

    @staticmethod
    def _smallest_root(delta, from_t, t_lo: float, t_root: float) -> float:
        """Left end of the zero set of ``Delta`` when it is flat around the root found."""
        step = 1e-7 * max(1.0, abs(t_root))
        if t_root - step <= t_lo or delta(from_t(t_root - step)) > 0:
            return from_t(t_root)
        hi = t_root - step
        lo = t_lo
        while hi - lo > 1e-13 * max(1.0, abs(hi)):
            mid = 0.5 * (lo + hi)
            if delta(from_t(mid)) > 0:
                lo = mid
            else:
                hi = mid
        return from_t(hi)

    def _point(self, x, c, L, R, aL, aR, case) -> ValuePoint:
        lam_log = max(L, R)
        if not math.isfinite(lam_log):
            raise UnboundedValue(f"value is infinite at x={x:g}")
        v = math.exp(lam_log + float(self.family.log_h(c, x)))
        residual = abs(math.expm1(L - R)) if case == 3 else 0.0
        return ValuePoint(x, v, float(c), math.exp(lam_log), case, aL, aR, residual)

    # ------------------------------------------------------------------
    def worst_case_prior(self, x: float, point: ValuePoint | None = None) -> DriftSelector:
        """Drift selector of the worst-case measure ``P_{c*}`` for start point ``x``."""
        point = point or self.value_at(x)
        k = self.problem.kappa
        c = point.c_star
        if c <= self.family.lower:
            return constant_theta(-k, k)
        if c >= self.family.upper:
            return constant_theta(k, k)
        return merge_point(c, k)

    def in_stopping_set(self, point: ValuePoint) -> bool:
        g = float(self.problem.reward(point.x))
        return point.v <= g * (1.0 + self.value_tol)

    def solve(self, xs=None, worst_case_at=()) -> ValueSolution:
        xs = self.grid if xs is None else np.asarray(xs, dtype=float)
        points = [self.value_at(x) for x in xs]
        g = np.asarray(self.problem.reward(xs), dtype=float)
        stop = np.array([self.in_stopping_set(p) for p in points])
        intervals = _assemble_intervals(xs, stop, points, self.problem.diffusion)
        worst = {float(x): self.worst_case_prior(x) for x in worst_case_at}
        return ValueSolution(
            grid=xs,
            g=g,
            v=np.array([p.v for p in points]),
            c_star=np.array([p.c_star for p in points]),
            lambda_star=np.array([p.lambda_star for p in points]),
            stopping_set=intervals,
            worst_case=worst,
        )

    def stopping_set(self, xs=None) -> list[tuple[float, float]]:
        return self.solve(xs).stopping_set


def _assemble_intervals(xs, stop, points, diffusion) -> list[tuple[float, float]]:
    """Closed intervals from runs of stopping nodes.

    Interior endpoints are refined to the maximizer reported by the adjacent
    continuation node (on that node's side facing the stopping run); runs
    touching the grid ends are extended to the state-interval boundary.
    """
    out = []
    n = len(xs)
    i = 0
    while i < n:
        if not stop[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and stop[j + 1]:
            j += 1
        if i == 0:
            lo = diffusion.a
        else:
            cand = points[i - 1].argmax_right
            lo = cand if xs[i - 1] < cand <= xs[i] else xs[i]
        if j == n - 1:
            hi = diffusion.b
        else:
            cand = points[j + 1].argmax_left
            hi = cand if xs[j] <= cand < xs[j + 1] else xs[j]
        out.append((float(lo), float(hi)))
        i = j + 1
    return out


def solve_problem(problem: AmbiguityProblem, settings: SolverSettings | None = None, xs=None) -> ValueSolution:
    return MajorantSolver(problem, settings).solve(xs)


def value_at(problem: AmbiguityProblem, x: float, settings: SolverSettings | None = None):
    """``(v, c_star, lambda_star)`` at ``x``."""
    p = MajorantSolver(problem, settings).value_at(x)
    return p.v, p.c_star, p.lambda_star


def worst_case_prior(problem: AmbiguityProblem, x: float, settings: SolverSettings | None = None) -> DriftSelector:
    return MajorantSolver(problem, settings).worst_case_prior(x)


def sup_ratio(problem: AmbiguityProblem, c: float, x: float, side: str = "both", settings=None) -> RatioProfile:
    return MajorantSolver(problem, settings).sup_ratio(c, x, side)
