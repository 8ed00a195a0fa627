"""Stopping with one observable crash of bounded height.

The holder picks a pre-crash and a post-crash stopping rule, the market
picks the crash time.  After a crash the problem is an ordinary stopping
problem for ``c Y`` with value ``g_hat``; before it, holder and market play a
Dynkin game with stopper payoff ``g`` and crash payoff ``g_hat`` where a
simultaneous stop and crash goes to the stopper.

For geometric Brownian motion with a call reward everything is explicit:
``g_hat(y) = d (c y)**gamma`` below ``x*/c`` and ``c y - K`` above, and the
game value is ``g_hat`` below the crossing point ``x'`` of ``g`` and ``g_hat``
and ``g`` above it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .bm_harmonic import quadratic_roots
from .errors import BracketError, StructureError, UnboundedValue
from .majorant import MajorantSolver
from .model import AmbiguityProblem, CrashProblem, SolverSettings

SCAN_POINTS = 257


def _is_gbm_call(problem: CrashProblem) -> bool:
    return problem.diffusion.family == "GeometricBM" and problem.reward.family == "Call" and problem.reward.arg_scale == 1.0


@dataclass(frozen=True)
class CallStoppingValue:
    """Perpetual call value ``sup E[e^{-r tau} (Z_tau - K)^+]`` for a GBM ``Z``."""

    gamma_exp: float
    x_star: float
    d_coef: float
    K: float

    @classmethod
    def from_params(cls, mu: float, sigma: float, r: float, K: float) -> "CallStoppingValue":
        if mu >= r:
            raise UnboundedValue(f"call value is infinite for mu={mu:g} >= r={r:g}")
        _, gamma = quadratic_roots(sigma, mu - 0.5 * sigma * sigma, r)
        x_star = gamma * K / (gamma - 1.0)
        d = (x_star - K) / x_star**gamma
        return cls(gamma, x_star, d, K)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z >= self.x_star, z - self.K, self.d_coef * np.power(np.maximum(z, 0.0), self.gamma_exp))
        return float(out) if out.ndim == 0 else out


class PostCrashValue:
    """``g_hat(y)``, the ordinary stopping value for ``c Y`` with reward ``g``."""

    def __init__(self, problem: CrashProblem, settings: SolverSettings | None = None):
        self.problem = problem
        c = problem.crash_factor
        if _is_gbm_call(problem):
            d = problem.diffusion
            self.closed_form = CallStoppingValue.from_params(d.mu_param, d.sigma_param, problem.r, problem.reward.K)
            self._solver = None
        else:
            self.closed_form = None
            scaled = AmbiguityProblem(problem.diffusion, 0.0, problem.r, problem.reward.scaled(c))
            self._solver = MajorantSolver(scaled, settings)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.closed_form is not None:
            out = self.closed_form(self.problem.crash_factor * y)
        else:
            out = np.array([self._solver.value_at(t).v for t in np.atleast_1d(y)]).reshape(y.shape)
        return float(out) if np.ndim(out) == 0 else out


def post_crash_value(problem: CrashProblem, settings: SolverSettings | None = None) -> PostCrashValue:
    return PostCrashValue(problem, settings)


def pre_crash_threshold(gamma_exp: float, x_star: float, d_coef: float, problem: CrashProblem) -> float:
    """Unique root of ``d (c x)**gamma = x - K`` in ``(K, x*/c)``."""
    c, K = problem.crash_factor, problem.reward.K

    def f(x):
        return d_coef * (c * x) ** gamma_exp - (x - K)

    lo, hi = K, x_star / c
    if not f(lo) * f(hi) < 0:
        raise BracketError(f"no sign change of d(cx)^gamma - (x-K) on ({lo:g}, {hi:g})")
    return bisect(f, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=500)


@dataclass(frozen=True)
class DynkinGame:
    """Pre-crash game on ``Y``: the stopper receives ``lower``, a crash pays ``upper``.

    ``crossing`` is the unique point with ``lower <= upper`` to its left and
    ``lower >= upper`` to its right, or ``None`` when no single crossing exists.
    """

    lower: Callable
    upper: Callable
    diffusion: object
    r: float
    crossing: float | None


def _single_crossing(lower, upper, grid) -> float | None:
    diff = np.asarray(lower(grid), dtype=float) - np.asarray(upper(grid), dtype=float)
    sign = np.sign(diff)
    nz = np.flatnonzero(sign != 0)
    if nz.size == 0:
        return None
    s = sign[nz]
    flips = np.flatnonzero(s[1:] != s[:-1])
    if flips.size != 1 or s[0] > 0:
        return None
    i, j = nz[flips[0]], nz[flips[0] + 1]
    return float(bisect(lambda t: float(lower(t)) - float(upper(t)), grid[i], grid[j], xtol=1e-13))


def _scan_grid(solver: MajorantSolver, n: int = SCAN_POINTS) -> np.ndarray:
    """Coarse grid for sign scans; every point costs one majorant solve."""
    lo, hi = solver.grid[0], solver.grid[-1]
    grid = np.geomspace(lo, hi, n) if lo > 0 else np.linspace(lo, hi, n)
    kinks = [p for p in solver.problem.reward.breakpoints() if lo < p < hi]
    return np.union1d(grid, kinks)


def reduce_to_game(problem: CrashProblem, g_hat: PostCrashValue | None = None, grid=None) -> DynkinGame:
    g_hat = g_hat or post_crash_value(problem)
    if g_hat.closed_form is not None:
        cf = g_hat.closed_form
        x_prime = pre_crash_threshold(cf.gamma_exp, cf.x_star, cf.d_coef, problem)
    else:
        if grid is None:
            grid = _scan_grid(g_hat._solver)
        x_prime = _single_crossing(problem.reward, g_hat, np.asarray(grid, dtype=float))
    return DynkinGame(problem.reward, g_hat, problem.diffusion, problem.r, x_prime)


@dataclass(frozen=True)
class CrashSolution:
    """Equilibrium of the crash model.

    ``value`` is ``g_hat`` below the pre-crash threshold ``x_prime`` (a crash
    can come at any time before the holder stops) and ``g`` from ``x_prime`` on.
    The closed-form fields are ``nan`` for inputs solved numerically.
    """

    gamma_exp: float
    x_star: float
    d_coef: float
    x_prime: float
    crash_factor: float
    g: Callable
    g_hat: Callable

    @property
    def pre_crash_threshold(self) -> float:
        return self.x_prime

    @property
    def post_crash_threshold(self) -> float:
        """Stopping level for the post-crash price ``c Y``."""
        return self.x_star

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.x_prime, self.g(x), self.g_hat(x))
        return float(out) if out.ndim == 0 else out


def solve_crash(problem: CrashProblem, settings: SolverSettings | None = None) -> CrashSolution:
    g_hat = post_crash_value(problem, settings)
    game = reduce_to_game(problem, g_hat)
    cf = g_hat.closed_form
    if cf is not None:
        return CrashSolution(cf.gamma_exp, cf.x_star, cf.d_coef, game.crossing, problem.crash_factor, problem.reward, g_hat)
    if game.crossing is None:
        raise StructureError("g - g_hat has no single sign change; solve the game with the tree oracle")
    _check_harmonic_below(problem, g_hat, game.crossing)
    return CrashSolution(math.nan, math.nan, math.nan, game.crossing, problem.crash_factor, problem.reward, g_hat)


def _check_harmonic_below(problem: CrashProblem, g_hat: PostCrashValue, x_prime: float) -> None:
    """The explicit equilibrium needs ``c Y`` to be in its continuation region below ``x'``."""
    stop = g_hat._solver.stopping_set(_scan_grid(g_hat._solver))
    c = problem.crash_factor
    for lo, hi in stop:
        if lo < x_prime:
            raise StructureError(
                f"post-crash stopping region [{lo:g}, {hi:g}] meets (0, x'={x_prime:g}); "
                f"the explicit equilibrium does not apply (crash factor {c:g})"
            )


def crash_value(problem: CrashProblem, x, settings: SolverSettings | None = None):
    return solve_crash(problem, settings).value(x)
