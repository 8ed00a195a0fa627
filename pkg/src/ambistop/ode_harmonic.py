"""Numerical fundamental solutions and merged functions ``h_c`` for general diffusions.

The increasing/decreasing positive solutions of
``sigma^2/2 psi'' + (mu +- kappa) psi' = r psi`` are tabulated through the
Riccati variable ``u = psi'/psi``::

    u' = 2 (r - (mu +- kappa) u) / sigma^2 - u^2,     (log psi)' = u

The increasing solution is an attracting trajectory when integrating upward,
the decreasing one when integrating downward, so each table is integrated in
its stable direction from a run-in point outside the truncation interval.
The run-in is lengthened until two different initial values agree at the
truncation edge, i.e. until the initial condition has been forgotten.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .bm_harmonic import quadratic_roots
from .errors import DomainError, NonNaturalBoundary, SingularWronskian, StiffnessError, TruncationError
from .model import Coefficient, DiffusionSpec

INCREASING = "increasing"
DECREASING = "decreasing"


def _scalar(coef: Coefficient):
    """Fast scalar evaluator for the ODE right-hand side."""
    if coef.coeffs:
        cs = coef.coeffs[::-1]

        def f(x: float) -> float:
            acc = 0.0
            for a in cs:
                acc = acc * x + a
            return acc

        return f
    xs, ys = (np.array(v) for v in zip(*coef.table))
    return lambda x: float(np.interp(x, xs, ys))


def check_natural_boundaries(diffusion: DiffusionSpec, kappa: float) -> None:
    """Reject finite endpoints that are not natural for every prior in the set.

    With polynomial or piecewise linear coefficients a finite endpoint ``e`` is
    natural when both coefficients vanish there and no drift shift is applied;
    otherwise the endpoint is regular, exit or entrance.
    """
    for e in (diffusion.a, diffusion.b):
        if not math.isfinite(e):
            continue
        s, m = float(diffusion.sigma(e)), float(diffusion.mu(e))
        if abs(s) > 1e-12 or abs(m) > 1e-12 or kappa > 0:
            raise NonNaturalBoundary(
                f"endpoint {e:g} is not natural (sigma={s:g}, mu={m:g}, kappa={kappa:g}); "
                "only natural boundaries are supported"
            )


@dataclass(frozen=True)
class FundamentalSolution:
    """Tabulated ``log psi`` and ``u = psi'/psi`` on an increasing grid.

    ``log_psi`` is normalized to zero at the middle grid node.  Between nodes both
    quantities are interpolated by cubic Hermite splines using the exact
    derivatives (``u`` for ``log psi`` and the Riccati right-hand side for ``u``).
    """

    direction: str
    drift_shift: float
    r: float
    grid: np.ndarray
    log_psi: np.ndarray
    log_psi_prime: np.ndarray
    u_prime: np.ndarray
    _splines: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        log_spline = CubicHermiteSpline(self.grid, self.log_psi, self.log_psi_prime)
        u_spline = CubicHermiteSpline(self.grid, self.log_psi_prime, self.u_prime)
        object.__setattr__(self, "_splines", (log_spline, u_spline))

    @property
    def u(self) -> np.ndarray:
        return self.log_psi_prime

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any((x < lo - slack) | (x > hi + slack)):
            raise DomainError(f"evaluation outside the tabulated range [{lo:g}, {hi:g}]")
        return np.clip(x, lo, hi)

    def log_value(self, x) -> np.ndarray:
        return self._splines[0](self._check(x))

    def dlog(self, x) -> np.ndarray:
        return self._splines[1](self._check(x))

    def dlog_prime(self, x) -> np.ndarray:
        """Derivative of ``u``, from the spline."""
        return self._splines[1](self._check(x), 1)

    def __call__(self, x):
        out = np.exp(self.log_value(x))
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        out = np.exp(self.log_value(x)) * self.dlog(x)
        return float(out) if out.ndim == 0 else out

    def residual(self, diffusion: DiffusionSpec, x=None) -> np.ndarray:
        """``sigma^2/2 (u' + u^2) + (mu +- kappa) u - r`` at ``x`` (default: grid)."""
        x = self.grid if x is None else self._check(x)
        u = self._splines[1](x)
        du = self._splines[1](x, 1)
        s2 = diffusion.sigma(x) ** 2
        return 0.5 * s2 * (du + u * u) + (diffusion.mu(x) + self.drift_shift) * u - self.r


def _make_grid(diffusion: DiffusionSpec, lo: float, hi: float, n: int, spacing: str | None) -> np.ndarray:
    if spacing is None:
        spacing = "log" if math.isfinite(diffusion.a) else "linear"
    if spacing == "log":
        a = diffusion.a
        return a + np.geomspace(lo - a, hi - a, n)
    return np.linspace(lo, hi, n)


def solve_fundamental(
    diffusion: DiffusionSpec,
    drift_shift: float,
    r: float,
    direction: str,
    truncation: tuple[float, float],
    grid_n: int = 2048,
    tol: float = 1e-10,
    spacing: str | None = None,
    forget_tol: float = 1e-8,
    max_extensions: int = 12,
) -> FundamentalSolution:
    """Tabulate the increasing or decreasing fundamental solution on ``truncation``.

    Parameters
    ----------
    drift_shift
        ``+kappa`` or ``-kappa``; added to the diffusion's drift.
    direction
        ``"increasing"`` (integrated upward from below ``truncation[0]``) or
        ``"decreasing"`` (integrated downward from above ``truncation[1]``).
    forget_tol
        Two runs started from different initial values must agree to this
        relative accuracy at the truncation edge.

    Raises
    ------
    TruncationError
        The run-in cannot be made long enough inside the state interval.
    StiffnessError
        The adaptive integrator fails.
    """
    lo, hi = map(float, truncation)
    if not (diffusion.a < lo < hi < diffusion.b):
        raise DomainError("truncation must lie strictly inside the state interval")
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    if direction not in (INCREASING, DECREASING):
        raise ValueError(f"unknown direction {direction!r}")

    mu_f, sig_f = _scalar(diffusion.mu), _scalar(diffusion.sigma)

    def local_root(x: float) -> float:
        zm, zp = quadratic_roots(sig_f(x), mu_f(x) + drift_shift, r)
        return zp if direction == INCREASING else zm

    def rhs(x, y):
        s = sig_f(x)
        m = mu_f(x) + drift_shift
        k = 2.0 / (s * s)
        u0, u1 = y[0], y[1]
        return [k * (r - m * u0) - u0 * u0, k * (r - m * u1) - u1 * u1, u0]

    grid = _make_grid(diffusion, lo, hi, grid_n, spacing)
    upward = direction == INCREASING
    edge = lo if upward else hi
    bound = diffusion.a if upward else diffusion.b
    width = hi - lo

    for k in range(max_extensions):
        if math.isfinite(bound):
            start = bound + (edge - bound) * 0.25 ** (k + 1)
        else:
            run_in = max(1.0, 0.25 * width) * 2.0**k
            start = edge - run_in if upward else edge + run_in
        z0 = local_root(start)
        sol = solve_ivp(
            rhs,
            (start, hi if upward else lo),
            [z0, 2.0 * z0, 0.0],
            method="LSODA",
            t_eval=grid if upward else grid[::-1],
            rtol=tol,
            atol=tol * 1e-2,
        )
        if not sol.success or sol.t.size != grid.size:
            raise StiffnessError(f"Riccati integration failed: {sol.message}")
        # first reported node is the truncation edge
        u_main, u_alt = sol.y[0, 0], sol.y[1, 0]
        if abs(u_main - u_alt) <= forget_tol * max(abs(u_main), 1e-300):
            break
    else:
        raise TruncationError(
            f"fundamental solution did not forget its initial value before {edge:g}; widen the truncation"
        )

    sl = slice(None) if upward else slice(None, None, -1)
    xs, u, L = sol.t[sl], sol.y[0][sl], sol.y[2][sl]
    L = L - L[grid_n // 2]
    s2 = diffusion.sigma(xs) ** 2
    u_prime = 2.0 * (r - (diffusion.mu(xs) + drift_shift) * u) / s2 - u * u
    if upward and np.any(u < 0) or not upward and np.any(u > 0):
        raise StiffnessError("tabulated solution lost monotonicity")
    return FundamentalSolution(direction, float(drift_shift), float(r), xs, L, u, u_prime)


def _pair_weights(plus: FundamentalSolution, minus: FundamentalSolution, c: float):
    up, um = float(plus.dlog(c)), float(minus.dlog(c))
    gap = up - um
    if not gap > 1e-12 * max(abs(up), abs(um), 1.0):
        raise SingularWronskian(f"Wronskian vanishes at c={c:g}")
    # weights of psi_plus(x)/psi_plus(c) and psi_minus(x)/psi_minus(c)
    return -um / gap, up / gap


def gamma_coeffs(tables, c: float) -> tuple[float, float, float, float]:
    """Coefficients ``gamma_1..gamma_4`` of ``h_c`` in terms of the raw tables.

    ``tables`` is ``(psi_plus^{+k}, psi_minus^{+k}, psi_plus^{-k}, psi_minus^{-k})``
    where plus/minus denote the increasing/decreasing solutions.  With
    ``D = psi_plus psi_minus' - psi_minus psi_plus'`` at ``c``:
    ``gamma_1 = psi_minus'(c)/D``, ``gamma_2 = -psi_plus'(c)/D`` (and likewise
    for the ``-kappa`` pair).
    """
    out = []
    for plus, minus in (tables[:2], tables[2:]):
        pp, pm = plus(c), minus(c)
        dp, dm = plus.derivative(c), minus.derivative(c)
        D = pp * dm - pm * dp
        if not abs(D) > 0 or abs(D) <= 1e-12 * abs(pp * dm):
            raise SingularWronskian(f"Wronskian vanishes at c={c:g}")
        out += [dm / D, -dp / D]
    return tuple(out)


@dataclass(frozen=True)
class GeneralHc:
    """Merged function ``h_c`` built from four tabulated fundamental solutions.

    ``kind`` is ``"interior"`` for a finite merge point, ``"lower"`` for the
    increasing limit ``psi_plus^{-kappa}`` and ``"upper"`` for the decreasing
    limit ``psi_minus^{+kappa}``.
    """

    c: float
    kind: str
    tables: tuple
    log_weights: tuple = ()

    @property
    def gammas(self) -> tuple[float, float, float, float]:
        return gamma_coeffs(self.tables, self.c)

    def log_value(self, x) -> np.ndarray:
        pk, mk, pmk, mmk = self.tables
        x = np.asarray(x, dtype=float)
        if self.kind == "lower":
            return pmk.log_value(x)
        if self.kind == "upper":
            return mk.log_value(x)
        w1, w2, w3, w4, c1, c2, c3, c4 = self.log_weights
        xl = np.minimum(x, self.c)
        xr = np.maximum(x, self.c)
        below = np.logaddexp(w1 + pk.log_value(xl) - c1, w2 + mk.log_value(xl) - c2)
        above = np.logaddexp(w3 + pmk.log_value(xr) - c3, w4 + mmk.log_value(xr) - c4)
        return np.where(x <= self.c, below, above)

    def dlog(self, x) -> np.ndarray:
        pk, mk, pmk, mmk = self.tables
        x = np.asarray(x, dtype=float)
        if self.kind == "lower":
            return pmk.dlog(x)
        if self.kind == "upper":
            return mk.dlog(x)
        w1, w2, w3, w4, c1, c2, c3, c4 = self.log_weights
        xl = np.minimum(x, self.c)
        xr = np.maximum(x, self.c)
        l1, l2 = w1 + pk.log_value(xl) - c1, w2 + mk.log_value(xl) - c2
        p = np.exp(l1 - np.logaddexp(l1, l2))
        below = p * pk.dlog(xl) + (1 - p) * mk.dlog(xl)
        l3, l4 = w3 + pmk.log_value(xr) - c3, w4 + mmk.log_value(xr) - c4
        q = np.exp(l3 - np.logaddexp(l3, l4))
        above = q * pmk.dlog(xr) + (1 - q) * mmk.dlog(xr)
        return np.where(x <= self.c, below, above)

    def __call__(self, x):
        out = np.exp(self.log_value(x))
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, x, side: str | None = None):
        """``h''`` from the tabulated ``u`` and ``u'``; ``side`` picks the branch at ``x = c``."""
        pk, mk, pmk, mmk = self.tables
        x = np.asarray(x, dtype=float)
        if self.kind != "interior":
            t = pmk if self.kind == "lower" else mk
            out = np.exp(t.log_value(x)) * (t.dlog_prime(x) + t.dlog(x) ** 2)
            return float(out) if out.ndim == 0 else out
        w1, w2, w3, w4, c1, c2, c3, c4 = self.log_weights

        def branch(ta, tb, wa, wb, ca, cb, z):
            la, lb = wa + ta.log_value(z) - ca, wb + tb.log_value(z) - cb
            lh = np.logaddexp(la, lb)
            p = np.exp(la - lh)
            ka = ta.dlog_prime(z) + ta.dlog(z) ** 2
            kb = tb.dlog_prime(z) + tb.dlog(z) ** 2
            return np.exp(lh) * (p * ka + (1 - p) * kb)

        below = branch(pk, mk, w1, w2, c1, c2, np.minimum(x, self.c))
        above = branch(pmk, mmk, w3, w4, c3, c4, np.maximum(x, self.c))
        use_below = x < self.c if side == "right" else x <= self.c
        out = np.where(use_below, below, above)
        return float(out) if out.ndim == 0 else out


def make_general_hc(tables, c: float, kind: str = "interior") -> GeneralHc:
    if kind != "interior":
        return GeneralHc(float(c), kind, tuple(tables))
    pk, mk, pmk, mmk = tables
    a1, a2 = _pair_weights(pk, mk, c)
    a3, a4 = _pair_weights(pmk, mmk, c)
    lw = (
        math.log(a1), math.log(a2), math.log(a3), math.log(a4),
        float(pk.log_value(c)), float(mk.log_value(c)), float(pmk.log_value(c)), float(mmk.log_value(c)),
    )
    return GeneralHc(float(c), kind, tuple(tables), lw)


def hc_general_eval(h: GeneralHc, x):
    """Evaluate ``h_c`` (raises ``DomainError`` outside the tabulated range)."""
    return h(x)


def default_truncation(diffusion: DiffusionSpec, x_min: float, x_max: float) -> tuple[float, float]:
    """Table range comfortably containing the solver grid ``[x_min, x_max]``."""
    if math.isfinite(diffusion.a):
        a = diffusion.a
        lo = a + (x_min - a) / 4.0
        hi = a + (x_max - a) * 4.0
    else:
        pad = 0.5 * (x_max - x_min) + 2.0
        lo, hi = x_min - pad, x_max + pad
    if math.isfinite(diffusion.b) and hi >= diffusion.b:
        hi = diffusion.b - (diffusion.b - x_max) / 4.0
    return lo, hi


class ODEFamily:
    """The family ``{h_c}`` backed by four tabulated fundamental solutions."""

    analytic = False

    def __init__(self, problem, truncation: tuple[float, float], grid_n: int = 2048, tol: float = 1e-10):
        d, k, r = problem.diffusion, problem.kappa, problem.r
        check_natural_boundaries(d, k)
        self.diffusion = d
        self.r = r
        self.lower, self.upper = d.a, d.b
        build = lambda shift, direction: solve_fundamental(d, shift, r, direction, truncation, grid_n, tol)
        plus_k, minus_k = build(k, INCREASING), build(k, DECREASING)
        if k == 0:
            plus_mk, minus_mk = plus_k, minus_k
        else:
            plus_mk, minus_mk = build(-k, INCREASING), build(-k, DECREASING)
        self.tables = (plus_k, minus_k, plus_mk, minus_mk)
        self.c_range = (float(plus_k.grid[0]), float(plus_k.grid[-1]))

    def hc(self, c: float) -> GeneralHc:
        if c <= self.lower:
            return make_general_hc(self.tables, c, "lower")
        if c >= self.upper:
            return make_general_hc(self.tables, c, "upper")
        return make_general_hc(self.tables, c)

    def log_h(self, c: float, y) -> np.ndarray:
        return self.hc(c).log_value(y)

    def dlog_h(self, c: float, y) -> np.ndarray:
        return self.hc(c).dlog(y)

    def grid_spacing(self) -> float:
        return float(np.max(np.diff(self.tables[0].grid)))
