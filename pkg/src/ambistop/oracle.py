"""Brute-force references: lattice backward induction and Monte Carlo.

None of this uses the harmonic functions or the majorant construction, so
agreement with the analytic solvers is a genuine cross-check.

Lattice
    A fixed grid ``s_j = s0 + j h`` (``s`` is the state, or its logarithm for
    geometric Brownian motion) with trinomial moves and probabilities
    ``p_up/dn = (sigma^2 dt / h^2 +- m dt / h) / 2``.  Drift ambiguity enters
    as ``m = mu +- kappa``; since the one-step expectation is affine in the
    drift, the minimum over ``[-kappa, kappa]`` sits at an endpoint.  The
    edge nodes are absorbing at their terminal value.

Monte Carlo
    Euler steps with a Brownian-bridge crossing correction, for constant
    volatility (in log coordinates for geometric Brownian motion) and a
    piecewise constant drift.  Seeds are spawned per block of paths.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import HorizonWarning, ValidationError
from .model import AmbiguityProblem, CrashProblem, DiffusionSpec, DriftSelector

DEFAULT_HORIZON_TOL = 1e-6


def horizon_steps(r: float, dt: float, tol: float = DEFAULT_HORIZON_TOL) -> int:
    """Smallest step count with ``exp(-r n dt) < tol``."""
    return int(math.ceil(-math.log(tol) / (r * dt))) + 1


# ---------------------------------------------------------------------------
# Lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeSpec:
    """Recombining lattice on ``[lo, hi]`` in state units with ``x0`` on a node.

    For geometric Brownian motion (``log_space``) the lattice is uniform in
    ``log x`` and ``space_step`` is a log increment.
    """

    dt: float
    n_steps: int
    x0: float
    space_step: float
    lo: float
    hi: float
    log_space: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.space_step > 0 and self.n_steps >= 1):
            raise ValidationError("tree needs dt > 0, space_step > 0, n_steps >= 1")
        if not self.lo < self.x0 < self.hi:
            raise ValidationError("tree start must lie strictly inside the truncation bounds")

    def _coord(self, x):
        return np.log(x) if self.log_space else np.asarray(x, dtype=float)

    @property
    def coords(self) -> np.ndarray:
        s0, slo, shi = (float(self._coord(v)) for v in (self.x0, self.lo, self.hi))
        h = self.space_step
        j_lo = -int(math.floor((s0 - slo) / h + 1e-12))
        j_hi = int(math.floor((shi - s0) / h + 1e-12))
        return s0 + h * np.arange(j_lo, j_hi + 1)

    @property
    def nodes(self) -> np.ndarray:
        s = self.coords
        return np.exp(s) if self.log_space else s

    @property
    def root(self) -> int:
        s = self.coords
        return int(np.argmin(np.abs(s - float(self._coord(self.x0)))))


def _local_coefficients(diffusion: DiffusionSpec, tree: TreeSpec):
    if tree.log_space:
        if diffusion.family != "GeometricBM":
            raise ValidationError("log-space lattice needs a geometric Brownian motion")
        s = diffusion.sigma_param
        n = tree.coords.size
        return np.full(n, diffusion.mu_param - 0.5 * s * s), np.full(n, s)
    x = tree.nodes
    return np.asarray(diffusion.mu(x), dtype=float) * np.ones_like(x), np.asarray(diffusion.sigma(x), dtype=float) * np.ones_like(x)


def make_tree(
    diffusion: DiffusionSpec,
    r: float,
    x0: float,
    dt: float,
    lo: float,
    hi: float,
    n_steps: int | None = None,
    tol: float = DEFAULT_HORIZON_TOL,
) -> TreeSpec:
    """Lattice with the smallest admissible space step ``max sigma * sqrt(dt)``."""
    log_space = diffusion.family == "GeometricBM"
    if log_space:
        h = diffusion.sigma_param * math.sqrt(dt)
    else:
        probe = np.linspace(lo, hi, 257)
        h = float(np.max(np.asarray(diffusion.sigma(probe)) * np.ones_like(probe))) * math.sqrt(dt)
    n = n_steps if n_steps is not None else horizon_steps(r, dt, tol)
    return TreeSpec(dt, n, x0, h, lo, hi, log_space)


def transition_probs(diffusion: DiffusionSpec, tree: TreeSpec, thetas) -> np.ndarray:
    """``(K, n, 3)`` down/middle/up probabilities for each drift adjustment in ``thetas``."""
    mu, sig = _local_coefficients(diffusion, tree)
    dt, h = tree.dt, tree.space_step
    a = sig * sig * dt / (h * h)
    out = []
    for th in thetas:
        b = (mu + th) * dt / h
        p = np.stack([0.5 * (a - b), 1.0 - a, 0.5 * (a + b)], axis=-1)
        if np.any(p < -1e-14) or np.any(p > 1 + 1e-14):
            raise ValidationError(
                f"transition probabilities leave [0, 1] for drift adjustment {th:g}; reduce dt or kappa"
            )
        out.append(np.clip(p, 0.0, 1.0))
    return np.ascontiguousarray(np.stack(out))


@dataclass
class TreeResult:
    """Root value plus per-node values and actions of a lattice computation."""

    value: float
    nodes: np.ndarray
    values: np.ndarray
    stop: np.ndarray
    worst_theta: np.ndarray | None
    steps: int
    horizon_residual: float


def _run(V, lower, upper, probs, disc, n_steps, stop_tol, backend):
    mod = kernels if backend is None else kernels.get_backend(backend)
    V = np.ascontiguousarray(V, dtype=float)
    steps = mod.lattice_backward(
        V,
        np.ascontiguousarray(lower, dtype=float),
        np.ascontiguousarray(upper, dtype=float),
        probs,
        float(disc),
        int(n_steps),
        float(stop_tol),
    )
    return V, int(steps)


def _check_horizon(tree: TreeSpec, r: float, terminal: np.ndarray, value: float, tol: float, steps: int) -> float:
    scale = float(np.max(np.abs(terminal)))
    resid = math.exp(-r * tree.dt * steps) * scale
    if resid > tol * max(1.0, scale):
        warnings.warn(f"discounted terminal value {resid:.3g} not negligible at the horizon", HorizonWarning)
    return resid


def robust_snell(
    tree: TreeSpec,
    problem: AmbiguityProblem,
    backend: str | None = None,
    tol: float = DEFAULT_HORIZON_TOL,
) -> TreeResult:
    """Discrete robust Snell envelope ``V = max(g, e^{-r dt} min_theta E_theta V')``."""
    k = problem.kappa
    thetas = (-k, k) if k > 0 else (0.0,)
    probs = transition_probs(problem.diffusion, tree, thetas)
    x = tree.nodes
    g = np.asarray(problem.reward(x), dtype=float)
    disc = math.exp(-problem.r * tree.dt)
    V, steps = _run(g[None, :].copy(), g[None, :], np.full((1, x.size), np.inf), probs, disc, tree.n_steps, 0.0, backend)
    V = V[0]
    e = probs[:, 1:-1, 0] * V[:-2] + probs[:, 1:-1, 1] * V[1:-1] + probs[:, 1:-1, 2] * V[2:]
    worst = np.full(x.size, np.nan)
    worst[1:-1] = np.asarray(thetas)[np.argmin(e, axis=0)]
    cont = np.full(x.size, -np.inf)
    cont[1:-1] = disc * e.min(axis=0)
    stop = g >= cont
    value = float(V[tree.root])
    resid = _check_horizon(tree, problem.r, g, value, tol, steps)
    return TreeResult(value, x, V, stop, worst, steps, resid)


def dynkin_backward(
    tree: TreeSpec,
    lower: Callable | np.ndarray,
    upper: Callable | np.ndarray,
    r: float,
    diffusion: DiffusionSpec,
    backend: str | None = None,
    tol: float = DEFAULT_HORIZON_TOL,
) -> TreeResult:
    """Dynkin game ``V = max(g, min(g_hat, e^{-r dt} E V'))`` with stopper priority on ties.

    ``stop`` marks nodes where the stopper takes ``g``.
    """
    x = tree.nodes
    g = np.asarray(lower(x) if callable(lower) else lower, dtype=float)
    gh = np.asarray(upper(x) if callable(upper) else upper, dtype=float)
    probs = transition_probs(diffusion, tree, (0.0,))
    disc = math.exp(-r * tree.dt)
    V, steps = _run(g[None, :].copy(), g[None, :], gh[None, :], probs, disc, tree.n_steps, 0.0, backend)
    V = V[0]
    value = float(V[tree.root])
    resid = _check_horizon(tree, r, g, value, tol, steps)
    return TreeResult(value, x, V, V <= g, None, steps, resid)


def evaluate_policies(
    tree: TreeSpec,
    diffusion: DiffusionSpec,
    r: float,
    fixed: np.ndarray,
    fixed_values: np.ndarray,
    terminal: np.ndarray,
    n_steps: int | None = None,
    stop_tol: float = 0.0,
    backend: str | None = None,
) -> tuple[np.ndarray, int]:
    """Values of ``B`` fixed Markov policies.

    ``fixed`` is a ``(B, n)`` mask of nodes where the policy ends with payoff
    ``fixed_values``; elsewhere the value is the discounted expectation.
    """
    fixed = np.asarray(fixed, dtype=bool)
    lower = np.where(fixed, fixed_values, -np.inf)
    upper = np.where(fixed, fixed_values, np.inf)
    probs = transition_probs(diffusion, tree, (0.0,))
    V0 = np.where(fixed, fixed_values, terminal)
    return _run(V0, lower, upper, probs, math.exp(-r * tree.dt), n_steps or tree.n_steps, stop_tol, backend)


def matrix_game_saddle(g, g_hat, cont) -> tuple[np.ndarray, np.ndarray]:
    """Maximin and minimax of the one-step stop/crash game in pure strategies.

    Rows are the stopper's actions (stop, continue), columns the adversary's
    (crash, wait); the stopper wins simultaneous stop and crash.
    """
    g, g_hat, cont = (np.asarray(a, dtype=float) for a in (g, g_hat, cont))
    m = np.stack([np.stack([g, g], -1), np.stack([g_hat, cont], -1)], -2)  # (..., row, col)
    maximin = m.min(axis=-1).max(axis=-1)
    minimax = m.max(axis=-2).min(axis=-1)
    return maximin, minimax


# ---------------------------------------------------------------------------
# Crash model on the lattice
# ---------------------------------------------------------------------------


def tree_post_crash_value(tree: TreeSpec, problem: CrashProblem, backend: str | None = None, tol: float = 1e-13) -> np.ndarray:
    """``g_hat`` on the lattice nodes: Snell envelope of ``y -> g(c y)``, iterated to stationarity."""
    x = tree.nodes
    gc = np.asarray(problem.reward(problem.crash_factor * x), dtype=float)
    probs = transition_probs(problem.diffusion, tree, (0.0,))
    n = horizon_steps(problem.r, tree.dt, tol * 1e-3) * 4
    V, _ = _run(gc[None, :].copy(), gc[None, :], np.full((1, x.size), np.inf), probs, math.exp(-problem.r * tree.dt), n, tol, backend)
    return V[0]


def crash_dynkin_tree(tree: TreeSpec, problem: CrashProblem, backend: str | None = None) -> TreeResult:
    """Reduced game on the lattice with a lattice-computed ``g_hat``."""
    gh = tree_post_crash_value(tree, problem, backend)
    return dynkin_backward(tree, problem.reward, gh, problem.r, problem.diffusion, backend)


@dataclass
class CrashStrategyResult:
    value: float
    pre: float
    post: float
    pre_grid: np.ndarray
    post_grid: np.ndarray
    crash_grid: np.ndarray
    payoffs: np.ndarray  # (pre, post, crash) values at the root


def _reaches(x, level):
    # thresholds are usually lattice nodes; allow for rounding in how they were formed
    slack = np.where(np.isfinite(level), 1e-12 * np.abs(level), 0.0)
    return x >= level - slack


def crash_sup_inf_tree(
    tree: TreeSpec,
    problem: CrashProblem,
    pre_grid,
    post_grid,
    crash_grid,
    backend: str | None = None,
) -> CrashStrategyResult:
    """Sup over threshold pairs (pre, post) of the inf over crash thresholds.

    The holder stops before a crash once ``Y >= pre``; after a crash the price
    is ``c Y`` and the holder stops once ``c Y >= post``.  The market crashes once
    ``Y >= s`` (``s = -inf`` crashes at once, ``s = inf`` never).  A stop and
    a crash at the same node go to the holder.
    """
    x = tree.nodes
    c = problem.crash_factor
    g = np.asarray(problem.reward(x), dtype=float)
    gc = np.asarray(problem.reward(c * x), dtype=float)
    pre_grid, post_grid, crash_grid = (np.asarray(a, dtype=float) for a in (pre_grid, post_grid, crash_grid))

    post_stop = _reaches(c * x[None, :], post_grid[:, None])
    n_post = horizon_steps(problem.r, tree.dt, 1e-16) * 4
    W, _ = evaluate_policies(
        tree, problem.diffusion, problem.r, post_stop, np.broadcast_to(gc, post_stop.shape), np.zeros(post_stop.shape),
        n_steps=n_post, stop_tol=1e-15, backend=backend,
    )

    A, P, S = np.meshgrid(np.arange(pre_grid.size), np.arange(post_grid.size), np.arange(crash_grid.size), indexing="ij")
    A, P, S = A.ravel(), P.ravel(), S.ravel()
    stop = _reaches(x[None, :], pre_grid[A][:, None])
    crash = _reaches(x[None, :], crash_grid[S][:, None]) & ~stop
    fixed = stop | crash
    vals = np.where(stop, g[None, :], np.where(crash, W[P], 0.0))
    V, _ = evaluate_policies(tree, problem.diffusion, problem.r, fixed, vals, np.broadcast_to(g, fixed.shape), backend=backend)
    pay = V[:, tree.root].reshape(pre_grid.size, post_grid.size, crash_grid.size)
    worst = pay.min(axis=2)
    ia, ip = np.unravel_index(int(np.argmax(worst)), worst.shape)
    return CrashStrategyResult(float(worst[ia, ip]), float(pre_grid[ia]), float(post_grid[ip]), pre_grid, post_grid, crash_grid, pay)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExitRule:
    """Stop at the first exit from the open interval ``(lower, upper)``."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValidationError("exit rule needs lower < upper")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int


@dataclass
class ExitSample:
    """Per-path outcome: ``status`` 0 (no exit before the horizon), 1 lower, 2 upper."""

    status: np.ndarray
    level: np.ndarray
    tau: np.ndarray


_BLOCK = 8192
_CHUNK = 256


def _mc_coordinates(diffusion: DiffusionSpec, prior: DriftSelector | None, rule: ExitRule, x0: float):
    if diffusion.family == "ArithmeticBM":
        breaks, vals = prior.piecewise_constant() if prior is not None else (np.array([]), np.array([0.0]))
        return x0, diffusion.sigma_param, breaks, diffusion.mu_param + vals, rule.lower, rule.upper, lambda s: s
    if diffusion.family == "GeometricBM":
        if prior is not None and prior.kappa > 0:
            raise ValidationError("drift ambiguity for geometric Brownian motion is not supported")
        s = diffusion.sigma_param
        lo = math.log(rule.lower) if rule.lower > 0 else -math.inf
        hi = math.log(rule.upper) if math.isfinite(rule.upper) else math.inf
        return math.log(x0), s, np.array([]), np.array([diffusion.mu_param - 0.5 * s * s]), lo, hi, np.exp
    raise ValidationError("Monte Carlo supports arithmetic and geometric Brownian motion")


def simulate_exits(
    diffusion: DiffusionSpec,
    prior: DriftSelector | None,
    rule: ExitRule,
    x0: float,
    n_paths: int,
    seed: int,
    dt: float,
    horizon: float,
    antithetic: bool = False,
    backend: str | None = None,
) -> ExitSample:
    """Exit outcomes of ``n_paths`` Euler paths started at ``x0``."""
    if seed is None:
        raise ValidationError("a seed is required")
    mod = kernels if backend is None else kernels.get_backend(backend)
    s0, sigma, breaks, drifts, lo, hi, to_state = _mc_coordinates(diffusion, prior, rule, x0)
    breaks = np.ascontiguousarray(breaks, dtype=float)
    drifts = np.ascontiguousarray(drifts, dtype=float)
    status = np.zeros(n_paths, dtype=np.int8)
    level = np.full(n_paths, np.nan)
    tau = np.full(n_paths, np.inf)
    if not lo < s0 < hi:
        status[:] = 1 if s0 <= lo else 2
        level[:] = x0
        tau[:] = 0.0
        return ExitSample(status, level, tau)
    n_steps = int(math.ceil(horizon / dt))
    blocks = [(i, min(i + _BLOCK, n_paths)) for i in range(0, n_paths, _BLOCK)]
    children = np.random.SeedSequence(seed).spawn(len(blocks))
    for (a, b), child in zip(blocks, children):
        rng = np.random.Generator(np.random.PCG64(child))
        nb = b - a
        x = np.full(nb, s0)
        st = np.zeros(nb, dtype=np.int8)
        tb = np.full(nb, np.inf)
        idx = np.arange(nb)
        done_steps = 0
        while idx.size and done_steps < n_steps:
            m = min(_CHUNK, n_steps - done_steps)
            if antithetic:
                half = (idx.size + 1) // 2
                z = rng.standard_normal((half, m))
                u = rng.random((half, m))
                z = np.concatenate([z, -z])[: idx.size]
                u = np.concatenate([u, 1.0 - u])[: idx.size]
            else:
                z = rng.standard_normal((idx.size, m))
                u = rng.random((idx.size, m))
            xs, ss, ts = x[idx].copy(), st[idx].copy(), tb[idx].copy()
            mod.mc_exit_chunk(xs, ts, ss, z, u, done_steps * dt, dt, sigma, breaks, drifts, lo, hi)
            x[idx], st[idx], tb[idx] = xs, ss, ts
            idx = idx[ss == 0]
            done_steps += m
        status[a:b] = st
        tau[a:b] = tb
        exited = st > 0
        level[a:b][exited] = to_state(np.where(st[exited] == 2, hi, lo))
    return ExitSample(status, level, tau)


def _estimate(samples: np.ndarray, seed: int) -> McEstimate:
    n = samples.size
    return McEstimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n)), n, int(seed))


def mc_under_prior(
    problem: AmbiguityProblem,
    prior: DriftSelector | None,
    strategy: ExitRule,
    n_paths: int,
    seed: int,
    x0: float,
    dt: float = 1e-4,
    tol: float = DEFAULT_HORIZON_TOL,
    payoff: Callable | None = None,
    antithetic: bool = False,
    backend: str | None = None,
) -> McEstimate:
    """Estimate ``E^prior[e^{-r tau} payoff(X_tau)]`` for the exit time of ``strategy``.

    ``payoff`` defaults to the reward.  Paths that have not exited by the
    horizon ``T`` with ``exp(-r T) = tol`` contribute zero.
    """
    horizon = -math.log(tol) / problem.r
    sample = simulate_exits(problem.diffusion, prior, strategy, x0, n_paths, seed, dt, horizon, antithetic, backend)
    f = payoff or problem.reward
    out = np.zeros(n_paths)
    ex = sample.status > 0
    out[ex] = np.exp(-problem.r * sample.tau[ex]) * np.asarray(f(sample.level[ex]), dtype=float)
    return _estimate(out, seed)


def mc_crash(
    problem: CrashProblem,
    pre: float,
    post: float,
    crash_at: float,
    x0: float,
    n_paths: int,
    seed: int,
    dt: float = 1e-3,
    tol: float = 1e-5,
    backend: str | None = None,
) -> McEstimate:
    """Payoff of threshold strategies in the crash model.

    The holder stops before a crash once ``Y >= pre`` and after it once
    ``c Y >= post``; the market crashes once ``Y >= crash_at``.  Both stages
    are simulated path by path with independent streams.
    """
    c = problem.crash_factor
    g = problem.reward
    horizon = -math.log(tol) / problem.r
    ss = np.random.SeedSequence(seed).spawn(2)
    s1, s2 = (int(s.generate_state(1)[0]) for s in ss)
    first = min(pre, crash_at)
    stage1 = None
    if first > x0:
        stage1 = simulate_exits(problem.diffusion, None, ExitRule(0.0, first), x0, n_paths, s1, dt, horizon, backend=backend)
    if stage1 is None:
        t1 = np.zeros(n_paths)
        y1 = np.full(n_paths, x0)
        alive = np.ones(n_paths, dtype=bool)
    else:
        alive = stage1.status == 2
        t1 = stage1.tau
        y1 = stage1.level
    out = np.zeros(n_paths)
    if pre <= crash_at:
        out[alive] = np.exp(-problem.r * t1[alive]) * np.asarray(g(y1[alive]), dtype=float)
        return _estimate(out, seed)
    # crash happened at y1; continue with c Y until c Y >= post
    start = float(y1[alive][0]) if alive.any() else x0
    if c * start >= post:
        out[alive] = np.exp(-problem.r * t1[alive]) * float(g(c * start))
        return _estimate(out, seed)
    stage2 = simulate_exits(problem.diffusion, None, ExitRule(0.0, post / c), start, n_paths, s2, dt, horizon, backend=backend)
    hit = alive & (stage2.status == 2)
    out[hit] = np.exp(-problem.r * (t1[hit] + stage2.tau[hit])) * np.asarray(g(c * stage2.level[hit]), dtype=float)
    return _estimate(out, seed)
