"""Problem definitions shared by the solvers, the oracles and the CLI.

All types are frozen dataclasses.  Coefficients and rewards are parametric
(rather than arbitrary callables) so that a problem can be written to and
read back from a flat key/value config file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
import yaml

from .errors import DomainError, ParseError, ValidationError

ArrayLike = Union[float, Sequence[float], np.ndarray]

DIFFUSION_FAMILIES = ("ArithmeticBM", "GeometricBM", "Custom")
REWARD_FAMILIES = ("Call", "Put", "Straddle", "StepLinear", "Tabulated")


# ---------------------------------------------------------------------------
# Diffusion coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    """A continuous coefficient function of the state.

    Either a polynomial (``coeffs`` in ascending powers) or a table of
    ``(x, y)`` nodes, interpolated linearly and held constant beyond the ends.
    """

    coeffs: tuple[float, ...] = ()
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if bool(self.coeffs) == bool(self.table):
            raise ValidationError("coefficient needs exactly one of polynomial coefficients or a table")
        if self.table:
            xs = [p[0] for p in self.table]
            if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
                raise ValidationError("coefficient table abscissae must be strictly increasing")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.coeffs:
            return np.polynomial.polynomial.polyval(x, self.coeffs)
        xs, ys = zip(*self.table)
        return np.interp(x, xs, ys)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.coeffs:
            return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.coeffs))
        xs, ys = (np.array(v) for v in zip(*self.table))
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        inside = (x > xs[0]) & (x < xs[-1])
        return np.where(inside, slopes[idx], 0.0)

    def to_config(self):
        if self.coeffs:
            return list(self.coeffs) if len(self.coeffs) > 1 else self.coeffs[0]
        return [list(p) for p in self.table]

    @classmethod
    def from_config(cls, value) -> "Coefficient":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return cls(coeffs=(float(value),))
        if isinstance(value, list) and value:
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                return cls(coeffs=tuple(float(v) for v in value))
            if all(isinstance(v, list) and len(v) == 2 for v in value):
                return cls(table=tuple((float(a), float(b)) for a, b in value))
        raise ParseError(f"cannot interpret coefficient value {value!r}")


@dataclass(frozen=True)
class DiffusionSpec:
    """A regular one-dimensional diffusion ``dX = mu(X) dt + sigma(X) dW`` on ``(a, b)``.

    For ``ArithmeticBM`` the coefficients are constants; for ``GeometricBM``
    they are ``mu*x`` and ``sigma*x`` on ``(0, inf)``.  Both endpoints are
    treated as natural boundaries.
    """

    family: str
    mu: Coefficient
    sigma: Coefficient
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if self.family not in DIFFUSION_FAMILIES:
            raise ValidationError(f"unknown diffusion family {self.family!r}")
        if not self.a < self.b:
            raise ValidationError("interval must satisfy a < b")
        if self.family == "ArithmeticBM":
            if len(self.mu.coeffs) != 1 or len(self.sigma.coeffs) != 1:
                raise ValidationError("ArithmeticBM needs constant mu and sigma")
            if self.sigma.coeffs[0] <= 0:
                raise ValidationError("sigma must be positive")
        elif self.family == "GeometricBM":
            if self.mu.coeffs[:1] != (0.0,) or self.sigma.coeffs[:1] != (0.0,):
                raise ValidationError("GeometricBM coefficients must be proportional to x")
            if self.sigma.coeffs[1] <= 0:
                raise ValidationError("sigma must be positive")
            if self.a != 0.0 or self.b != math.inf:
                raise ValidationError("GeometricBM lives on (0, inf)")
        else:
            probe = _interior_probe(self.a, self.b)
            if self.sigma.table:
                probe = np.concatenate([probe, [x for x, _ in self.sigma.table if self.a < x < self.b]])
            if np.any(self.sigma(probe) <= 0):
                raise ValidationError("sigma must be positive on the state interval")

    @property
    def mu_param(self) -> float:
        """Scalar drift parameter of the ABM/GBM families."""
        return self.mu.coeffs[0] if self.family == "ArithmeticBM" else self.mu.coeffs[1]

    @property
    def sigma_param(self) -> float:
        return self.sigma.coeffs[0] if self.family == "ArithmeticBM" else self.sigma.coeffs[1]

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.a) & (x < self.b)


def _interior_probe(a: float, b: float, n: int = 513) -> np.ndarray:
    lo = a if math.isfinite(a) else (min(b, 0.0) - 50.0 if math.isfinite(b) else -50.0)
    hi = b if math.isfinite(b) else max(lo, 0.0) + 50.0
    return np.linspace(lo, hi, n + 2)[1:-1]


def arithmetic_bm(mu: float = 0.0, sigma: float = 1.0) -> DiffusionSpec:
    return DiffusionSpec("ArithmeticBM", Coefficient((float(mu),)), Coefficient((float(sigma),)))


def geometric_bm(mu: float = 0.0, sigma: float = 1.0) -> DiffusionSpec:
    return DiffusionSpec(
        "GeometricBM", Coefficient((0.0, float(mu))), Coefficient((0.0, float(sigma))), 0.0, math.inf
    )


def custom_diffusion(mu: Coefficient, sigma: Coefficient, a: float = -math.inf, b: float = math.inf) -> DiffusionSpec:
    return DiffusionSpec("Custom", mu, sigma, float(a), float(b))


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewardFunction:
    """Nonnegative, piecewise linear reward ``x -> g(arg_scale * x)``.

    ``StepLinear`` is ``1`` for ``x <= 0`` and ``x`` for ``x > 0``; it is
    discontinuous at zero.  ``Straddle`` is ``|x - K|``.
    """

    family: str
    K: float = 0.0
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    arg_scale: float = 1.0

    def __post_init__(self):
        if self.family not in REWARD_FAMILIES:
            raise ValidationError(f"unknown reward family {self.family!r}")
        if self.arg_scale <= 0:
            raise ValidationError("reward argument scale must be positive")
        if self.family == "Tabulated":
            if len(self.xs) < 2 or len(self.xs) != len(self.ys):
                raise ValidationError("tabulated reward needs matching x and y lists of length >= 2")
            if any(x1 <= x0 for x0, x1 in zip(self.xs, self.xs[1:])):
                raise ValidationError("tabulated reward abscissae must be strictly increasing")
            if min(self.ys) < 0:
                raise ValidationError("reward must be nonnegative")

    # raw (unscaled) reward ------------------------------------------------
    def _raw(self, z: np.ndarray) -> np.ndarray:
        f = self.family
        if f == "Call":
            return np.maximum(z - self.K, 0.0)
        if f == "Put":
            return np.maximum(self.K - z, 0.0)
        if f == "Straddle":
            return np.abs(z - self.K)
        if f == "StepLinear":
            return np.where(z <= 0.0, 1.0, z)
        if np.any((z < self.xs[0]) | (z > self.xs[-1])):
            raise DomainError("tabulated reward evaluated outside its table")
        return np.interp(z, self.xs, self.ys)

    def _raw_slope(self, z: np.ndarray, right: bool) -> np.ndarray:
        f = self.family
        above = (lambda u, k: u >= k) if right else (lambda u, k: u > k)
        if f == "Call":
            return np.where(above(z, self.K), 1.0, 0.0)
        if f == "Put":
            return np.where(above(z, self.K), 0.0, -1.0)
        if f == "Straddle":
            return np.where(above(z, self.K), 1.0, -1.0)
        if f == "StepLinear":
            return np.where(above(z, 0.0), 1.0, 0.0)
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.searchsorted(xs, z, side="right" if right else "left") - 1
        return slopes[np.clip(idx, 0, len(slopes) - 1)]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._raw(self.arg_scale * x)
        return float(out) if out.ndim == 0 else out

    def slope(self, x, side: str = "right"):
        """One-sided derivative of the reward."""
        x = np.asarray(x, dtype=float)
        out = self.arg_scale * self._raw_slope(self.arg_scale * x, side == "right")
        return float(out) if out.ndim == 0 else out

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the reward is not differentiable (kinks and jumps)."""
        if self.family in ("Call", "Put", "Straddle"):
            pts = (self.K,)
        elif self.family == "StepLinear":
            pts = (0.0,)
        else:
            pts = self.xs
        return tuple(p / self.arg_scale for p in pts)

    def discontinuities(self) -> tuple[float, ...]:
        return (0.0,) if self.family == "StepLinear" else ()

    def scaled(self, factor: float) -> "RewardFunction":
        """Reward ``x -> g(factor * x)``."""
        return replace(self, arg_scale=self.arg_scale * factor)

    def is_nondecreasing(self) -> bool:
        if self.family in ("Call",):
            return True
        if self.family == "Tabulated":
            return all(y1 >= y0 for y0, y1 in zip(self.ys, self.ys[1:]))
        return False


def eval_reward(reward: RewardFunction, x, diffusion: DiffusionSpec | None = None):
    """Evaluate ``reward`` pointwise, rejecting states outside the diffusion's interval."""
    if diffusion is not None and not np.all(diffusion.contains(x)):
        raise DomainError(f"state {x!r} outside ({diffusion.a}, {diffusion.b})")
    return reward(x)


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSelector:
    """State-feedback drift adjustment ``theta(x)`` with ``|theta| <= kappa``.

    ``merge`` with point ``c`` is the selector of the measure ``P_c``: ``+kappa``
    strictly below ``c`` and ``-kappa`` at and above ``c``.  ``piecewise`` holds
    half-open pieces ``[lo, hi)``; outside every piece the adjustment is zero.
    """

    kind: str
    kappa: float
    c: float = math.nan
    theta: float = 0.0
    pieces: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("merge", "constant", "piecewise"):
            raise ValidationError(f"unknown selector kind {self.kind!r}")
        if self.kappa < 0:
            raise ValidationError("kappa must be nonnegative")
        thetas = [self.theta] + [p[2] for p in self.pieces]
        if any(abs(t) > self.kappa * (1 + 1e-12) for t in thetas):
            raise ValidationError("drift adjustment exceeds kappa")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "merge":
            out = np.where(x < self.c, self.kappa, -self.kappa)
        elif self.kind == "constant":
            out = np.full_like(x, self.theta)
        else:
            out = np.zeros_like(x)
            for lo, hi, t in self.pieces:
                out = np.where((x >= lo) & (x < hi), t, out)
        return float(out) if out.ndim == 0 else out

    def piecewise_constant(self) -> tuple[np.ndarray, np.ndarray]:
        """Right-continuous step representation ``(breaks, values)``.

        ``values[k]`` holds on ``[breaks[k-1], breaks[k])`` with
        ``len(values) == len(breaks) + 1``.
        """
        if self.kind == "merge" and math.isfinite(self.c):
            breaks = np.array([self.c])
        elif self.kind == "piecewise":
            edges = {e for lo, hi, _ in self.pieces for e in (lo, hi) if math.isfinite(e)}
            breaks = np.array(sorted(edges))
        else:
            breaks = np.array([])
        if breaks.size == 0:
            return breaks, np.array([float(self(0.0))])
        probes = np.concatenate([[breaks[0] - 1.0], breaks])
        return breaks, np.asarray(self(probes), dtype=float)

    def describe(self) -> str:
        if self.kappa == 0:
            return "no drift adjustment (kappa = 0)"
        if self.kind == "merge":
            return f"drift +{self.kappa:g} on (-inf, {self.c:.12g}), -{self.kappa:g} on [{self.c:.12g}, inf)"
        if self.kind == "constant":
            return f"constant drift adjustment {self.theta:+g}"
        return "piecewise drift adjustment " + ", ".join(f"[{lo:g},{hi:g}):{t:+g}" for lo, hi, t in self.pieces)


def merge_point(c: float, kappa: float) -> DriftSelector:
    return DriftSelector("merge", float(kappa), c=float(c))


def constant_theta(theta: float, kappa: float) -> DriftSelector:
    return DriftSelector("constant", float(kappa), theta=float(theta))


def piecewise_theta(pieces, kappa: float) -> DriftSelector:
    return DriftSelector("piecewise", float(kappa), pieces=tuple((float(a), float(b), float(t)) for a, b, t in pieces))


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmbiguityProblem:
    diffusion: DiffusionSpec
    kappa: float
    r: float
    reward: RewardFunction

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValidationError("kappa must be nonnegative")
        if not self.r > 0:
            raise ValidationError("r must be positive")


@dataclass(frozen=True)
class CrashProblem:
    diffusion: DiffusionSpec
    r: float
    reward: RewardFunction
    crash_factor: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError("r must be positive")
        if not 0 < self.crash_factor < 1:
            raise ValidationError("crash factor must lie in (0, 1)")
        if not self.reward.is_nondecreasing():
            raise ValidationError("crash model needs a non-decreasing reward")


@dataclass(frozen=True)
class SolverSettings:
    grid_n: int = 2001
    tol: float = 1e-8
    x_min: float | None = None
    x_max: float | None = None
    path: str = "auto"

    def __post_init__(self):
        if self.grid_n < 16:
            raise ValidationError("grid_n must be at least 16")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.path not in ("auto", "analytic", "ode"):
            raise ValidationError("solver.path must be auto, analytic or ode")
        if self.x_min is not None and self.x_max is not None and not self.x_min < self.x_max:
            raise ValidationError("solver.x_min must be below solver.x_max")


@dataclass
class ValueSolution:
    """Value function on a grid together with the minimizing ``(c, lambda)`` per point."""

    grid: np.ndarray
    g: np.ndarray
    v: np.ndarray
    c_star: np.ndarray
    lambda_star: np.ndarray
    stopping_set: list[tuple[float, float]]
    worst_case: dict[float, DriftSelector] = field(default_factory=dict)

    @property
    def in_stopping_set(self) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=bool)
        for lo, hi in self.stopping_set:
            out |= (self.grid >= lo) & (self.grid <= hi)
        return out


# ---------------------------------------------------------------------------
# Config ingestion
# ---------------------------------------------------------------------------

CONFIG_KEYS = (
    "problem.kind",
    "diffusion.family",
    "diffusion.mu",
    "diffusion.sigma",
    "diffusion.a",
    "diffusion.b",
    "ambiguity.kappa",
    "discount.r",
    "reward.family",
    "reward.K",
    "reward.x",
    "reward.y",
    "crash.factor",
    "solver.grid_n",
    "solver.tol",
    "solver.x_min",
    "solver.x_max",
    "solver.path",
)


@dataclass(frozen=True)
class Config:
    problem: Union[AmbiguityProblem, CrashProblem]
    solver: SolverSettings = SolverSettings()


def parse_config(text: str) -> dict:
    """Parse flat ``key: value`` text into a dict, rejecting unknown keys."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed config: {exc}".replace("\n", " ")) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError("config must be a flat mapping of key: value lines")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(map(str, unknown))}")
    return data


def _number(data: dict, key: str, default=None) -> float:
    if key not in data:
        if default is None:
            raise ParseError(f"missing config key {key}")
        return default
    value = data[key]
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot (1e-9) as strings
        try:
            return float(value)
        except ValueError:
            raise ParseError(f"{key} must be numeric, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{key} must be numeric, got {value!r}")
    return float(value)


def config_from_mapping(data: dict) -> Config:
    kind = data.get("problem.kind", "ambiguity")
    if kind not in ("ambiguity", "crash"):
        raise ParseError(f"problem.kind must be ambiguity or crash, got {kind!r}")
    family = data.get("diffusion.family")
    if family is None:
        raise ParseError("missing config key diffusion.family")
    if family == "ArithmeticBM":
        mu, sigma = _number(data, "diffusion.mu", 0.0), _number(data, "diffusion.sigma")
        if sigma <= 0:
            raise ValidationError("sigma must be positive")
        diffusion = arithmetic_bm(mu, sigma)
    elif family == "GeometricBM":
        mu, sigma = _number(data, "diffusion.mu", 0.0), _number(data, "diffusion.sigma")
        if sigma <= 0:
            raise ValidationError("sigma must be positive")
        diffusion = geometric_bm(mu, sigma)
    elif family == "Custom":
        for key in ("diffusion.mu", "diffusion.sigma"):
            if key not in data:
                raise ParseError(f"missing config key {key}")
        diffusion = custom_diffusion(
            Coefficient.from_config(data["diffusion.mu"]),
            Coefficient.from_config(data["diffusion.sigma"]),
            _number(data, "diffusion.a", -math.inf),
            _number(data, "diffusion.b", math.inf),
        )
    else:
        raise ValidationError(f"unknown diffusion family {family!r}")

    rfam = data.get("reward.family")
    if rfam is None:
        raise ParseError("missing config key reward.family")
    if rfam == "Tabulated":
        xs, ys = data.get("reward.x"), data.get("reward.y")
        if not isinstance(xs, list) or not isinstance(ys, list):
            raise ParseError("Tabulated reward needs reward.x and reward.y lists")
        reward = RewardFunction("Tabulated", xs=tuple(map(float, xs)), ys=tuple(map(float, ys)))
    elif rfam in ("Call", "Put"):
        reward = RewardFunction(rfam, K=_number(data, "reward.K"))
    else:
        reward = RewardFunction(rfam, K=_number(data, "reward.K", 0.0))

    r = _number(data, "discount.r")
    if kind == "ambiguity":
        problem = AmbiguityProblem(diffusion, _number(data, "ambiguity.kappa", 0.0), r, reward)
    else:
        problem = CrashProblem(diffusion, r, reward, _number(data, "crash.factor"))

    solver = SolverSettings(
        grid_n=int(_number(data, "solver.grid_n", SolverSettings.grid_n)),
        tol=_number(data, "solver.tol", SolverSettings.tol),
        x_min=_number(data, "solver.x_min") if "solver.x_min" in data else None,
        x_max=_number(data, "solver.x_max") if "solver.x_max" in data else None,
        path=str(data.get("solver.path", "auto")),
    )
    return Config(problem, solver)


def load_config(text: str, overrides: dict | None = None) -> Config:
    data = parse_config(text)
    if overrides:
        unknown = sorted(set(overrides) - set(CONFIG_KEYS))
        if unknown:
            raise ParseError(f"unknown override keys: {', '.join(unknown)}")
        data.update(overrides)
    return config_from_mapping(data)


def load_problem(text: str) -> Union[AmbiguityProblem, CrashProblem]:
    """Parse config text into a validated problem object."""
    return load_config(text).problem


def config_to_mapping(config: Config) -> dict:
    p = config.problem
    d = p.diffusion
    out: dict = {"problem.kind": "ambiguity" if isinstance(p, AmbiguityProblem) else "crash"}
    out["diffusion.family"] = d.family
    if d.family == "Custom":
        out["diffusion.mu"] = d.mu.to_config()
        out["diffusion.sigma"] = d.sigma.to_config()
        for key, val in (("diffusion.a", d.a), ("diffusion.b", d.b)):
            out[key] = val if math.isfinite(val) else ("inf" if val > 0 else "-inf")
    else:
        out["diffusion.mu"] = d.mu_param
        out["diffusion.sigma"] = d.sigma_param
    if isinstance(p, AmbiguityProblem):
        out["ambiguity.kappa"] = p.kappa
    out["discount.r"] = p.r
    out["reward.family"] = p.reward.family
    if p.reward.family == "Tabulated":
        out["reward.x"] = list(p.reward.xs)
        out["reward.y"] = list(p.reward.ys)
    elif p.reward.family != "StepLinear":
        out["reward.K"] = p.reward.K
    if isinstance(p, CrashProblem):
        out["crash.factor"] = p.crash_factor
    s = config.solver
    out["solver.grid_n"] = s.grid_n
    out["solver.tol"] = s.tol
    if s.x_min is not None:
        out["solver.x_min"] = s.x_min
    if s.x_max is not None:
        out["solver.x_max"] = s.x_max
    out["solver.path"] = s.path
    return out


def dump_config(config: Config) -> str:
    return yaml.safe_dump(config_to_mapping(config), sort_keys=False, default_flow_style=None)
