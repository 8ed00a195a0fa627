"""Closed-form merged r-harmonic functions for Brownian motion with drift.

For ``dX = mu dt + sigma dW`` and ambiguity radius ``kappa`` the exponents
``alpha1 < 0 < alpha2`` solve ``sigma^2/2 z^2 + (mu - kappa) z - r = 0`` and
``beta1 < 0 < beta2`` solve the same equation with ``mu + kappa``.  The merged
function ``h_c`` uses the alpha pair strictly above ``c`` and the beta pair at
and below ``c``; it equals one at ``c``, has zero slope there and is C^2.

Everything is evaluated in log space: ``h_c`` grows exponentially and the
majorant search only ever needs ratios ``g / h_c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def quadratic_roots(sigma: float, drift: float, r: float) -> tuple[float, float]:
    """Roots ``(z_minus, z_plus)`` of ``sigma^2/2 z^2 + drift z - r = 0``.

    Since ``r > 0`` the product of the roots is negative, so ``z_minus < 0 < z_plus``.
    The larger-magnitude root is taken from the quadratic formula and the other
    from the product of roots, which avoids cancellation.
    """
    if sigma <= 0 or r <= 0:
        raise ValueError("need sigma > 0 and r > 0")
    A = 0.5 * sigma * sigma
    sq = math.sqrt(drift * drift + 4.0 * A * r)
    if drift >= 0:
        z_minus = (-drift - sq) / (2.0 * A)
        z_plus = (-r / A) / z_minus
    else:
        z_plus = (-drift + sq) / (2.0 * A)
        z_minus = (-r / A) / z_plus
    return z_minus, z_plus


@dataclass(frozen=True)
class ExponentPair:
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float

    @classmethod
    def from_params(cls, mu: float, sigma: float, kappa: float, r: float) -> "ExponentPair":
        a1, a2 = quadratic_roots(sigma, mu - kappa, r)
        b1, b2 = quadratic_roots(sigma, mu + kappa, r)
        return cls(a1, a2, b1, b2)


def _branch_log(x, c: float, z1: float, z2: float) -> np.ndarray:
    # log(w1 e^{z1 t} + w2 e^{z2 t}), w1 = z2/(z2-z1), w2 = -z1/(z2-z1), t = x - c
    t = np.asarray(x, dtype=float) - c
    return np.logaddexp(math.log(z2 / (z2 - z1)) + z1 * t, math.log(-z1 / (z2 - z1)) + z2 * t)


def _branch_moment(x, c: float, z1: float, z2: float, order: int) -> np.ndarray:
    # h^{(order)} / h on one branch, via softmax weights of the two exponentials
    t = np.asarray(x, dtype=float) - c
    l1 = math.log(z2 / (z2 - z1)) + z1 * t
    l2 = math.log(-z1 / (z2 - z1)) + z2 * t
    p1 = np.exp(l1 - np.logaddexp(l1, l2))
    return p1 * z1**order + (1.0 - p1) * z2**order


@dataclass(frozen=True)
class ClosedFormHc:
    """``h_c`` for a merge point ``c`` in ``[-inf, inf]``.

    ``c = +inf`` gives ``exp(beta1 x)`` (decreasing) and ``c = -inf`` gives
    ``exp(alpha2 x)`` (increasing).
    """

    exponents: ExponentPair
    c: float

    def log_value(self, x) -> np.ndarray:
        e, c = self.exponents, self.c
        x = np.asarray(x, dtype=float)
        if c == math.inf:
            return e.beta1 * x
        if c == -math.inf:
            return e.alpha2 * x
        above = _branch_log(x, c, e.alpha1, e.alpha2)
        below = _branch_log(x, c, e.beta1, e.beta2)
        return np.where(x > c, above, below)

    def __call__(self, x):
        out = np.exp(self.log_value(x))
        return float(out) if out.ndim == 0 else out

    def _ratio(self, x, order: int, side: str | None) -> np.ndarray:
        """``h^{(order)}(x) / h(x)``; ``side`` forces one branch."""
        e, c = self.exponents, self.c
        x = np.asarray(x, dtype=float)
        if c == math.inf:
            return np.full_like(x, e.beta1**order)
        if c == -math.inf:
            return np.full_like(x, e.alpha2**order)
        above = _branch_moment(x, c, e.alpha1, e.alpha2, order)
        below = _branch_moment(x, c, e.beta1, e.beta2, order)
        if side == "right":
            return above
        if side == "left":
            return below
        return np.where(x > c, above, below)

    def dlog(self, x, side: str | None = None) -> np.ndarray:
        """Logarithmic derivative ``h'/h``."""
        return self._ratio(x, 1, side)

    def derivative(self, x, order: int = 1, side: str | None = None):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        e, c = self.exponents, self.c
        x = np.asarray(x, dtype=float)
        if side is None:
            logv = self.log_value(x)
        else:
            z = (e.alpha1, e.alpha2) if side == "right" else (e.beta1, e.beta2)
            logv = _branch_log(x, c, *z)
        out = self._ratio(x, order, side) * np.exp(logv)
        return float(out) if out.ndim == 0 else out


def make_hc(exponents: ExponentPair, c: float) -> ClosedFormHc:
    return ClosedFormHc(exponents, float(c))


def hc_derivative(h: ClosedFormHc, x, order: int = 1, side: str | None = None):
    """Analytic derivative of the active branch; at ``x = c`` both branches agree."""
    return h.derivative(x, order, side)


class BMFamily:
    """The two-parameter family ``{h_c}`` for arithmetic Brownian motion.

    With ``log_coords=True`` the family is instead used for geometric Brownian
    motion without ambiguity: the harmonic functions are powers ``x**z`` and
    become exponentials in ``s = log x``.
    """

    analytic = True

    def __init__(self, exponents: ExponentPair, log_coords: bool = False):
        self.exponents = exponents
        self.log_coords = log_coords
        self.lower, self.upper = (0.0, math.inf) if log_coords else (-math.inf, math.inf)

    @classmethod
    def for_problem(cls, problem) -> "BMFamily":
        d = problem.diffusion
        if d.family == "ArithmeticBM":
            return cls(ExponentPair.from_params(d.mu_param, d.sigma_param, problem.kappa, problem.r))
        if d.family == "GeometricBM" and problem.kappa == 0:
            s = d.sigma_param
            return cls(ExponentPair.from_params(d.mu_param - 0.5 * s * s, s, 0.0, problem.r), log_coords=True)
        raise ValueError("closed form only available for ArithmeticBM, or GeometricBM with kappa = 0")

    def _hc(self, c: float) -> ClosedFormHc:
        if self.log_coords:
            c = -math.inf if c <= 0 else math.log(c)
        return ClosedFormHc(self.exponents, c)

    def _s(self, y):
        y = np.asarray(y, dtype=float)
        return np.log(y) if self.log_coords else y

    def log_h(self, c: float, y) -> np.ndarray:
        return self._hc(c).log_value(self._s(y))

    def dlog_h(self, c: float, y) -> np.ndarray:
        d = self._hc(c).dlog(self._s(y))
        return d / np.asarray(y, dtype=float) if self.log_coords else d

    def hc(self, c: float) -> ClosedFormHc:
        return self._hc(c)
