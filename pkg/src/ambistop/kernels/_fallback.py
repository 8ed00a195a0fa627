"""Pure numpy versions of the hot loops.

Arithmetic is ordered exactly as in the compiled kernels so that both
backends agree to the last bit on platforms without fused multiply-add.
"""
from __future__ import annotations

import math

import numpy as np

# crossing probabilities below exp(-40) are treated as zero
BRIDGE_CUTOFF = 40.0


def lattice_backward(V, lower, upper, probs, disc, n_steps, stop_tol=0.0):
    """Backward induction on a fixed spatial lattice, in place.

    Parameters
    ----------
    V : (B, n) array
        Terminal values on entry, values after ``n_steps`` on exit.  The two
        edge columns are absorbing and never updated.
    lower, upper : (B, n) arrays
        Node update is ``max(lower, min(upper, disc * min_k E_k[V]))``.
    probs : (K, n, 3) array
        Down, middle and up probabilities for each of ``K`` drift branches.
    disc : float
        One-step discount factor.
    n_steps : int
        Maximum number of steps.
    stop_tol : float
        Stop early once the largest change in one step is at most this.

    Returns
    -------
    int
        Number of steps performed.
    """
    pd = probs[:, 1:-1, 0][:, None, :]
    pm = probs[:, 1:-1, 1][:, None, :]
    pu = probs[:, 1:-1, 2][:, None, :]
    lo = lower[:, 1:-1]
    up = upper[:, 1:-1]
    for step in range(n_steps):
        e = pd * V[None, :, :-2] + pm * V[None, :, 1:-1] + pu * V[None, :, 2:]
        cont = disc * e.min(axis=0)
        new = np.maximum(lo, np.minimum(up, cont))
        change = float(np.max(np.abs(new - V[:, 1:-1]))) if new.size else 0.0
        V[:, 1:-1] = new
        if stop_tol > 0 and change <= stop_tol:
            return step + 1
    return n_steps


def mc_exit_chunk(x, tau, status, normals, uniforms, t0, dt, sigma, breaks, drifts, lo, hi):
    """Advance Euler paths by ``normals.shape[1]`` steps, detecting exits from ``(lo, hi)``.

    Drift is piecewise constant, ``drifts[searchsorted(breaks, x, 'right')]``.
    A step that stays inside still exits with the Brownian-bridge crossing
    probability; ``u < p_hi`` selects the upper level and ``u > 1 - p_lo`` the
    lower one.  Exited paths are placed on the level they crossed, get
    ``status`` 1 (lower) or 2 (upper) and exit time ``tau``.  Returns the
    number of paths still alive.
    """
    sq = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    alive = np.flatnonzero(status == 0)
    m = normals.shape[1]
    for k in range(m):
        if alive.size == 0:
            break
        xa = x[alive]
        mu = drifts[np.searchsorted(breaks, xa, side="right")]
        x1 = xa + mu * dt + sq * normals[alive, k]
        u = uniforms[alive, k]
        up = x1 >= hi
        dn = ~up & (x1 <= lo)
        inside = ~(up | dn)
        with np.errstate(invalid="ignore", over="ignore"):
            a_hi = 2.0 * (hi - xa) * (hi - x1) / s2dt
            a_lo = 2.0 * (xa - lo) * (x1 - lo) / s2dt
            p_hi = np.where(a_hi < BRIDGE_CUTOFF, np.exp(-np.minimum(a_hi, BRIDGE_CUTOFF)), 0.0)
            p_lo = np.where(a_lo < BRIDGE_CUTOFF, np.exp(-np.minimum(a_lo, BRIDGE_CUTOFF)), 0.0)
        bh = inside & (u < p_hi)
        bl = inside & ~bh & (u > 1.0 - p_lo)
        up |= bh
        dn |= bl
        x1 = np.where(up, hi, np.where(dn, lo, x1))
        x[alive] = x1
        done = up | dn
        if done.any():
            idx = alive[done]
            status[idx] = np.where(up[done], 2, 1).astype(status.dtype)
            tau[idx] = t0 + (k + 1) * dt
            alive = alive[~done]
    return int(alive.size)
