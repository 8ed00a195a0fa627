# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled lattice and Monte Carlo kernels; see ``_fallback`` for the reference semantics."""
from libc.math cimport exp, sqrt, fabs, INFINITY

import numpy as np

# crossing probabilities below exp(-40) are treated as zero
cdef double BRIDGE_CUTOFF = 40.0


def lattice_backward(double[:, ::1] V, const double[:, ::1] lower, const double[:, ::1] upper,
                     const double[:, :, ::1] probs, double disc, Py_ssize_t n_steps, double stop_tol=0.0):
    cdef Py_ssize_t B = V.shape[0], n = V.shape[1], K = probs.shape[0]
    cdef Py_ssize_t step, b, j, k, done = n_steps
    cdef double best, e, c, change, cur
    cdef double[::1] row_old = np.empty(n)
    if n < 3:
        return n_steps
    with nogil:
        for step in range(n_steps):
            change = 0.0
            for b in range(B):
                for j in range(n):
                    row_old[j] = V[b, j]
                for j in range(1, n - 1):
                    best = INFINITY
                    for k in range(K):
                        e = probs[k, j, 0] * row_old[j - 1] + probs[k, j, 1] * row_old[j] + probs[k, j, 2] * row_old[j + 1]
                        if e < best:
                            best = e
                    c = disc * best
                    if c > upper[b, j]:
                        c = upper[b, j]
                    if c < lower[b, j]:
                        c = lower[b, j]
                    cur = fabs(c - row_old[j])
                    if cur > change:
                        change = cur
                    V[b, j] = c
            if stop_tol > 0 and change <= stop_tol:
                done = step + 1
                break
    return done


def mc_exit_chunk(double[::1] x, double[::1] tau, signed char[::1] status,
                  const double[:, ::1] normals, const double[:, ::1] uniforms,
                  double t0, double dt, double sigma, const double[::1] breaks, const double[::1] drifts,
                  double lo, double hi):
    cdef Py_ssize_t n = x.shape[0], m = normals.shape[1], nb = breaks.shape[0]
    cdef Py_ssize_t i, k, q
    cdef double sq = sigma * sqrt(dt), s2dt = sigma * sigma * dt
    cdef double xa, x1, mu, u, p_hi, p_lo, a_hi, a_lo
    cdef Py_ssize_t alive = 0
    with nogil:
        for i in range(n):
            if status[i] != 0:
                continue
            xa = x[i]
            for k in range(m):
                q = 0
                while q < nb and breaks[q] <= xa:
                    q += 1
                mu = drifts[q]
                x1 = xa + mu * dt + sq * normals[i, k]
                u = uniforms[i, k]
                if x1 >= hi:
                    status[i] = 2
                elif x1 <= lo:
                    status[i] = 1
                else:
                    a_hi = 2.0 * (hi - xa) * (hi - x1) / s2dt
                    a_lo = 2.0 * (xa - lo) * (x1 - lo) / s2dt
                    p_hi = exp(-a_hi) if a_hi < BRIDGE_CUTOFF else 0.0
                    p_lo = exp(-a_lo) if a_lo < BRIDGE_CUTOFF else 0.0
                    if u < p_hi:
                        status[i] = 2
                    elif u > 1.0 - p_lo:
                        status[i] = 1
                if status[i] != 0:
                    xa = hi if status[i] == 2 else lo
                    tau[i] = t0 + (k + 1) * dt
                    break
                xa = x1
            x[i] = xa
            if status[i] == 0:
                alive += 1
    return alive
