"""Compiled sequential loops: chain walks and the per-sample update recursions.

Randomness never enters these functions; callers pre-draw uniforms and
sample indices from their own streams and pass them in, which keeps every
run reproducible from its seed alone.
"""

import numpy as np
from numba import njit

DIVERGENCE_NORM = 1e8

CONSTANT, INV_SQRT_T, INV_T = 0, 1, 2


@njit(cache=True)
def walk_chain(cum, start, u):
    """States x_0 = start, x_{k+1} = inverse-CDF of row x_k at u_k."""
    n = u.shape[0]
    out = np.empty(n + 1, dtype=np.int64)
    out[0] = start
    s = start
    last = cum.shape[1] - 1
    for k in range(n):
        j = np.searchsorted(cum[s], u[k], side="right")
        if j > last:
            j = last
        s = j
        out[k + 1] = s
    return out


@njit(cache=True)
def _norm(x):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * x[i]
    return np.sqrt(acc)


@njit(cache=True)
def svrg_inner(phi, gamma, s, s2, anchor, g_anchor, alpha, radius, snap):
    """M variance-reduced steps theta_t = theta_{t-1} + alpha * v_t.

    v_t = g(theta_{t-1}) - g(anchor) + g_anchor for the t-th transition; the
    reward cancels in the first difference. ``radius < 0`` disables the ball
    projection. Returns (theta_M, theta_snap, mean of theta_0..theta_{M-1},
    diverged step or -1, norm at divergence).
    """
    d = anchor.shape[0]
    M = s.shape[0]
    theta = anchor.copy()
    snapshot = anchor.copy()
    avg = np.zeros(d)
    for t in range(1, M + 1):
        for i in range(d):
            avg[i] += theta[i]
        a = s[t - 1]
        b = s2[t - 1]
        coef = 0.0
        for i in range(d):
            coef += (gamma * phi[b, i] - phi[a, i]) * (theta[i] - anchor[i])
        for i in range(d):
            theta[i] += alpha * (coef * phi[a, i] + g_anchor[i])
        nrm = _norm(theta)
        if radius >= 0.0 and nrm > radius:
            scale = radius / nrm
            for i in range(d):
                theta[i] *= scale
        elif nrm > DIVERGENCE_NORM or not np.isfinite(nrm):
            return theta, snapshot, avg / M, t, nrm
        if t == snap:
            snapshot[:] = theta
    return theta, snapshot, avg / M, -1, 0.0


@njit(cache=True)
def td0_loop(phi, gamma, s, s2, r, theta0, alpha, schedule, t_offset, record_every):
    """Plain TD(0); returns the iterate after every ``record_every`` updates."""
    d = theta0.shape[0]
    T = s.shape[0]
    n_rec = T // record_every
    out = np.empty((n_rec, d))
    theta = theta0.copy()
    for t in range(1, T + 1):
        step = t + t_offset
        if schedule == INV_SQRT_T:
            lr = alpha / np.sqrt(step)
        elif schedule == INV_T:
            lr = alpha / step
        else:
            lr = alpha
        a = s[t - 1]
        b = s2[t - 1]
        delta = r[t - 1]
        for i in range(d):
            delta += (gamma * phi[b, i] - phi[a, i]) * theta[i]
        for i in range(d):
            theta[i] += lr * delta * phi[a, i]
        nrm = _norm(theta)
        if nrm > DIVERGENCE_NORM or not np.isfinite(nrm):
            return out, t, nrm
        if t % record_every == 0:
            out[t // record_every - 1, :] = theta
    return out, -1, 0.0


@njit(cache=True)
def gtd2_loop(phi, gamma, s, s2, r, theta0, w0, alpha, beta, record_every):
    """Two-timescale GTD2; both updates read the previous (theta, w)."""
    d = theta0.shape[0]
    T = s.shape[0]
    n_rec = T // record_every
    out = np.empty((n_rec, d))
    theta = theta0.copy()
    w = w0.copy()
    for t in range(1, T + 1):
        a = s[t - 1]
        b = s2[t - 1]
        delta = r[t - 1]
        phi_w = 0.0
        for i in range(d):
            delta += (gamma * phi[b, i] - phi[a, i]) * theta[i]
            phi_w += phi[a, i] * w[i]
        for i in range(d):
            theta[i] += alpha * (phi[a, i] - gamma * phi[b, i]) * phi_w
            w[i] += beta * (delta - phi_w) * phi[a, i]
        nrm = _norm(theta)
        if nrm > DIVERGENCE_NORM or not np.isfinite(nrm):
            return out, t, nrm
        if t % record_every == 0:
            out[t // record_every - 1, :] = theta
    return out, -1, 0.0
