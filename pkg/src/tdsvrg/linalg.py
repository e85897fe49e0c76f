"""Small dense linear algebra: LU solves, Jacobi eigenvalues, stationary laws.

Matrices here are at most a few hundred rows (the feature dimension, or the
state count for stationary distributions), so plain partial-pivot LU and
cyclic Jacobi are adequate and keep results reproducible bit for bit.
"""

import numpy as np
from numba import njit

from .errors import (
    DimensionMismatch,
    NonUniqueStationary,
    NotStochastic,
    NotSymmetric,
    SingularMatrix,
)

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-10
STOCHASTIC_TOL = 1e-10


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def lu_factor(M):
    """Partial-pivot LU of a square matrix.

    Returns ``(lu, perm)`` with unit-lower L below the diagonal and U on and
    above it, such that ``M[perm] = L @ U``. Raises SingularMatrix when a pivot
    falls below ``PIVOT_TOL`` in magnitude.
    """
    a = _as_square(M).copy()
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < PIVOT_TOL:
            raise SingularMatrix(f"pivot {a[p, k]:.3e} below {PIVOT_TOL} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        if k + 1 < n:
            a[k + 1:, k] /= a[k, k]
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def lu_solve(factors, rhs):
    lu, perm = factors
    n = lu.shape[0]
    x = np.array(rhs, dtype=float)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def solve_linear(M, rhs):
    """Solve ``M x = rhs``; ``rhs`` may be a vector or a matrix of columns.

    One round of iterative refinement is applied, which brings the residual
    down to roundoff for the well-conditioned systems met in practice.
    """
    M = _as_square(M)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, matrix has {M.shape[0]}")
    factors = lu_factor(M)
    x = lu_solve(factors, rhs)
    x += lu_solve(factors, rhs - M @ x)
    return x


@njit(cache=True)
def _jacobi_inplace(a, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return max_sweeps


def eigvals_sym(M, max_sweeps=100):
    """All eigenvalues of a symmetric matrix, ascending (cyclic Jacobi)."""
    M = _as_square(M)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    a = 0.5 * (M + M.T)
    fro2 = float(np.sum(a * a))
    if fro2 == 0.0:
        return np.zeros(a.shape[0])
    _jacobi_inplace(a, 1e-32 * fro2, max_sweeps)
    return np.sort(np.diag(a).copy())


def min_eig_sym(M):
    return float(eigvals_sym(M)[0])


def max_eig_sym(M):
    return float(eigvals_sym(M)[-1])


def sym_part(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def check_stochastic(P):
    P = _as_square(P)
    if np.any(P < 0):
        raise NotStochastic("transition matrix has negative entries")
    dev = np.max(np.abs(P.sum(axis=1) - 1.0))
    if dev > STOCHASTIC_TOL:
        raise NotStochastic(f"row sums deviate from 1 by {dev:.3e}")
    return P


def stationary_distribution(P):
    """Stationary law of a row-stochastic matrix via a bordered linear solve.

    Solves (P^T - I) mu = 0 with the last equation replaced by sum(mu) = 1.
    The bordered system is nonsingular exactly when the stationary law is
    unique, so periodic chains are fine and reducible ones raise.
    """
    P = check_stochastic(P)
    n = P.shape[0]
    B = P.T - np.eye(n)
    B[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        mu = solve_linear(B, rhs)
    except SingularMatrix as exc:
        raise NonUniqueStationary("stationary distribution is not unique") from exc
    if np.min(mu) < -1e-9:
        raise NonUniqueStationary("stationary solve returned a signed vector")
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    return mu
