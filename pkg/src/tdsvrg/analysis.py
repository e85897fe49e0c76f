"""Theoretical step-size and batch-size rules, the Markovian error bound,
batch-size comparison tables, rate fitting and cross-run aggregation."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (InsufficientData, InvalidInput, MisalignedTraces, MissingInput,
                     SingularC, SingularMatrix, TDSVRGError)
from .mdp import fixed_point, law_of, random_mdp
from .sampling import sample_trajectory

LOG_FLOOR = 1e-300


class Regime(str, enum.Enum):
    FINITE_BALANCED = "finite_balanced"
    FINITE_UNBALANCED = "finite_unbalanced"
    PROP1_SQ_NORM = "prop1_sq_norm"
    IID = "iid"
    MARKOV = "markov"


@dataclass(frozen=True)
class TheoreticalParams:
    regime: Regime
    alpha: float
    M: int
    J: float = 0.0
    n_m: int | None = None
    n_m_rule: str = ""
    C2: float | None = None
    lambda_A: float = float("nan")


def markov_c2(profile):
    """C2 = 4 (1 + (m-1) rho) / (1 - rho) * (4 R^2 + r_max^2)."""
    r_max = profile.G - 2.0 * profile.R
    mix = (1.0 + (profile.m_const - 1.0) * profile.rho) / (1.0 - profile.rho)
    return 4.0 * mix * (4.0 * profile.R ** 2 + r_max ** 2)


def theoretical_parameters(sol, regime, N=None, epsilon=None, profile=None):
    regime = Regime(regime)
    lam = sol.lambda_A
    if regime is Regime.FINITE_BALANCED:
        return TheoreticalParams(regime, 0.125, math.ceil(16.0 / lam), n_m_rule="exact",
                                 lambda_A=lam)
    if regime is Regime.FINITE_UNBALANCED:
        if N is None:
            raise MissingInput("the unbalanced regime needs the dataset size N")
        J = 4.0 * sol.gamma ** 2 / (N * lam)
        alpha = 1.0 / (8.0 + J)
        return TheoreticalParams(regime, alpha, math.ceil(2.0 / (lam * alpha)), J,
                                 n_m_rule="exact", lambda_A=lam)
    if regime is Regime.PROP1_SQ_NORM:
        return TheoreticalParams(regime, lam / 32.0, math.ceil(32.0 / lam ** 2),
                                 n_m_rule="exact", lambda_A=lam)
    if regime is Regime.IID:
        return TheoreticalParams(regime, 1.0 / 16.0, math.ceil(32.0 / lam),
                                 n_m_rule="theoretical", lambda_A=lam)
    if epsilon is None or profile is None:
        raise MissingInput("the Markov regime needs epsilon and an ergodicity profile")
    if not 0.0 < epsilon < 1.0:
        raise InvalidInput("epsilon must lie in (0, 1)")
    alpha = epsilon / (16.0 * math.log(1.0 / epsilon))
    C2 = markov_c2(profile)
    return TheoreticalParams(regime, alpha, math.ceil(2.0 / (alpha * lam)),
                             n_m=math.ceil(8.0 * C2 / (lam * epsilon)), n_m_rule="fixed",
                             C2=C2, lambda_A=lam)


@dataclass(frozen=True)
class MarkovBound:
    contraction: float
    estimation: float
    bias: float
    tau: int

    @property
    def total(self):
        return self.contraction + self.estimation + self.bias


def markov_error_bound(f0, epochs, lambda_A, n_m, alpha, profile):
    """(3/4)^m f0 + 8 C2 / (lambda_A n_m) + 4 alpha (2 G^2 (4 + 6 tau(alpha)) + 9 R^2)."""
    tau = profile.tau_mix(alpha)
    G, R = profile.G, profile.R
    return MarkovBound(0.75 ** epochs * f0,
                       8.0 * markov_c2(profile) / (lambda_A * n_m),
                       4.0 * alpha * (2.0 * G ** 2 * (4.0 + 6.0 * tau) + 9.0 * R ** 2),
                       tau)


def empirical_C(source, env=None):
    """C = E[phi phi^T] under the source's sampling law."""
    law = law_of(source)
    phi = (env if env is not None else source).features[law.s]
    return (phi * law.weight[:, None]).T @ phi


def pd_svrg_lipschitz(source, env=None):
    """Max over transitions of the spectral norm of [[0, -A_t^T], [A_t, C_t]]."""
    env = env if env is not None else source
    law = law_of(source)
    pairs = np.unique(np.stack([law.s, law.s2], axis=1), axis=0)
    f1 = env.features[pairs[:, 0]]
    f2 = env.features[pairs[:, 1]]
    A_t = f1[:, :, None] * (f1 - env.gamma * f2)[:, None, :]
    C_t = f1[:, :, None] * f1[:, None, :]
    d = f1.shape[1]
    B = np.zeros((len(pairs), 2 * d, 2 * d))
    B[:, :d, d:] = -np.transpose(A_t, (0, 2, 1))
    B[:, d:, :d] = A_t
    B[:, d:, d:] = C_t
    return float(np.max(np.linalg.norm(B, ord=2, axis=(1, 2))))


def pd_svrg_batch_formula(sol, C, L_G):
    """51 kappa(C)^2 L_G^2 / lambda_min(A^T C^-1 A)^2."""
    C = np.asarray(C, dtype=float)
    try:
        factors = linalg.lu_factor(C)
    except SingularMatrix as exc:
        raise SingularC("C = E[phi phi^T] is singular") from exc
    eig_C = linalg.eigvals_sym(linalg.sym_part(C))
    if eig_C[0] <= 0:
        raise SingularC("C is not positive definite")
    kappa = eig_C[-1] / eig_C[0]
    Q = sol.A.T @ linalg.lu_solve(factors, sol.A)
    lam_q = linalg.min_eig_sym(linalg.sym_part(Q))
    return 51.0 * kappa ** 2 * L_G ** 2 / lam_q ** 2


@dataclass(frozen=True)
class BatchComparisonRow:
    method: str
    n_states: int
    n_features: int
    gamma: float
    value: float
    seeds: int
    failures: int = 0


def table_instances(n_states, n_actions, n_features, gamma, seeds, n=5000):
    """(Mdp, trajectory dataset) pairs following the random-instance recipe."""
    out = []
    for seed in seeds:
        mdp = random_mdp(n_states, n_actions, n_features, gamma, seed)
        out.append((mdp, sample_trajectory(mdp, n, seed)))
    return out


def batch_size_table(instances, epsilon=None, vrtd_const=None):
    """Mean theoretical batch sizes per (states, features, gamma) group.

    TD-SVRG is 16/lambda_A of the dataset fixed point; PD-SVRG is the
    formula above. The VRTD row, vrtd_const / (epsilon lambda_A^2), is only a
    scaling guide and is emitted only when both epsilon and the constant
    are supplied.
    """
    groups = {}
    for mdp, ds in instances:
        key = (mdp.n_states, mdp.n_features, mdp.gamma)
        g = groups.setdefault(key, {"TDSVRG": [], "PDSVRG": [], "VRTD": [], "fail": 0})
        try:
            sol = fixed_point(ds, mdp)
            pd = pd_svrg_batch_formula(sol, empirical_C(ds, mdp), pd_svrg_lipschitz(ds, mdp))
        except TDSVRGError:
            g["fail"] += 1
            continue
        g["TDSVRG"].append(16.0 / sol.lambda_A)
        g["PDSVRG"].append(pd)
        if epsilon is not None and vrtd_const is not None:
            g["VRTD"].append(vrtd_const / (epsilon * sol.lambda_A ** 2))
    rows = []
    for (n_s, d, gamma), g in groups.items():
        for method in ("TDSVRG", "PDSVRG", "VRTD"):
            vals = g[method]
            if method == "VRTD" and not vals:
                continue
            mean = float(np.mean(vals)) if vals else float("nan")
            rows.append(BatchComparisonRow(method, n_s, d, gamma, mean, len(vals), g["fail"]))
    return rows


def _f_series(trace):
    if hasattr(trace, "f_values"):
        return trace.f_values
    return np.asarray(trace, dtype=float)


def convergence_rate_fit(trace, burn_in=0, return_flag=False):
    """exp of the least-squares slope of log f against epoch.

    ``trace`` is a RunTrace or a plain f series. Zeros are floored at 1e-300;
    with ``return_flag`` the result is (rate, floored).
    """
    f = _f_series(trace)[burn_in:]
    if f.size < 3:
        raise InsufficientData("rate fit needs at least 3 epochs after burn-in")
    floored = bool(np.any(f <= 0))
    y = np.log(np.maximum(f, LOG_FLOOR))
    x = np.arange(f.size, dtype=float)
    slope = np.polyfit(x, y, 1)[0]
    rate = float(np.exp(slope))
    return (rate, floored) if return_flag else rate


@dataclass(frozen=True)
class AggregateSeries:
    epochs: np.ndarray
    samples_used: np.ndarray
    f_geo: np.ndarray
    dist_geo: np.ndarray
    n_floored: int
    n_traces: int


def aggregate_geometric(traces):
    """Per-epoch geometric means of f and ||theta - theta*||^2 across runs."""
    if not traces:
        raise InsufficientData("no traces to aggregate")
    epochs = [tuple(r.epoch for r in t.records) for t in traces]
    if any(e != epochs[0] for e in epochs):
        raise MisalignedTraces("traces do not share the same epochs")
    F = np.array([t.f_values for t in traces])
    D = np.array([t.dist_sq for t in traces])
    S = np.array([t.samples for t in traces], dtype=float)
    n_floored = int(np.sum(F <= 0) + np.sum(D <= 0))
    return AggregateSeries(np.array(epochs[0]), S.mean(axis=0),
                           np.exp(np.mean(np.log(np.maximum(F, LOG_FLOOR)), axis=0)),
                           np.exp(np.mean(np.log(np.maximum(D, LOG_FLOOR)), axis=0)),
                           n_floored, len(traces))
