"""Markov reward processes, exact TD fixed points and the objective f.

A policy is assumed to be folded into the transition matrix already, so an
``Mdp`` here is a Markov reward process with linear features.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InvalidDiscount,
    InvalidInput,
    NonPositiveLambda,
    NotMixing,
    SingularA,
    SingularMatrix,
)
from .rng import Purpose, stream

FEATURE_NORM_TOL = 1e-12

# V_M(s) = V_M'(s) + RESET_RECOVERY_COEF * V_M'(s0); fitted against exact
# Bellman solves in tests/test_mdp.py::test_reset_recovery_coefficient_oracle
RESET_RECOVERY_COEF = -0.5


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mdp:
    P: np.ndarray
    rewards: np.ndarray
    gamma: float
    features: np.ndarray
    reset_state: int | None = None
    reset_prob: float | None = None
    name: str = ""

    def __post_init__(self):
        P = linalg.check_stochastic(self.P)
        rewards = np.asarray(self.rewards, dtype=float)
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        n = P.shape[0]
        if rewards.shape != (n, n):
            raise DimensionMismatch(f"rewards must be {n}x{n}, got {rewards.shape}")
        if features.shape[0] != n:
            raise DimensionMismatch(f"features have {features.shape[0]} rows for {n} states")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidDiscount(f"gamma={self.gamma} outside [0, 1)")
        norms = np.linalg.norm(features, axis=1)
        if np.max(norms) > 1.0 + FEATURE_NORM_TOL:
            raise InvalidInput(f"feature norm {np.max(norms):.6g} exceeds 1")
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "rewards", _frozen(rewards))
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def r_max(self):
        return float(np.max(np.abs(self.rewards[self.P > 0]), initial=0.0))

    @property
    def expected_rewards(self):
        return np.sum(self.P * self.rewards, axis=1)

    @cached_property
    def stationary(self):
        mu = linalg.stationary_distribution(self.P)
        mu.setflags(write=False)
        return mu

    @cached_property
    def cumulative_P(self):
        c = np.cumsum(self.P, axis=1)
        c[:, -1] = 1.0
        c.setflags(write=False)
        return c


@dataclass(frozen=True)
class TransitionLaw:
    """A finite weighted set of transitions; weights sum to one."""

    s: np.ndarray
    s2: np.ndarray
    r: np.ndarray
    weight: np.ndarray


def environment_law(mdp):
    s, s2 = np.nonzero(mdp.P)
    w = mdp.stationary[s] * mdp.P[s, s2]
    return TransitionLaw(s, s2, mdp.rewards[s, s2], w)


def dataset_law(dataset):
    n = len(dataset)
    if n == 0:
        from .errors import EmptySource

        raise EmptySource("dataset has no transitions")
    return TransitionLaw(dataset.s, dataset.s2, dataset.r, np.full(n, 1.0 / n))


def law_of(source):
    if isinstance(source, Mdp):
        return environment_law(source)
    return dataset_law(source)


@dataclass(frozen=True, eq=False)
class FixedPointSolution:
    A: np.ndarray
    b: np.ndarray
    theta_star: np.ndarray
    lambda_A: float
    sigma_sq: float
    source: str
    gamma: float
    n_samples: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.b.shape[0]

    def f(self, theta):
        return f_value(self, theta)

    def mean_path(self, theta):
        return self.b - self.A @ np.asarray(theta, dtype=float)

    def dist_sq(self, theta):
        d = np.asarray(theta, dtype=float) - self.theta_star
        return float(d @ d)


def _resolve_env(source, env):
    if isinstance(source, Mdp):
        return source
    if env is None:
        raise InvalidInput("a dataset needs the features/gamma of its environment (env=...)")
    return env


def fixed_point(source, env=None):
    """Exact A, b, theta*, lambda_A and sigma^2 under the source's sampling law.

    ``source`` is an Mdp (stationary law mu x P) or a Dataset (empirical law);
    datasets take their features and discount from ``env``.
    """
    env = _resolve_env(source, env)
    law = law_of(source)
    phi = env.features
    gamma = env.gamma
    f1 = phi[law.s]
    f2 = phi[law.s2]
    A = (f1 * law.weight[:, None]).T @ (f1 - gamma * f2)
    b = f1.T @ (law.weight * law.r)
    try:
        theta_star = linalg.solve_linear(A, b)
    except SingularMatrix as exc:
        raise SingularA("A is singular; the TD fixed point does not exist") from exc
    lam = linalg.min_eig_sym(linalg.sym_part(A))
    if lam <= 0.0:
        raise NonPositiveLambda(f"lambda_A = {lam:.3e} is not positive")
    g_star = (law.r + f2 @ theta_star * gamma - f1 @ theta_star)[:, None] * f1
    sigma_sq = float(law.weight @ np.sum(g_star * g_star, axis=1))
    kind = "environment" if isinstance(source, Mdp) else "dataset"
    n = None if kind == "environment" else len(source)
    return FixedPointSolution(A, b, theta_star, float(lam), sigma_sq, kind, gamma, n)


def _check_theta(sol, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != sol.theta_star.shape:
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected {sol.theta_star.shape}")
    return theta


def f_value(sol, theta):
    """(theta - theta*)^T A (theta - theta*), without a factor 1/2."""
    d = _check_theta(sol, theta) - sol.theta_star
    return float(d @ sol.A @ d)


def update_deviation(source, sol, theta, env=None):
    """w(theta) = E ||g(theta) - g(theta*)||^2 under the source's law."""
    env = _resolve_env(source, env)
    law = law_of(source)
    d = _check_theta(sol, theta) - sol.theta_star
    f1 = env.features[law.s]
    f2 = env.features[law.s2]
    coef = (env.gamma * f2 - f1) @ d
    return float(law.weight @ (coef * coef * np.sum(f1 * f1, axis=1)))


def dirichlet_decomposition(mdp, sol, theta):
    """Split f_e into the mu-weighted norm and the Dirichlet seminorm of V_theta - V_theta*.

    Returns ``(d_norm, dirichlet)`` with (1-gamma)*d_norm + gamma*dirichlet = f_e(theta).
    """
    dv = mdp.features @ (_check_theta(sol, theta) - sol.theta_star)
    mu = mdp.stationary
    d_norm = float(mu @ (dv * dv))
    diff = dv[:, None] - dv[None, :]
    dirichlet = 0.5 * float(np.sum(mu[:, None] * mdp.P * diff * diff))
    return d_norm, dirichlet


def td_update(phi_s, phi_s2, r, gamma, theta):
    """g_{s,s'}(theta) = (r + gamma phi(s')^T theta - phi(s)^T theta) phi(s)."""
    phi_s = np.atleast_1d(np.asarray(phi_s, dtype=float))
    phi_s2 = np.atleast_1d(np.asarray(phi_s2, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not (phi_s.shape == phi_s2.shape == theta.shape):
        raise DimensionMismatch(
            f"shapes {phi_s.shape}, {phi_s2.shape}, {theta.shape} do not agree")
    delta = r + gamma * (phi_s2 @ theta) - phi_s @ theta
    return delta * phi_s


def random_mdp(n_states, n_actions, n_features, gamma, seed):
    """Random MDP under a random stochastic policy.

    Each action gets dense U[0,1) transition rows, the policy mixes actions
    with normalized U[0,1) weights, rewards r(s, s') are U[0,1), and features
    are ``n_features - 1`` U[0,1) coordinates plus a constant one, all divided
    by the largest row norm so that every ||phi(s)|| <= 1.
    """
    if not 0.0 <= gamma < 1.0:
        raise InvalidDiscount(f"gamma={gamma} outside [0, 1)")
    if n_states < 1 or n_actions < 1 or n_features < 1:
        raise InvalidInput("n_states, n_actions and n_features must be positive")
    rng = stream(seed, 0, Purpose.GENERATE)
    policy = rng.random((n_states, n_actions))
    policy /= policy.sum(axis=1, keepdims=True)
    P = np.zeros((n_states, n_states))
    for a in range(n_actions):
        T = rng.random((n_states, n_states))
        T /= T.sum(axis=1, keepdims=True)
        P += policy[:, a:a + 1] * T
    P /= P.sum(axis=1, keepdims=True)
    rewards = rng.random((n_states, n_states))
    features = np.hstack([rng.random((n_states, n_features - 1)), np.ones((n_states, 1))])
    features /= max(1.0, float(np.max(np.linalg.norm(features, axis=1))))
    name = f"random-{n_states}x{n_actions}-d{n_features}-g{gamma:g}-s{seed}"
    return Mdp(P, rewards, gamma, features, name=name)


def exact_values(mdp):
    """Exact value function: solve (I - gamma P) V = E[r | s]."""
    n = mdp.n_states
    return linalg.solve_linear(np.eye(n) - mdp.gamma * mdp.P, mdp.expected_rewards)


def reset_params(gamma):
    if not 0.0 < gamma < 1.0:
        raise InvalidDiscount(f"reset transform needs 0 < gamma < 1, got {gamma}")
    return (1.0 + gamma) / 2.0, (1.0 - gamma) / (1.0 + gamma)


def reset_transform(mdp, s0):
    """MDP with a forced reset to ``s0`` with probability p and discount (1+gamma)/2.

    Ordinary transitions keep their rewards; a reset step pays the original
    expected reward of the state it leaves, so E[r | s] is unchanged. Returns
    the new MDP and a function mapping its exact values back to the
    original MDP's values.
    """
    if not 0 <= s0 < mdp.n_states:
        raise InvalidInput(f"reset state {s0} out of range")
    gamma2, p = reset_params(mdp.gamma)
    n = mdp.n_states
    jump = np.zeros((n, n))
    jump[:, s0] = p
    normal = (1.0 - p) * mdp.P
    P2 = normal + jump
    mass = normal * mdp.rewards + jump * mdp.expected_rewards[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(P2 > 0, mass / np.where(P2 > 0, P2, 1.0), 0.0)
    out = Mdp(P2, r2, gamma2, mdp.features, reset_state=s0, reset_prob=p,
              name=f"{mdp.name}+reset{s0}")

    def recover(v_reset):
        v_reset = np.asarray(v_reset, dtype=float)
        return v_reset + RESET_RECOVERY_COEF * v_reset[s0]

    return out, recover


@dataclass(frozen=True, eq=False)
class ErgodicityProfile:
    m_const: float
    rho: float
    G: float
    R: float
    curve: np.ndarray
    slem: float

    def tau_mix(self, alpha):
        """Smallest t >= 1 with sup-TV distance <= alpha (envelope past the horizon)."""
        hit = np.nonzero(self.curve[1:] <= alpha)[0]
        if hit.size:
            return int(hit[0]) + 1
        return max(1, int(np.ceil(np.log(alpha / self.m_const) / np.log(self.rho))))

    def envelope(self, t):
        return self.m_const * self.rho ** np.asarray(t, dtype=float)


def tv_curve(P, mu, horizon, cutoff=1e-15):
    P = np.asarray(P, dtype=float)
    Pt = np.eye(P.shape[0])
    out = []
    for _ in range(horizon + 1):
        tv = 0.5 * float(np.max(np.sum(np.abs(Pt - mu[None, :]), axis=1)))
        out.append(tv)
        if tv < cutoff:
            break
        Pt = Pt @ P
    curve = np.zeros(horizon + 1)
    curve[:len(out)] = out
    return curve


def _fit_envelope(curve, rho_floor, n_grid=4000):
    """Pick (m, rho) with curve <= m rho^t minimizing (1 + (m-1) rho) / (1 - rho)."""
    pos = curve > 0
    t = np.arange(curve.size, dtype=float)[pos]
    log_c = np.log(curve[pos])
    lo = min(max(rho_floor, 1e-6), 1.0 - 1e-6)
    best = None
    for rho in lo + (1.0 - lo) * np.arange(n_grid) / n_grid:
        m = float(np.exp(np.max(log_c - t * np.log(rho)))) if t.size else 1e-300
        cost = (1.0 + (m - 1.0) * rho) / (1.0 - rho)
        if best is None or cost < best[0]:
            best = (cost, m, float(rho))
    return best[1], best[2]


def ergodicity_profile(mdp, R, horizon=200):
    """Sup-TV mixing curve, a geometric envelope (m, rho), and G = r_max + 2R."""
    mu = mdp.stationary
    curve = tv_curve(mdp.P, mu, horizon)
    if np.min(curve) >= 0.5:
        raise NotMixing("sup total-variation distance never drops below 1/2")
    eig = np.sort(np.abs(np.linalg.eigvals(mdp.P)))[::-1]
    slem = float(eig[1]) if eig.size > 1 else 0.0
    m_const, rho = _fit_envelope(curve, slem)
    G = mdp.r_max + 2.0 * R
    return ErgodicityProfile(m_const, rho, G, float(R), curve, slem)
