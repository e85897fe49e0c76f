"""Datasets, i.i.d. and Markovian transition sources, mean-path estimates,
and estimation batch-size schedules."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import EmptySource, HorizonExceeded, InvalidInput, MissingOracle
from .rng import Purpose, stream


class Transition(NamedTuple):
    s: int
    s2: int
    r: float


def is_balanced(s, s2):
    if len(s) == 0:
        return True
    n = int(max(np.max(s), np.max(s2))) + 1
    return bool(np.array_equal(np.bincount(s, minlength=n), np.bincount(s2, minlength=n)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered list of transitions stored column-wise."""

    s: np.ndarray
    s2: np.ndarray
    r: np.ndarray
    balanced: bool
    source_id: str = ""

    @classmethod
    def from_arrays(cls, s, s2, r, source_id=""):
        s = np.array(s, dtype=np.int64)
        s2 = np.array(s2, dtype=np.int64)
        r = np.array(r, dtype=float)
        if not (s.shape == s2.shape == r.shape) or s.ndim != 1:
            raise InvalidInput("s, s2 and r must be equal-length vectors")
        if s.size and min(s.min(), s2.min()) < 0:
            raise InvalidInput("state indices must be non-negative")
        for a in (s, s2, r):
            a.setflags(write=False)
        return cls(s, s2, r, is_balanced(s, s2), source_id)

    @classmethod
    def from_transitions(cls, transitions, source_id=""):
        transitions = list(transitions)
        cols = list(zip(*transitions)) if transitions else ([], [], [])
        return cls.from_arrays(*cols, source_id=source_id)

    def __len__(self):
        return self.s.shape[0]

    @property
    def transitions(self):
        return [Transition(int(a), int(b), float(c)) for a, b, c in zip(self.s, self.s2, self.r)]

    def truncate(self, n):
        return Dataset.from_arrays(self.s[:n], self.s2[:n], self.r[:n],
                                   source_id=f"{self.source_id}[:{n}]")

    def check_states(self, n_states):
        if len(self) and max(self.s.max(), self.s2.max()) >= n_states:
            raise InvalidInput(f"dataset references states beyond {n_states}")

    def draw(self, rng, n):
        """n transitions uniformly with replacement."""
        idx = rng.integers(0, len(self), size=n)
        return self.s[idx], self.s2[idx], self.r[idx]

    def draw_without_replacement(self, rng, n):
        idx = rng.choice(len(self), size=min(n, len(self)), replace=False)
        return self.s[idx], self.s2[idx], self.r[idx]


def _draw_start(mdp, rng):
    return int(min(np.searchsorted(np.cumsum(mdp.stationary), rng.random(), side="right"),
                   mdp.n_states - 1))


def walk(mdp, start, n, rng):
    """Run the chain n steps from ``start``; returns n+1 states."""
    return kernels.walk_chain(mdp.cumulative_P, int(start), rng.random(n))


def sample_trajectory(mdp, length, seed, start=None):
    """Markovian dataset of ``length`` consecutive transitions, started from mu (or ``start``)."""
    if length < 1:
        raise InvalidInput("length must be at least 1")
    if start is None:
        start = _draw_start(mdp, stream(seed, 0, Purpose.START))
    states = walk(mdp, start, length, stream(seed, 0, Purpose.TRAJECTORY))
    s, s2 = states[:-1], states[1:]
    return Dataset.from_arrays(s, s2, mdp.rewards[s, s2], source_id=f"{mdp.name}:traj{seed}")


def sample_balanced_dataset(mdp, s0, min_length, seed):
    """Trajectory from s0 that stops at the first transition into s0 at or after ``min_length``.

    First and last states coincide, so the first-state and next-state
    multisets are equal. The return is searched for up to 100/p further steps,
    with p the reset probability, or 100/mu(s0) (100 expected return times)
    for chains without a reset.
    """
    if min_length < 1:
        raise InvalidInput("min_length must be at least 1")
    p = mdp.reset_prob if mdp.reset_prob is not None else float(mdp.stationary[s0])
    if p <= 0:
        raise HorizonExceeded(f"state {s0} is never revisited")
    horizon = int(math.ceil(100.0 / p))
    states = walk(mdp, s0, min_length + horizon, stream(seed, 0, Purpose.TRAJECTORY))
    hits = np.nonzero(states[min_length:] == s0)[0]
    if hits.size == 0:
        raise HorizonExceeded(f"no return to {s0} within {horizon} steps after {min_length}")
    length = min_length + int(hits[0])
    s, s2 = states[:length], states[1:length + 1]
    ds = Dataset.from_arrays(s, s2, mdp.rewards[s, s2], source_id=f"{mdp.name}:balanced{seed}")
    assert ds.balanced
    return ds


class IidSource:
    """Independent transitions: s ~ mu, s' ~ P(s, .)."""

    def __init__(self, mdp):
        self.mdp = mdp
        self._cum_mu = np.cumsum(mdp.stationary)
        n = mdp.n_states
        self._flat = (mdp.cumulative_P + np.arange(n)[:, None]).ravel()

    def draw(self, rng, n):
        mdp = self.mdp
        last = mdp.n_states - 1
        s = np.minimum(np.searchsorted(self._cum_mu, rng.random(n), side="right"), last)
        k = np.searchsorted(self._flat, s + rng.random(n), side="right")
        s2 = np.minimum(k - s * mdp.n_states, last)
        return s, s2, mdp.rewards[s, s2]


class MarkovSource:
    """A single chain run forward; successive draws continue where the last stopped."""

    def __init__(self, mdp, start=None):
        self.mdp = mdp
        self.state = start

    def draw(self, rng, n):
        if self.state is None:
            self.state = _draw_start(self.mdp, rng)
        states = walk(self.mdp, self.state, n, rng)
        self.state = int(states[-1])
        s, s2 = states[:-1], states[1:]
        return s, s2, self.mdp.rewards[s, s2]


def iid_stream(mdp, seed, block=4096):
    """Endless generator of independent transitions."""
    source = IidSource(mdp)
    rng = stream(seed, 0, Purpose.INNER)
    while True:
        s, s2, r = source.draw(rng, block)
        for a, b, c in zip(s, s2, r):
            yield Transition(int(a), int(b), float(c))


def td_updates(features, gamma, s, s2, r, theta):
    """Per-transition update vectors g_{s,s'}(theta), one row each."""
    f1 = features[s]
    delta = r + (gamma * features[s2] - f1) @ theta
    return delta[:, None] * f1


def mean_path_update(source, env, theta):
    """Average TD update over a Dataset, an (s, s2, r) batch, or exactly over
    an Mdp's stationary transition law."""
    if hasattr(source, "P"):
        from .mdp import environment_law
        law = environment_law(source)
        g = td_updates(source.features, source.gamma, law.s, law.s2, law.r,
                       np.asarray(theta, dtype=float))
        return law.weight @ g
    if isinstance(source, Dataset):
        s, s2, r = source.s, source.s2, source.r
    else:
        s, s2, r = (np.asarray(x) for x in source)
    if len(s) == 0:
        raise EmptySource("mean path over an empty source")
    g = td_updates(env.features, env.gamma, s, s2, np.asarray(r, dtype=float),
                   np.asarray(theta, dtype=float))
    return g.mean(axis=0)


@dataclass(frozen=True)
class BatchSchedule:
    """How many samples estimate the mean-path anchor each epoch.

    exact: full pass over the dataset; fixed: ``size``; theoretical: growth
    driven by the exact f and sigma^2; practical: growth driven by r_max and
    the anchor norm.
    """

    mode: str = "exact"
    c: float = 1.0
    cap: int | None = None
    size: int | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "fixed", "theoretical", "practical"):
            raise InvalidInput(f"unknown batch schedule mode {self.mode!r}")
        if self.c <= 0:
            raise InvalidInput("c must be positive")
        if self.mode == "fixed" and (self.size is None or self.size < 1):
            raise InvalidInput("fixed schedule needs size >= 1")


def estimation_batch_size(sched, epoch, lambda_A, r_max, theta_prev,
                          f_prev=None, sigma_sq=None, N=None):
    if N is None:
        N = sched.cap
    if sched.mode == "exact":
        if N is None:
            raise InvalidInput("exact mean path needs a finite dataset")
        return int(N)
    if sched.mode == "fixed":
        return int(sched.size)
    if lambda_A <= 0:
        raise InvalidInput("lambda_A must be positive")
    if sched.mode == "theoretical":
        if f_prev is None or sigma_sq is None:
            raise MissingOracle("theoretical schedule needs f(theta) and sigma^2")
        numer = 4.0 * f_prev + 2.0 * sigma_sq
    else:
        theta_prev = np.asarray(theta_prev, dtype=float)
        numer = 2.0 * r_max ** 2 + 8.0 * float(theta_prev @ theta_prev)
    n = numer / (sched.c * lambda_A * (2.0 / 3.0) ** epoch)
    if N is not None:
        if N <= 1:
            return 1
        n *= N / (N - 1.0)
        if n >= N:
            return int(N)
    return max(1, int(math.ceil(n)))
