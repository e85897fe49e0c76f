"""TD(0), TD-SVRG in its finite/batched/i.i.d./Markovian forms, and the
GTD2 and VRTD baselines. Every learner returns a RunTrace with one record per
epoch plus the initial point."""

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import DivergenceDetected, InvalidInput, InvalidRadius, MissingOracle
from .mdp import Mdp
from .rng import Purpose, stream
from .sampling import (
    BatchSchedule,
    Dataset,
    IidSource,
    MarkovSource,
    estimation_batch_size,
    mean_path_update,
)


class Algorithm(str, enum.Enum):
    TD0 = "TD0"
    TDSVRG_FINITE = "TDSVRG_FINITE"
    TDSVRG_BATCHED = "TDSVRG_BATCHED"
    TDSVRG_IID = "TDSVRG_IID"
    TDSVRG_MARKOV = "TDSVRG_MARKOV"
    GTD2 = "GTD2"
    VRTD = "VRTD"


SCHEDULES = {"constant": kernels.CONSTANT, "inv_sqrt_t": kernels.INV_SQRT_T,
             "inv_t": kernels.INV_T}


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: Algorithm
    alpha: float = 0.125
    M: int = 100
    epochs: int = 10
    schedule: str = "constant"
    batch_schedule: BatchSchedule = field(default_factory=BatchSchedule)
    R: float | None = None
    beta: float | None = None
    seed: int = 0
    theta0: tuple | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not self.alpha > 0:
            raise InvalidInput("alpha must be positive")
        if self.M < 1:
            raise InvalidInput("M must be at least 1")
        if self.epochs < 0:
            raise InvalidInput("epochs must be non-negative")
        if self.schedule not in SCHEDULES:
            raise InvalidInput(f"unknown step-size schedule {self.schedule!r}")

    @property
    def name(self):
        return self.label or self.algorithm.value


def step_size(alpha, schedule, t):
    if schedule == "inv_sqrt_t":
        return alpha / np.sqrt(t)
    if schedule == "inv_t":
        return alpha / t
    return alpha


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    theta: np.ndarray
    f_value: float
    dist_sq: float
    samples_used: int
    est_err_norm: float | None = None


@dataclass
class RunTrace:
    algorithm: str
    seed: int
    records: list
    config: dict

    @property
    def theta(self):
        return self.records[-1].theta

    @property
    def f_values(self):
        return np.array([r.f_value for r in self.records])

    @property
    def dist_sq(self):
        return np.array([r.dist_sq for r in self.records])

    @property
    def samples(self):
        return np.array([r.samples_used for r in self.records])


def _record(oracle, epoch, theta, samples, est=None):
    theta = np.array(theta, dtype=float)
    return EpochRecord(epoch, theta, oracle.f(theta), oracle.dist_sq(theta), int(samples),
                       None if est is None else float(est))


def _config_echo(cfg):
    d = asdict(cfg)
    d["algorithm"] = cfg.algorithm.value
    return d


def _theta0(cfg, oracle):
    if oracle is None:
        raise MissingOracle("traces record f and dist^2, which need the exact fixed point")
    dim = oracle.dim
    if cfg.theta0 is None:
        return np.zeros(dim)
    theta = np.array(cfg.theta0, dtype=float)
    if theta.shape != (dim,):
        raise InvalidInput(f"theta0 has shape {theta.shape}, expected ({dim},)")
    return theta


def _env_of(source, env):
    if env is not None:
        return env
    if isinstance(source, (IidSource, MarkovSource)):
        return source.mdp
    if isinstance(source, Mdp):
        return source
    raise InvalidInput("a dataset source needs env= (features and gamma)")


def project_ball(theta, R):
    """Euclidean projection onto {||x|| <= R}."""
    if R < 0:
        raise InvalidInput("radius must be non-negative")
    theta = np.asarray(theta, dtype=float)
    nrm = float(np.linalg.norm(theta))
    if nrm <= R:
        return theta.copy()
    return theta * (R / nrm)


def _draw_sequence(source, rng, n):
    if isinstance(source, Mdp):
        source = MarkovSource(source)
    return source.draw(rng, n)


def run_td0(source, cfg, oracle, env=None):
    """Sequential single-sample TD(0), traced every ``cfg.M`` updates."""
    env = _env_of(source, env)
    theta = _theta0(cfg, oracle)
    records = [_record(oracle, 0, theta, 0)]
    total = cfg.M * cfg.epochs
    if total:
        s, s2, r = _draw_sequence(source, stream(cfg.seed, 0, Purpose.INNER), total)
        out, bad, nrm = kernels.td0_loop(env.features, env.gamma, s, s2, r, theta, cfg.alpha,
                                         SCHEDULES[cfg.schedule], 0, cfg.M)
        if bad >= 0:
            raise DivergenceDetected(bad, nrm)
        for m in range(1, cfg.epochs + 1):
            records.append(_record(oracle, m, out[m - 1], m * cfg.M))
    return RunTrace(cfg.name, cfg.seed, records, _config_echo(cfg))


def run_gtd2(source, cfg, oracle, env=None):
    if cfg.beta is None:
        raise InvalidInput("GTD2 needs beta")
    env = _env_of(source, env)
    theta = _theta0(cfg, oracle)
    records = [_record(oracle, 0, theta, 0)]
    total = cfg.M * cfg.epochs
    if total:
        s, s2, r = _draw_sequence(source, stream(cfg.seed, 0, Purpose.INNER), total)
        out, bad, nrm = kernels.gtd2_loop(env.features, env.gamma, s, s2, r, theta,
                                          np.zeros_like(theta), cfg.alpha, cfg.beta, cfg.M)
        if bad >= 0:
            raise DivergenceDetected(bad, nrm)
        for m in range(1, cfg.epochs + 1):
            records.append(_record(oracle, m, out[m - 1], m * cfg.M))
    return RunTrace(cfg.name, cfg.seed, records, _config_echo(cfg))


def _anchor_estimate(source, env, cfg, oracle, epoch, anchor, N):
    """Mean-path anchor for one epoch: returns (g_m, samples spent)."""
    sched = cfg.batch_schedule
    if sched.mode == "exact":
        if not isinstance(source, Dataset):
            raise InvalidInput("exact mean path needs a finite dataset")
        return mean_path_update(source, env, anchor), len(source)
    if sched.mode == "theoretical" and oracle is None:
        raise MissingOracle("theoretical schedule needs an exact fixed point")
    n = estimation_batch_size(sched, epoch, oracle.lambda_A, env_r_max(source, env), anchor,
                              f_prev=oracle.f(anchor), sigma_sq=oracle.sigma_sq, N=N)
    rng = stream(cfg.seed, epoch, Purpose.ESTIMATE)
    if isinstance(source, Dataset):
        batch = source.draw_without_replacement(rng, n)
    else:
        batch = source.draw(rng, n)
    return mean_path_update(batch, env, anchor), len(batch[0])


def env_r_max(source, env):
    if isinstance(source, Dataset):
        return float(np.max(np.abs(source.r), initial=0.0))
    return env.r_max


def run_td_svrg(source, cfg, oracle, env=None):
    """TD-SVRG over a finite Dataset (exact or batched anchor) or an IidSource.

    Each epoch: estimate the mean path at the anchor, run M variance-reduced
    updates on uniformly drawn transitions, then take the iterate at a
    uniformly chosen t' in {0, ..., M-1} as the next anchor.
    """
    env = _env_of(source, env)
    if isinstance(source, Mdp):
        source = IidSource(source)
    finite = isinstance(source, Dataset)
    if not finite and cfg.batch_schedule.mode == "exact":
        raise InvalidInput("i.i.d. sources need a theoretical, practical or fixed schedule")
    N = len(source) if finite else None
    anchor = _theta0(cfg, oracle)
    records = [_record(oracle, 0, anchor, 0)]
    used = 0
    for m in range(1, cfg.epochs + 1):
        g_m, n_est = _anchor_estimate(source, env, cfg, oracle, m, anchor, N)
        est_err = float(np.linalg.norm(g_m - oracle.mean_path(anchor)))
        s, s2, _ = source.draw(stream(cfg.seed, m, Purpose.INNER), cfg.M)
        snap = int(stream(cfg.seed, m, Purpose.SNAPSHOT).integers(0, cfg.M))
        _, anchor, _, bad, nrm = kernels.svrg_inner(env.features, env.gamma, s, s2, anchor,
                                                    g_m, cfg.alpha, -1.0, snap)
        if bad >= 0:
            raise DivergenceDetected(bad, nrm)
        used += n_est + cfg.M
        records.append(_record(oracle, m, anchor, used, est_err))
    return RunTrace(cfg.name, cfg.seed, records, _config_echo(cfg))


def run_td_svrg_markov(mdp, cfg, oracle, profile=None):
    """TD-SVRG along one Markov chain with projection onto the R-ball.

    The estimation trajectory and the inner-loop transitions are consecutive
    pieces of the same chain.
    """
    if cfg.R is None:
        raise InvalidRadius("Markovian TD-SVRG needs a projection radius R")
    if np.linalg.norm(oracle.theta_star) > cfg.R:
        raise InvalidRadius(f"R={cfg.R} is smaller than ||theta*||="
                            f"{np.linalg.norm(oracle.theta_star):.6g}")
    if cfg.batch_schedule.mode == "exact":
        raise InvalidInput("Markovian sampling cannot compute an exact mean path")
    chain = MarkovSource(mdp)
    start_rng = stream(cfg.seed, 0, Purpose.START)
    chain.draw(start_rng, 0)
    anchor = project_ball(_theta0(cfg, oracle), cfg.R)
    records = [_record(oracle, 0, anchor, 0)]
    used = 0
    for m in range(1, cfg.epochs + 1):
        n = estimation_batch_size(cfg.batch_schedule, m, oracle.lambda_A, mdp.r_max, anchor,
                                  f_prev=oracle.f(anchor), sigma_sq=oracle.sigma_sq)
        batch = chain.draw(stream(cfg.seed, m, Purpose.ESTIMATE), n)
        g_m = mean_path_update(batch, mdp, anchor)
        est_err = float(np.linalg.norm(g_m - oracle.mean_path(anchor)))
        s, s2, _ = chain.draw(stream(cfg.seed, m, Purpose.INNER), cfg.M)
        snap = int(stream(cfg.seed, m, Purpose.SNAPSHOT).integers(0, cfg.M))
        _, anchor, _, _, _ = kernels.svrg_inner(mdp.features, mdp.gamma, s, s2, anchor, g_m,
                                                cfg.alpha, float(cfg.R), snap)
        used += n + cfg.M
        records.append(_record(oracle, m, anchor, used, est_err))
    return RunTrace(cfg.name, cfg.seed, records, _config_echo(cfg))


def run_vrtd(source, cfg, oracle, env=None):
    """VRTD baseline: fixed batch M for both the anchor estimate and the inner
    loop; the next anchor is the average of the inner iterates."""
    env = _env_of(source, env)
    if isinstance(source, Mdp):
        source = IidSource(source)
    anchor = _theta0(cfg, oracle)
    records = [_record(oracle, 0, anchor, 0)]
    used = 0
    for m in range(1, cfg.epochs + 1):
        batch = source.draw(stream(cfg.seed, m, Purpose.ESTIMATE), cfg.M)
        g_m = mean_path_update(batch, env, anchor)
        est_err = float(np.linalg.norm(g_m - oracle.mean_path(anchor)))
        s, s2, _ = source.draw(stream(cfg.seed, m, Purpose.INNER), cfg.M)
        _, _, anchor, bad, nrm = kernels.svrg_inner(env.features, env.gamma, s, s2, anchor,
                                                    g_m, cfg.alpha, -1.0, 0)
        if bad >= 0:
            raise DivergenceDetected(bad, nrm)
        used += 2 * cfg.M
        records.append(_record(oracle, m, anchor, used, est_err))
    return RunTrace(cfg.name, cfg.seed, records, _config_echo(cfg))


def run(source, cfg, oracle, env=None, profile=None):
    """Dispatch on ``cfg.algorithm``."""
    alg = cfg.algorithm
    if alg is Algorithm.TD0:
        return run_td0(source, cfg, oracle, env)
    if alg is Algorithm.GTD2:
        return run_gtd2(source, cfg, oracle, env)
    if alg is Algorithm.VRTD:
        return run_vrtd(source, cfg, oracle, env)
    if alg is Algorithm.TDSVRG_MARKOV:
        mdp = source.mdp if isinstance(source, MarkovSource) else source
        return run_td_svrg_markov(mdp, cfg, oracle, profile)
    return run_td_svrg(source, cfg, oracle, env)
