"""Plain-text file formats: matrices, features, datasets, traces, batch tables
and the INI experiment configuration."""

import configparser
import csv
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInput
from .learners import Algorithm, LearnerConfig
from .sampling import BatchSchedule, Dataset

TRACE_HEADER = ["algorithm", "seed", "epoch", "samples_used", "f_value", "dist_sq",
                "est_err_norm"]
TABLE_HEADER = ["method", "states", "features", "gamma", "mean_batch", "seeds"]
OUTPUT_ENV = "TDSVRG_OUTPUT_DIR"


def fmt(x):
    """17 significant digits: round-trips every float64 exactly."""
    return format(float(x), ".17g")


def default_output_dir():
    return Path(os.environ.get(OUTPUT_ENV, "tdsvrg-out"))


def save_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def load_matrix(path):
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return M


def load_features(path):
    """Feature matrix, one state per row. Rows with norm above 1 trigger a
    global rescale by the largest row norm; returns (features, factor)."""
    phi = load_matrix(path)
    peak = float(np.max(np.linalg.norm(phi, axis=1), initial=0.0))
    factor = 1.0 / peak if peak > 1.0 else 1.0
    return phi * factor, factor


def save_dataset(path, ds):
    with open(path, "w", newline="") as fh:
        fh.write("s,s2,r\n")
        for a, b, c in zip(ds.s, ds.s2, ds.r):
            fh.write(f"{a},{b},{fmt(c)}\n")


def load_dataset(path, source_id=None):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["s", "s2", "r"]:
            raise InvalidInput(f"{path}: expected header s,s2,r, got {header}")
        rows = [row for row in reader if row]
    try:
        s = [int(r[0]) for r in rows]
        s2 = [int(r[1]) for r in rows]
        r = [float(r[2]) for r in rows]
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"{path}: malformed dataset row") from exc
    return Dataset.from_arrays(s, s2, r, source_id=source_id or str(path))


def trace_rows(trace):
    for rec in trace.records:
        est = "" if rec.est_err_norm is None else fmt(rec.est_err_norm)
        yield [trace.algorithm, str(trace.seed), str(rec.epoch), str(rec.samples_used),
               fmt(rec.f_value), fmt(rec.dist_sq), est]


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for row in trace_rows(trace):
            fh.write(",".join(row) + "\n")


def read_trace_csv(path):
    """Columns of a trace CSV as a dict of lists (algorithm, seed kept as str/int)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER:
            raise InvalidInput(f"{path}: not a trace file")
        rows = list(reader)
    return {
        "algorithm": rows[0]["algorithm"] if rows else "",
        "seed": int(rows[0]["seed"]) if rows else 0,
        "epoch": np.array([int(r["epoch"]) for r in rows]),
        "samples_used": np.array([int(r["samples_used"]) for r in rows]),
        "f_value": np.array([float(r["f_value"]) for r in rows]),
        "dist_sq": np.array([float(r["dist_sq"]) for r in rows]),
    }


def write_batch_table(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TABLE_HEADER) + "\n")
        for r in rows:
            fh.write(f"{r.method},{r.n_states},{r.n_features},{fmt(r.gamma)},"
                     f"{fmt(r.value)},{r.seeds}\n")


def read_batch_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# Experiment configuration -------------------------------------------------

@dataclass
class ExperimentConfig:
    """A parsed experiment file.

    [environment] names either a random instance (states, actions, features,
    gamma, seed) or files (transitions, rewards, features, gamma). [experiment]
    carries setting (finite, iid or markov), dataset (path, optional),
    dataset_length, balanced_from, n_runs and master_seed. Every other
    section is a learner; comma-separated values expand into a grid.
    """

    environment: dict
    setting: str
    n_runs: int
    master_seed: int
    learners: list
    dataset: str | None = None
    dataset_length: int = 5000
    balanced_from: int | None = None
    output: str | None = None
    base_dir: Path = field(default_factory=Path)


_LEARNER_KEYS = {"algorithm", "alpha", "m", "epochs", "schedule", "batch", "batch_c",
                 "batch_size", "batch_cap", "r", "beta", "beta_ratio", "theta0", "label",
                 "theoretical", "epsilon"}


def _split(v):
    return [x.strip() for x in v.split(",") if x.strip()]


def _number(v):
    try:
        return int(v)
    except ValueError:
        pass
    if "/" in v:
        num, den = v.split("/", 1)
        return float(num) / float(den)
    return float(v)


def _learner_grid(name, section):
    unknown = set(section) - _LEARNER_KEYS
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
    if "algorithm" not in section:
        raise ConfigError(f"[{name}]: algorithm is required")
    grid_keys = [k for k in ("alpha", "m", "beta", "beta_ratio", "batch_size")
                 if k in section and len(_split(section[k])) > 1]
    values = [_split(section[k]) for k in grid_keys]
    cells = []
    for combo in itertools.product(*values) if grid_keys else [()]:
        cell = dict(section)
        cell.update(zip(grid_keys, combo))
        label = name
        if grid_keys:
            label += "[" + ";".join(f"{k}={v}" for k, v in zip(grid_keys, combo)) + "]"
        cell["label"] = section.get("label", label) if not grid_keys else label
        cells.append(cell)
    return cells


def learner_from_cell(cell, sol=None, N=None, epsilon=None, profile=None):
    """LearnerConfig for one grid cell. alpha/M may be 'theory', resolved
    from the fixed point and the regime named by ``theoretical``. ``profile``
    may be a callable taking the projection radius."""
    try:
        alg = Algorithm(cell["algorithm"].strip().upper())
    except ValueError as exc:
        raise ConfigError(f"unknown algorithm {cell['algorithm']!r}") from exc
    R = None
    if "r" in cell:
        if cell["r"].strip() == "auto":
            if sol is None:
                raise ConfigError(f"{cell['label']}: r = auto needs a fixed point")
            R = 1.01 * float(np.linalg.norm(sol.theta_star))
        else:
            R = float(_number(cell["r"]))
    if epsilon is None and "epsilon" in cell:
        epsilon = float(_number(cell["epsilon"]))
    if callable(profile):
        profile = profile(R)
    alpha_s = cell.get("alpha", "theory").strip()
    m_s = cell.get("m", "theory").strip()
    params = None
    if "theory" in (alpha_s, m_s) or cell.get("batch_size", "").strip() == "theory":
        if sol is None or "theoretical" not in cell:
            raise ConfigError(f"{cell['label']}: 'theory' needs a theoretical = <regime> key")
        from .analysis import theoretical_parameters
        params = theoretical_parameters(sol, cell["theoretical"].strip(), N=N,
                                        epsilon=epsilon, profile=profile)
    alpha = params.alpha if alpha_s == "theory" else float(_number(alpha_s))
    M = params.M if m_s == "theory" else int(_number(m_s))
    mode = cell.get("batch", "exact").strip()
    size = cell.get("batch_size")
    if mode == "fixed" and size is not None and size.strip() == "theory":
        size = params.n_m if params is not None else None
    sched = BatchSchedule(mode, float(_number(cell.get("batch_c", "1"))),
                          int(cell["batch_cap"]) if "batch_cap" in cell else None,
                          int(_number(str(size))) if size is not None else None)
    beta = None
    if "beta" in cell:
        beta = float(_number(cell["beta"]))
    elif "beta_ratio" in cell:
        beta = alpha * float(_number(cell["beta_ratio"]))
    theta0 = tuple(float(x) for x in _split(cell["theta0"])) if "theta0" in cell else None
    return LearnerConfig(alg, alpha=alpha, M=M, epochs=int(cell.get("epochs", "10")),
                         schedule=cell.get("schedule", "constant").strip(),
                         batch_schedule=sched, R=R, beta=beta, theta0=theta0,
                         label=cell["label"])


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser()
    cp.read(path)
    if "environment" not in cp or "experiment" not in cp:
        raise ConfigError("config needs [environment] and [experiment] sections")
    env = dict(cp["environment"])
    exp = cp["experiment"]
    setting = exp.get("setting", "finite")
    if setting not in ("finite", "iid", "markov"):
        raise ConfigError(f"setting must be finite, iid or markov, got {setting!r}")
    n_runs = exp.getint("n_runs", 1)
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    learners = []
    for name in cp.sections():
        if name in ("environment", "experiment"):
            continue
        learners.extend(_learner_grid(name, dict(cp[name])))
    if not learners:
        raise ConfigError("no learner sections")
    base = path.parent
    for key in ("transitions", "rewards", "features"):
        if "states" not in env and key in env and not (base / env[key]).is_file():
            raise ConfigError(f"{key} file {env[key]} not found")
    dataset = exp.get("dataset")
    if dataset is not None and not (base / dataset).is_file():
        raise ConfigError(f"dataset file {dataset} not found")
    bal = exp.get("balanced_from")
    return ExperimentConfig(env, setting, n_runs, exp.getint("master_seed", 0), learners,
                            dataset, exp.getint("dataset_length", 5000),
                            int(bal) if bal is not None else None, exp.get("output"), base)
