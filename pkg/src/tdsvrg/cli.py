"""tdsvrg command line: generate, solve, run, compare-batches, plotdata.

Exit codes: 0 ok, 1 some runs failed, 2 invalid input.
"""

import argparse
import json
import os
import re
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, io
from .errors import InvalidInput, TDSVRGError
from .learners import run
from .mdp import Mdp, ergodicity_profile, fixed_point, random_mdp, reset_transform
from .rng import derive_seeds
from .sampling import IidSource, MarkovSource, sample_balanced_dataset, sample_trajectory

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2

TABLE_RECIPES = ("50:20:0.8", "400:10:0.95", "1000:20:0.99")


def _out_dir(args):
    out = Path(args.out) if args.out else io.default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe(label):
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", label)


def _solution_summary(sol):
    return {"lambda_A": sol.lambda_A, "theta_star": [float(x) for x in sol.theta_star],
            "sigma_sq": sol.sigma_sq, "gamma": sol.gamma, "source": sol.source,
            "n_samples": sol.n_samples}


def _save_mdp(out, prefix, mdp):
    io.save_matrix(out / f"{prefix}transitions.csv", mdp.P)
    io.save_matrix(out / f"{prefix}rewards.csv", mdp.rewards)


def cmd_generate(args):
    out = _out_dir(args)
    mdp = random_mdp(args.states, args.actions, args.features, args.gamma, args.seed)
    _save_mdp(out, "", mdp)
    io.save_matrix(out / "features.csv", mdp.features)
    io.save_dataset(out / "markov_dataset.csv", sample_trajectory(mdp, args.n, args.seed))
    manifest = {"seed": args.seed, "states": args.states, "actions": args.actions,
                "features": args.features, "gamma": args.gamma, "n": args.n}
    try:
        manifest.update(_solution_summary(fixed_point(mdp)))
    except TDSVRGError as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    if 0.0 < args.gamma < 1.0:
        reset, _ = reset_transform(mdp, args.reset_state)
        _save_mdp(out, "reset_", reset)
        ds = sample_balanced_dataset(reset, args.reset_state, args.n, args.seed)
        io.save_dataset(out / "balanced_dataset.csv", ds)
        manifest.update({"reset_state": args.reset_state, "reset_gamma": reset.gamma,
                         "reset_prob": reset.reset_prob, "balanced_length": len(ds)})
    io.write_json(out / "manifest.json", manifest)
    print(f"wrote instance to {out}")
    return EXIT_OK


def load_instance(directory, reset=False):
    """Mdp from a directory written by ``generate``."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    prefix = "reset_" if reset else ""
    gamma = manifest["reset_gamma"] if reset else manifest["gamma"]
    features, _ = io.load_features(d / "features.csv")
    return Mdp(io.load_matrix(d / f"{prefix}transitions.csv"),
               io.load_matrix(d / f"{prefix}rewards.csv"), gamma, features,
               reset_state=manifest.get("reset_state") if reset else None,
               reset_prob=manifest.get("reset_prob") if reset else None,
               name=d.name + ("+reset" if reset else ""))


def cmd_solve(args):
    mdp = load_instance(args.instance, reset=args.reset)
    source = io.load_dataset(args.dataset) if args.dataset else mdp
    if args.dataset:
        source.check_states(mdp.n_states)
    summary = _solution_summary(fixed_point(source, mdp))
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# run -----------------------------------------------------------------------

def _build_environment(cfg):
    env = cfg.environment
    if "states" in env:
        return random_mdp(int(env["states"]), int(env.get("actions", 1)),
                          int(env["features"]), float(env["gamma"]), int(env.get("seed", 0)))
    try:
        base = cfg.base_dir
        features, factor = io.load_features(base / env["features"])
        if factor != 1.0:
            print(f"features rescaled by {factor:.17g}", file=sys.stderr)
        return Mdp(io.load_matrix(base / env["transitions"]),
                   io.load_matrix(base / env["rewards"]), float(env["gamma"]), features,
                   name=Path(env["transitions"]).stem)
    except KeyError as exc:
        raise InvalidInput(f"[environment] is missing {exc}") from exc


def prepare_experiment(cfg):
    """(source, env, oracle, learner configs, N) for a parsed config."""
    env = _build_environment(cfg)
    seed = int(cfg.environment.get("seed", cfg.master_seed))
    N = None
    if cfg.setting == "finite":
        if cfg.dataset:
            source = io.load_dataset(cfg.base_dir / cfg.dataset)
            source.check_states(env.n_states)
        elif cfg.balanced_from is not None:
            source = sample_balanced_dataset(env, cfg.balanced_from, cfg.dataset_length, seed)
        else:
            source = sample_trajectory(env, cfg.dataset_length, seed)
        oracle = fixed_point(source, env)
        N = len(source)
    else:
        source = IidSource(env) if cfg.setting == "iid" else MarkovSource(env)
        oracle = fixed_point(env)

    def profile_for(R):
        return ergodicity_profile(env, R) if (R is not None and cfg.setting == "markov") else None

    learners = [io.learner_from_cell(c, oracle, N=N, profile=profile_for) for c in cfg.learners]
    return source, env, oracle, learners


def _one_run(task):
    source, env, oracle, lcfg, seed = task
    from dataclasses import replace
    cfg = replace(lcfg, seed=seed)
    try:
        src = MarkovSource(env) if isinstance(source, MarkovSource) else source
        return cfg.name, seed, run(src, cfg, oracle, env=env), None
    except TDSVRGError as exc:
        return cfg.name, seed, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg, out, jobs=1):
    """Execute every (learner, seed) run; returns (traces by label, failures)."""
    source, env, oracle, learners = prepare_experiment(cfg)
    seeds = derive_seeds(cfg.master_seed, cfg.n_runs)
    tasks = [(source, env, oracle, lc, s) for lc in learners for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    traces, failures = defaultdict(list), []
    for label, seed, trace, err in results:
        if err is not None:
            failures.append({"label": label, "seed": seed, "error": err})
            continue
        io.write_trace(tdir / f"{_safe(label)}_seed{seed}.csv", trace)
        traces[label].append(trace)
    summary = {"setting": cfg.setting, "oracle": _solution_summary(oracle),
               "failures": failures, "learners": {}}
    with open(out / "aggregate.csv", "w", newline="") as fh:
        fh.write("algorithm,epoch,samples_used,f_geo,dist_geo,runs\n")
        for label in sorted(traces):
            agg = analysis.aggregate_geometric(traces[label])
            for k in range(agg.epochs.size):
                fh.write(f"{label},{agg.epochs[k]},{io.fmt(agg.samples_used[k])},"
                         f"{io.fmt(agg.f_geo[k])},{io.fmt(agg.dist_geo[k])},{agg.n_traces}\n")
            entry = {"runs": agg.n_traces, "final_f_geo": float(agg.f_geo[-1]),
                     "config": traces[label][0].config | {"seed": None}}
            try:
                entry["fitted_rate"] = analysis.convergence_rate_fit(agg.f_geo)
            except TDSVRGError:
                entry["fitted_rate"] = None
            summary["learners"][label] = entry
    io.write_json(out / "summary.json", _jsonable(summary))
    return traces, failures


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(vars(obj))
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def cmd_run(args):
    cfg = io.load_config(args.config)
    out = Path(args.out) if args.out else Path(cfg.output) if cfg.output else io.default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    traces, failures = run_experiment(cfg, out, jobs=args.jobs)
    n_ok = sum(len(v) for v in traces.values())
    for f in failures:
        print(f"run {f['label']} seed {f['seed']} failed: {f['error']}", file=sys.stderr)
    print(f"{n_ok} runs written to {out}, {len(failures)} failed")
    return EXIT_OK if not failures else EXIT_PARTIAL


def cmd_compare_batches(args):
    features = [int(x) for x in args.features.split(",")]
    instances = []
    for recipe in args.recipe or TABLE_RECIPES:
        n_s, n_a, gamma = recipe.split(":")
        for d in features:
            instances += analysis.table_instances(int(n_s), int(n_a), d, float(gamma),
                                                  range(args.seeds), n=args.n)
    rows = analysis.batch_size_table(instances, epsilon=args.epsilon,
                                     vrtd_const=args.vrtd_const)
    path = Path(args.out) if args.out else io.default_output_dir() / "batch_sizes.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    io.write_batch_table(path, rows)
    for r in rows:
        print(f"{r.method:7s} states={r.n_states:<5d} d={r.n_features:<3d} "
              f"gamma={r.gamma:<5g} mean={r.value:.4g}")
    return EXIT_OK if all(r.failures == 0 for r in rows) else EXIT_PARTIAL


def plot_series(trace_dir):
    """Per-algorithm geometric-mean series of log10 f and 0.5 log10 dist^2."""
    groups = defaultdict(list)
    for p in sorted(Path(trace_dir).glob("*.csv")):
        t = io.read_trace_csv(p)
        groups[t["algorithm"]].append(t)
    if not groups:
        raise InvalidInput(f"no trace files in {trace_dir}")
    series = {}
    for alg, ts in sorted(groups.items()):
        if any(not np.array_equal(t["epoch"], ts[0]["epoch"]) for t in ts):
            from .errors import MisalignedTraces
            raise MisalignedTraces(f"{alg}: traces cover different epochs")
        F = np.array([t["f_value"] for t in ts])
        D = np.array([t["dist_sq"] for t in ts])
        floored_f = np.any(F <= 0, axis=0)
        floored_d = np.any(D <= 0, axis=0)
        log_f = np.mean(np.log10(np.maximum(F, analysis.LOG_FLOOR)), axis=0)
        log_d = 0.5 * np.mean(np.log10(np.maximum(D, analysis.LOG_FLOOR)), axis=0)
        x = np.mean([t["samples_used"] for t in ts], axis=0)
        series[alg] = (x, log_f, floored_f, log_d, floored_d)
    return series


def cmd_plotdata(args):
    trace_dir = Path(args.traces)
    if (trace_dir / "traces").is_dir():
        trace_dir = trace_dir / "traces"
    series = plot_series(trace_dir)
    out = Path(args.out) if args.out else trace_dir.parent
    out.mkdir(parents=True, exist_ok=True)
    for name, vi, fi in (("log10_f", 1, 2), ("log10_dist", 3, 4)):
        with open(out / f"series_{name}.csv", "w", newline="") as fh:
            fh.write("algorithm,samples_used,value,floored\n")
            for alg, s in series.items():
                for k in range(s[0].size):
                    fh.write(f"{alg},{io.fmt(s[0][k])},{io.fmt(s[vi][k])},{int(s[fi][k])}\n")
    print(f"wrote {len(series)} series per metric to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tdsvrg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="random MDP, datasets and manifest")
    g.add_argument("--states", type=int, default=400)
    g.add_argument("--actions", type=int, default=10)
    g.add_argument("--features", type=int, default=21)
    g.add_argument("--gamma", type=float, default=0.95)
    g.add_argument("--n", type=int, default=5000, help="dataset length")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--reset-state", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="exact fixed point of an instance or dataset")
    s.add_argument("instance", help="directory written by generate")
    s.add_argument("--dataset")
    s.add_argument("--reset", action="store_true", help="use the reset MDP")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("run", help="run the learners of a config file")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare-batches", help="theoretical batch-size table")
    c.add_argument("--recipe", action="append",
                   help="states:actions:gamma, repeatable (default: the three table MDPs)")
    c.add_argument("--features", default="6,11,21,41")
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--n", type=int, default=5000)
    c.add_argument("--epsilon", type=float)
    c.add_argument("--vrtd-const", type=float)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare_batches)

    q = sub.add_parser("plotdata", help="plot-ready series from trace CSVs")
    q.add_argument("traces", help="trace directory (or a run output directory)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInput, TDSVRGError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
