import json

import numpy as np
import pytest

from tdsvrg import analysis, io
from tdsvrg.cli import main
from tdsvrg.mdp import fixed_point


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_generate_deterministic(tmp_path):
    args = ["generate", "--states", "12", "--actions", "3", "--features", "4", "--gamma", "0.8",
            "--n", "300", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"transitions.csv", "rewards.csv", "features.csv", "markov_dataset.csv",
            "balanced_dataset.csv", "reset_transitions.csv", "manifest.json"} <= set(a)
    ds = io.load_dataset(tmp_path / "a" / "balanced_dataset.csv")
    assert ds.balanced and len(ds) >= 300
    man = json.loads(a["manifest.json"])
    assert man["reset_gamma"] == pytest.approx(0.9) and man["seed"] == 7


def test_generate_one_state(tmp_path):
    assert main(["generate", "--states", "1", "--actions", "1", "--features", "1",
                 "--gamma", "0.9", "--n", "20", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["lambda_A"] == pytest.approx(0.1)


def test_solve(tmp_path, capsys):
    main(["generate", "--states", "8", "--actions", "2", "--features", "3", "--gamma", "0.5",
          "--n", "200", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["solve", str(tmp_path), "--dataset", str(tmp_path / "markov_dataset.csv")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n_samples"] == 200 and out["lambda_A"] > 0


CONFIG = """
[environment]
states = 12
actions = 3
features = 4
gamma = 0.7
seed = 3

[experiment]
setting = {setting}
dataset_length = 400
n_runs = 2
master_seed = 5

[svrg]
algorithm = {alg}
theoretical = {regime}
epochs = {epochs}
{extra}
"""


def _config(tmp_path, setting="finite", alg="TDSVRG_FINITE", regime="finite_unbalanced",
            epochs=4, extra=""):
    p = tmp_path / "exp.ini"
    p.write_text(CONFIG.format(setting=setting, alg=alg, regime=regime, epochs=epochs,
                               extra=extra))
    return p


def test_run_deterministic_and_accounting(tmp_path):
    cfg = _config(tmp_path)
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "--jobs", "2", "--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    traces = sorted((tmp_path / "a" / "traces").glob("*.csv"))
    assert len(traces) == 2
    t = io.read_trace_csv(traces[0])
    M = json.loads(a["summary.json"])["learners"]["svrg"]["config"]["M"]
    np.testing.assert_array_equal(t["samples_used"], np.arange(5) * (400 + M))
    header = a[traces[0].relative_to(tmp_path / "a").as_posix()].decode().splitlines()[0]
    assert header == ",".join(io.TRACE_HEADER)


def test_run_epochs_zero(tmp_path):
    cfg = _config(tmp_path, epochs=0)
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "o")]) == 0
    t = io.read_trace_csv(next((tmp_path / "o" / "traces").glob("*.csv")))
    assert list(t["epoch"]) == [0]


def test_run_gtd2_grid(tmp_path):
    cfg = _config(tmp_path, alg="GTD2", regime="iid",
                  extra="alpha = 1/2, 1/4, 1/8, 1/16\nbeta_ratio = 2, 1, 1/2, 1/4\nm = 100")
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "o")]) == 0
    assert len(list((tmp_path / "o" / "traces").glob("*.csv"))) == 16 * 2


def test_run_markov_and_iid(tmp_path):
    cfg = _config(tmp_path, setting="markov", alg="TDSVRG_MARKOV", regime="markov",
                  epochs=2, extra="epsilon = 0.3\nr = auto\nbatch = fixed\nbatch_size = 500\n"
                                  "m = 300\nalpha = 0.1")
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "m")]) == 0
    cfg = _config(tmp_path, setting="iid", alg="TDSVRG_IID", regime="iid",
                  extra="batch = practical")
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "i")]) == 0


def test_partial_failure_exit(tmp_path):
    cfg = _config(tmp_path, alg="TD0", regime="iid", extra="alpha = 200\nm = 50")
    assert main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "o")]) == 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert len(summary["failures"]) == 2


def test_invalid_config_exit(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[environment]\nstates = 3\n")
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", str(tmp_path / "missing.ini")]) == 2


def test_compare_batches_round_trip(tmp_path):
    out = tmp_path / "table.csv"
    assert main(["compare-batches", "--recipe", "50:20:0.8", "--features", "6", "--seeds", "1",
                 "--n", "1000", "--out", str(out)]) == 0
    rows = io.read_batch_table(out)
    assert list(rows[0]) == io.TABLE_HEADER
    (m, ds), = analysis.table_instances(50, 20, 6, 0.8, [0], n=1000)
    td = [r for r in rows if r["method"] == "TDSVRG"][0]
    assert float(td["mean_batch"]) == 16 / fixed_point(ds, m).lambda_A
    assert td["seeds"] == "1"


def test_plotdata(tmp_path):
    cfg = _config(tmp_path)
    main(["run", str(cfg), "--jobs", "1", "--out", str(tmp_path / "o")])
    assert main(["plotdata", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "series_log10_f.csv").read_text().splitlines()
    assert lines[0] == "algorithm,samples_used,value,floored" and len(lines) == 6


def test_plotdata_zero_trace(tmp_path):
    d = tmp_path / "t"
    d.mkdir()
    (d / "a.csv").write_text(",".join(io.TRACE_HEADER) + "\nTD0,0,0,0,0,0,\n")
    assert main(["plotdata", str(d), "--out", str(tmp_path)]) == 0
    row = (tmp_path / "series_log10_f.csv").read_text().splitlines()[1].split(",")
    assert float(row[2]) == -300 and row[3] == "1"


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("TDSVRG_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["generate", "--states", "3", "--actions", "1", "--features", "2",
                 "--n", "30"]) == 0
    assert (tmp_path / "env" / "manifest.json").is_file()
