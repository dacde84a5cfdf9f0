import csv
import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from flimo import harness
from flimo.cli import main
from flimo.models import MODELS, get_model, normal_toy
from flimo.optimize import OptimizerConfig
from flimo.randomness import make_quantile_matrix
from flimo.statistics import ks_distance


def run(*argv):
    return main([str(a) for a in argv])


def fit_json(capsys, *argv):
    assert run("fit", *argv) == 0
    return json.loads(capsys.readouterr().out)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def normal_data(tmp_path):
    assert run("generate", "--model", "normal-toy", "--seed", 3, "--out", tmp_path / "nt") == 0
    return tmp_path / "nt" / "normal-toy_0000.csv"


# ----------------------------------------------------------------------
# generate
# ----------------------------------------------------------------------
def test_generate_gandk_hundred_datasets(tmp_path):
    out = tmp_path / "gk"
    assert run("generate", "--model", "gandk", "--theta", "3,1,2,0.5", "--datasets", 100, "--seed", 1, "--out", out) == 0
    files = sorted(out.glob("gandk_*.csv"))
    assert len(files) == 100
    assert all(len(read_csv(f)) == 1000 for f in files)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["theta"] == [3.0, 1.0, 2.0, 0.5] and len(manifest["files"]) == 100


def test_generate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("generate", "--model", "ricker", "--datasets", 3, "--seed", 9, "--out", tmp_path / d) == 0
    for name in ("ricker_0000.csv", "ricker_0002.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    run("generate", "--model", "ricker", "--seed", 10, "--out", tmp_path / "c")
    assert (tmp_path / "a" / "ricker_0000.csv").read_bytes() != (tmp_path / "c" / "ricker_0000.csv").read_bytes()


def test_generate_wright_fisher_sampling_points(tmp_path):
    assert run("generate", "--model", "wright-fisher", "--option", "Ne=100", "--out", tmp_path) == 0
    y = harness.read_dataset(tmp_path / "wright-fisher_0000.csv")
    assert y.shape == (10,) and np.all((y >= 0) & (y <= 30))


def test_generate_rejects_bad_input(tmp_path):
    assert run("generate", "--model", "gandk", "--theta", "3,-1,2,0.5", "--out", tmp_path) == 2
    assert run("generate", "--model", "gandk", "--theta", "3,1,2", "--out", tmp_path) == 2
    assert run("generate", "--model", "nope", "--out", tmp_path) == 2
    assert run("generate", "--model", "highdim", "--option", "p=1", "--out", tmp_path) == 2
    assert run("generate", "--model", "gandk") == 2


# ----------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------
def test_fit_normal_toy_matches_closed_form(capsys, normal_data):
    rec = fit_json(capsys, "--model", "normal-toy", "--data", normal_data, "--seed", 21)
    y = harness.read_dataset(normal_data)
    mu, sigma = normal_toy.analytic_normal_oracle(y, make_quantile_matrix(21, 1, 100).entries[0])
    th = rec["result"]["theta_hat"]
    assert abs(th["mu"] - mu) <= 1e-6 and abs(th["sigma"] - sigma) <= 1e-6
    assert rec["schema_version"] == harness.SCHEMA_VERSION
    assert rec["config"]["data"]["sha256"] and "seconds" in rec["timing"]


def test_fit_rerun_identical_apart_from_timing(capsys, normal_data):
    a = fit_json(capsys, "--model", "normal-toy", "--data", normal_data, "--seed", 4)
    b = fit_json(capsys, "--model", "normal-toy", "--data", normal_data, "--seed", 4)
    assert harness.without_timing(a) == harness.without_timing(b)


def test_fit_wright_fisher_large_population(capsys, tmp_path):
    run("generate", "--model", "wright-fisher", "--option", "Ne=10000", "--out", tmp_path)
    rec = fit_json(capsys, "--model", "wright-fisher", "--option", "Ne=10000", "--nsim", 200,
                   "--data", tmp_path / "wright-fisher_0000.csv")
    assert abs(rec["result"]["theta_hat"]["s"] - 0.1) <= 0.01


def test_fit_csv_format(capsys, normal_data, tmp_path):
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--format", "csv", "--out", tmp_path / "r.csv") == 0
    (row,) = read_csv(tmp_path / "r.csv")
    assert set(row) >= {"theta_hat_mu", "theta_hat_sigma", "objective", "converged", "seconds"}


def test_fit_exit_codes(tmp_path, normal_data):
    bad = tmp_path / "bad.csv"
    bad.write_text("index,y\n0,abc\n")
    assert run("fit", "--model", "normal-toy", "--data", bad) == 2
    assert run("fit", "--model", "normal-toy", "--data", tmp_path / "missing.csv") == 2
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--nsim", 3) == 2
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--option", "zz=1") == 2
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--optimizer", "brent") == 2
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--optimizer", "sgd") == 2
    assert run() == 2
    assert run("--help") == 0


def test_fit_internal_error_exit_code(monkeypatch, normal_data):
    def boom(*a, **k):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(harness, "fit", boom)
    assert run("fit", "--model", "normal-toy", "--data", normal_data) == 3


def test_fit_non_convergence_still_exits_zero(capsys, monkeypatch, normal_data):
    entry = get_model("normal-toy")
    capped = replace(entry, _build=lambda y, n, o: normal_toy.build_problem(
        y, m=o["m"], config=OptimizerConfig(max_iterations=1)))
    monkeypatch.setitem(MODELS, "normal-toy", capped)
    rec = fit_json(capsys, "--model", "normal-toy", "--data", normal_data)
    assert rec["result"]["converged"] is False


def test_config_file_overrides_flags(capsys, tmp_path, normal_data):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "options": {"m": 40}}))
    rec = fit_json(capsys, "--model", "normal-toy", "--data", normal_data, "--seed", 1, "--config", cfg)
    assert rec["config"]["seed"] == 5 and rec["config"]["options"]["m"] == 40
    cfg.write_text(json.dumps({"model": "normal-toy", "data": str(normal_data), "seed": 5, "options": {"m": 40}}))
    assert harness.without_timing(fit_json(capsys, "--config", cfg)) == harness.without_timing(rec)
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--config", cfg) == 2
    cfg.write_text("[1, 2]")
    assert run("fit", "--model", "normal-toy", "--data", normal_data, "--config", cfg) == 2


def test_seed_from_environment(capsys, monkeypatch, normal_data):
    monkeypatch.setenv("FLIMO_SEED", "7")
    assert fit_json(capsys, "--model", "normal-toy", "--data", normal_data)["config"]["seed"] == 7
    assert fit_json(capsys, "--model", "normal-toy", "--data", normal_data, "--seed", 2)["config"]["seed"] == 2
    monkeypatch.setenv("FLIMO_SEED", "seven")
    assert run("fit", "--model", "normal-toy", "--data", normal_data) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "flimo", "bench", "--list"], capture_output=True, text=True)
    assert out.returncode == 0 and "ricker-base" in out.stdout


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------
def test_bench_writes_recomputable_summary(tmp_path, capsys):
    out = tmp_path / "b"
    assert run("bench", "normal-toy", "--repeats", 6, "--seed", 2, "--out", out) == 0
    rows = read_csv(out / "replicates.csv")
    assert list(rows[0]) == ["scenario", "replicate", "seed", "theta_hat_mu", "theta_hat_sigma", "objective",
                             "evaluations", "seconds", "converged", "outlier"]
    assert [int(r["seed"]) for r in rows] == [2 + i for i in range(6)]
    summary = {r["parameter"]: r for r in read_csv(out / "summary.csv")}
    for p in ("mu", "sigma"):
        v = np.array([float(r[f"theta_hat_{p}"]) for r in rows])
        assert float(summary[p]["mean"]) == float(np.mean(v))
        assert float(summary[p]["median"]) == float(np.median(v))
        assert float(summary[p]["sd"]) == float(np.std(v, ddof=1))
        assert int(summary[p]["outliers"]) == sum(r["outlier"] == "True" for r in rows)


def test_bench_reproducible_and_parallel_independent(tmp_path):
    def load(d):
        return [{k: v for k, v in r.items() if k != "seconds"} for r in read_csv(d / "replicates.csv")]

    assert run("bench", "highdim-p2", "--repeats", 4, "--out", tmp_path / "a") == 0
    assert run("bench", "highdim-p2", "--repeats", 4, "--out", tmp_path / "b", "--parallel", 2) == 0
    assert load(tmp_path / "a") == load(tmp_path / "b")


def test_bench_sweep_and_listing(tmp_path, capsys):
    out = tmp_path / "s"
    assert run("bench", "wf-ne1e4-sweep", "--sweep", "10,40", "--repeats", 4, "--out", out) == 0
    rows = read_csv(out / "replicates.csv")
    assert sorted({int(r["n_sim"]) for r in rows}) == [10, 40]
    assert "loglog_sd_slope" in json.loads((out / "sweep.json").read_text())
    assert run("bench", "--list") == 0
    assert "wf-ne1e3-s0.1" in capsys.readouterr().out
    assert run("bench", "no-such-scenario", "--out", out) == 2
    assert run("bench", "--out", out) == 2


def test_bench_json_format(tmp_path):
    assert run("bench", "normal-toy", "--repeats", 2, "--format", "json", "--out", tmp_path) == 0
    rows = json.loads((tmp_path / "replicates.json").read_text())
    assert len(rows) == 2 and rows[1]["replicate"] == 1


# ----------------------------------------------------------------------
# distribution
# ----------------------------------------------------------------------
def test_distribution_single_repeat(tmp_path, normal_data):
    assert run("distribution", "--model", "normal-toy", "--data", normal_data, "--repeats", 1,
               "--out", tmp_path / "d.csv") == 0
    assert len(read_csv(tmp_path / "d.csv")) == 1


def test_distribution_same_seed_identical(tmp_path, normal_data, capsys):
    for name in ("a.csv", "b.csv"):
        assert run("distribution", "--model", "normal-toy", "--data", normal_data, "--repeats", 20,
                   "--seed", 3, "--out", tmp_path / name) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    capsys.readouterr()
    assert run("distribution", "--model", "normal-toy", "--data", normal_data, "--repeats", 20,
               "--seed", 3, "--out", tmp_path / "c.csv", "--compare", tmp_path / "a.csv") == 0
    err = capsys.readouterr().err
    assert "ks_distance mu = 0" in err and "ks_distance sigma = 0" in err
    rows = harness.read_rows(tmp_path / "a.csv")
    assert harness.compare_samples(rows, rows) == {"mu": 0.0, "sigma": 0.0}


def test_distribution_modes_agree_for_gandk(tmp_path):
    """Median of 1024 single-simulation fits lies in the band of point estimates."""
    run("generate", "--model", "gandk", "--seed", 0, "--out", tmp_path)
    res = harness.distribution("gandk", tmp_path / "gandk_0000.csv", 1024, seed=0, options={"kind": "wflimo"})
    g = np.array([r["theta_hat_g"] for r in res["rows"] if not r["failed"]])
    assert len(g) == 1024
    point = harness.bench("gandk-wflimo", 30, seed=0)
    (gs,) = [s for s in point["summary"] if s["parameter"] == "g"]
    assert abs(np.median(g) - gs["median"]) <= gs["sd"]
    assert ks_distance(g, g) == 0.0
