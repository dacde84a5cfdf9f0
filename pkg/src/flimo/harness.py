"""Experiment harness: data generation, single fits, replicated benchmarks.

Everything here is deterministic given the seeds; wall-clock timings are
collected but kept apart from the reproducible part of every output
(``timing`` key in JSON, ``seconds`` column in CSV).

Seeding: dataset ``i`` of a run with base seed ``b`` is generated from the
data stream ``(b, i)`` (disjoint from inference streams) and fitted with
the quantile matrix seeded ``b + i``; start points are drawn from
``SeedSequence([b + i, start])``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .models import get_model
from .optimize import empirical_distribution, multi_start, outlier_filter
from .statistics import ks_distance

SCHEMA_VERSION = 1


# ----------------------------------------------------------------------
# data files
# ----------------------------------------------------------------------
def write_dataset(path, y) -> None:
    """One dataset per CSV file, columns ``index,y``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y"])
        for i, v in enumerate(np.asarray(y, dtype=float)):
            w.writerow([i, repr(float(v))])


def read_dataset(path) -> np.ndarray:
    """Read the ``y`` column of a dataset CSV (a bare single column also works)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty data file")
    header = [h.strip() for h in rows[0]]
    col = header.index("y") if "y" in header else None
    body = rows[1:] if col is not None else rows
    col = 0 if col is None else col
    try:
        y = np.array([float(r[col]) for r in body])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: cannot parse data ({exc})") from None
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise ValueError(f"{path}: data must be a non-empty column of finite numbers")
    return y


def generate_datasets(model, theta, n_datasets, seed, out_dir, options=None) -> dict:
    """Write ``n_datasets`` CSV files plus ``manifest.json`` into ``out_dir``."""
    entry = get_model(model)
    opts = entry.options(options)
    theta = tuple(entry.true_theta(opts) if theta is None else theta)
    if n_datasets < 1:
        raise ValueError("need at least one dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(n_datasets):
        name = f"{model}_{i:04d}.csv"
        write_dataset(out / name, entry.generate(theta, seed, i, opts))
        files.append(name)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "model": model,
        "theta": [float(t) for t in theta],
        "param_names": list(entry.param_names(opts)),
        "options": opts,
        "seed": int(seed),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ----------------------------------------------------------------------
# single fit
# ----------------------------------------------------------------------
def fit_data(model, y, n_sim=None, method=None, starts=None, seed=0, options=None):
    """Fit one dataset; returns ``(best, all_results, names, settings)``."""
    entry = get_model(model)
    opts = entry.options(options)
    n_sim = entry.default_n_sim if n_sim is None else int(n_sim)
    starts = entry.default_starts if starts is None else int(starts)
    if n_sim < 1 or starts < 1:
        raise ValueError("n_sim and the number of starts must be positive")
    problem = entry.build_problem(y, n_sim, opts, method)
    R = problem.quantiles(seed)
    if problem.config.method == "brent":
        best = problem.solve(R)
        results = [best]
    else:
        sampler = entry.start_sampler(problem, y, seed, opts)
        best, results = multi_start(lambda x0: problem.solve(R, x0), starts, sampler)
    settings = {
        "model": model,
        "options": opts,
        "n_sim": n_sim,
        "starts": starts if problem.config.method != "brent" else 1,
        "seed": int(seed),
        "optimizer": asdict(problem.config),
    }
    return best, results, problem.names, settings


def fit(model, data_path, n_sim=None, method=None, starts=None, seed=0, options=None) -> dict:
    """Fit a data file and return the JSON-ready result record."""
    y = read_dataset(data_path)
    t0 = time.perf_counter()
    best, results, names, settings = fit_data(model, y, n_sim, method, starts, seed, options)
    seconds = time.perf_counter() - t0
    settings["data"] = {
        "path": str(data_path),
        "sha256": hashlib.sha256(Path(data_path).read_bytes()).hexdigest(),
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "config": settings,
        "result": best.to_dict(names),
        "starts": [
            {
                "restart_index": r.restart_index,
                "start": None if r.start is None else [float(v) for v in r.start],
                "objective": r.to_dict(names)["objective"],
                "converged": bool(r.converged),
            }
            for r in results
        ],
        "timing": {"seconds": seconds},
    }


def without_timing(record: dict) -> dict:
    return {k: v for k, v in record.items() if k != "timing"}


# ----------------------------------------------------------------------
# benchmark scenarios
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    id: str
    model: str
    theta: tuple
    n_sim: int
    starts: int = 1
    replicates: int = 100
    options: dict = field(default_factory=dict)
    method: str = None
    sweep: tuple = ()  # n_sim grid for a single-dataset dispersion sweep
    description: str = ""


def _ricker(sid, log_r=3.8, sigma=0.3, phi=10.0, desc=""):
    return Scenario(sid, "ricker", (log_r, sigma, phi), 100, starts=20, description=desc)


def _wf(sid, Ne, s, variant="nicholson_gaussian", **kw):
    return Scenario(sid, "wright-fisher", (s,), 200, options={"Ne": Ne, "variant": variant}, **kw)


SCENARIOS = {
    s.id: s
    for s in [
        Scenario("gandk-oflimo", "gandk", (3.0, 1.0, 2.0, 0.5), 1000, description="octile statistics, 1000 simulations"),
        Scenario("gandk-oflimo-short", "gandk", (3.0, 1.0, 2.0, 0.5), 10, description="octile statistics, 10 simulations"),
        Scenario(
            "gandk-wflimo", "gandk", (3.0, 1.0, 2.0, 0.5), 1, starts=20,
            options={"kind": "wflimo"}, description="Wasserstein on full samples, best of 20",
        ),
        _wf("wf-ne1e2-s0.1", 100, 0.1),
        _wf("wf-ne1e3-s0.1", 1000, 0.1),
        _wf("wf-ne1e3-s0.1-binomial", 1000, 0.1, "binomial"),
        _wf("wf-ne1e3-s0.1-beta-spikes", 1000, 0.1, "beta_spikes"),
        _wf("wf-ne1e3-s0.01", 1000, 0.01),
        _wf("wf-ne1e3-s1", 1000, 1.0),
        _wf(
            "wf-ne1e4-sweep", 10_000, 0.1, sweep=(10, 20, 50, 100, 200, 500, 1000),
            description="one dataset, dispersion of the estimate against n_sim",
        ),
        _ricker("ricker-base", desc="r = exp(3.8)"),
        _ricker("ricker-r22", log_r=3.8 - math.log(2.0)),
        _ricker("ricker-r89", log_r=3.8 + math.log(2.0)),
        _ricker("ricker-sigma0.15", sigma=0.15),
        _ricker("ricker-sigma0.6", sigma=0.6),
        _ricker("ricker-phi5", phi=5.0),
        _ricker("ricker-phi20", phi=20.0),
        *[
            Scenario(f"highdim-p{p}", "highdim", tuple([10.0] + [0.0] * (p - 1)), 10, options={"p": p})
            for p in (2, 5, 10, 20, 50)
        ],
        Scenario("normal-toy", "normal-toy", (0.0, 1.0), 1),
    ]
}


def get_scenario(sid: str) -> Scenario:
    try:
        return SCENARIOS[sid]
    except KeyError:
        raise KeyError(f"unknown scenario {sid!r}; known: {sorted(SCENARIOS)}") from None


def run_replicate(scenario: Scenario, index: int, seed: int, n_sim=None, data_index=None) -> dict:
    """Generate dataset ``index`` (or ``data_index``) and fit it with seed ``seed + index``."""
    entry = get_model(scenario.model)
    opts = entry.options(scenario.options)
    n_sim = scenario.n_sim if n_sim is None else n_sim
    y = entry.generate(scenario.theta, seed, index if data_index is None else data_index, opts)
    fit_seed = seed + index
    t0 = time.perf_counter()
    best, results, names, _ = fit_data(
        scenario.model, y, n_sim, scenario.method, scenario.starts, fit_seed, scenario.options
    )
    seconds = time.perf_counter() - t0
    row = {"scenario": scenario.id, "replicate": index, "seed": fit_seed}
    if scenario.sweep:
        row["n_sim"] = n_sim
    for name, v in zip(names, best.theta_hat):
        row[f"theta_hat_{name}"] = float(v)
    row.update(
        objective=float(best.objective_value),
        evaluations=int(sum(r.evaluations for r in results)),
        seconds=seconds,
        converged=bool(best.converged),
        outlier=False,
        _result=best,
    )
    return row


def _run_replicate_args(args):
    return run_replicate(*args)


def _map(tasks, parallel):
    if parallel and parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_replicate_args, tasks))
    return [_run_replicate_args(t) for t in tasks]


def _flag_outliers(rows, c=3.0):
    _, outliers = outlier_filter([r["_result"] for r in rows], c)
    ids = {id(r) for r in outliers}
    for row in rows:
        row["outlier"] = id(row["_result"]) in ids
        del row["_result"]
    return rows


def summarize(rows, group_key=None) -> list:
    """Per-parameter mean, median, sd and outlier count, recomputable from ``rows``."""
    groups = {}
    for r in rows:
        groups.setdefault((r["scenario"], r.get(group_key)) if group_key else (r["scenario"], None), []).append(r)
    out = []
    for (sid, g), rs in groups.items():
        params = [k for k in rs[0] if k.startswith("theta_hat_")]
        for k in params:
            v = np.array([r[k] for r in rs])
            rec = {"scenario": sid}
            if group_key:
                rec[group_key] = g
            rec.update(
                parameter=k[len("theta_hat_"):],
                n=len(v),
                mean=float(np.mean(v)),
                median=float(np.median(v)),
                sd=float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
                outliers=int(sum(r["outlier"] for r in rs)),
                failed=int(sum(not math.isfinite(r["objective"]) for r in rs)),
                median_seconds=float(np.median([r["seconds"] for r in rs])),
            )
            out.append(rec)
    return out


def sweep_slope(summary_rows, parameter) -> float:
    """Least-squares slope of log sd against log n_sim."""
    rs = [r for r in summary_rows if r["parameter"] == parameter]
    x = np.log([r["n_sim"] for r in rs])
    y = np.log([r["sd"] for r in rs])
    return float(np.polyfit(x, y, 1)[0])


def bench(scenario_id, replicates=None, seed=0, parallel=1, n_sim=None, sweep=None) -> dict:
    """Run a scenario; returns ``{"rows", "summary"}`` plus ``"slope"`` for sweeps."""
    sc = get_scenario(scenario_id)
    replicates = sc.replicates if replicates is None else int(replicates)
    if replicates < 1:
        raise ValueError("need at least one replicate")
    grid = tuple(sweep) if sweep else sc.sweep
    if grid:
        sc = Scenario(**{**asdict(sc), "sweep": grid})
        tasks = [(sc, i, seed, m, 0) for m in grid for i in range(replicates)]
    else:
        tasks = [(sc, i, seed, n_sim) for i in range(replicates)]
    rows = _map(tasks, parallel)
    if grid:
        for m in grid:
            _flag_outliers([r for r in rows if r["n_sim"] == m])
        summary = summarize(rows, "n_sim")
        names = sorted({r["parameter"] for r in summary})
        return {"rows": rows, "summary": summary, "slope": {p: sweep_slope(summary, p) for p in names}}
    _flag_outliers(rows)
    return {"rows": rows, "summary": summarize(rows)}


# ----------------------------------------------------------------------
# empirical distribution
# ----------------------------------------------------------------------
PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


def distribution(model, data_path, repeats, seed=0, options=None, method=None) -> dict:
    """Empirical parameter sample from ``repeats`` single-simulation fits."""
    entry = get_model(model)
    opts = entry.options(options)
    y = read_dataset(data_path)
    problem = entry.build_problem(y, 1, opts, method)
    x0 = entry.start_sampler(problem, y, seed, opts)(0)
    t0 = time.perf_counter()
    results = empirical_distribution(problem, int(repeats), int(seed), x0=x0)
    seconds = time.perf_counter() - t0
    rows = []
    for r in results:
        row = {"repeat": r.restart_index, "seed": seed + r.restart_index}
        row.update({f"theta_hat_{n}": float(v) for n, v in zip(problem.names, r.theta_hat)})
        row.update(objective=float(r.objective_value), converged=bool(r.converged), failed=r.failed)
        rows.append(row)
    quant = []
    for n in problem.names:
        v = np.array([row[f"theta_hat_{n}"] for row in rows if not row["failed"]])
        rec = {"parameter": n, "n": int(v.size)}
        rec.update({f"q{p:g}": float(np.quantile(v, p)) if v.size else math.nan for p in PROBS})
        quant.append(rec)
    return {"rows": rows, "summary": quant, "timing": {"seconds": seconds}}


def compare_samples(rows_a, rows_b) -> dict:
    """Kolmogorov-Smirnov distance per parameter between two emitted samples."""
    keys = [k for k in rows_a[0] if k.startswith("theta_hat_")]
    return {k[len("theta_hat_"):]: ks_distance([r[k] for r in rows_a], [r[k] for r in rows_b]) for k in keys}


def read_rows(path) -> list:
    """Load a CSV written by :func:`rows_to_csv` back into dicts of floats/strings."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        rec = {}
        for k, v in r.items():
            try:
                rec[k] = float(v)
            except ValueError:
                rec[k] = v
        out.append(rec)
    return out


def rows_to_csv(rows, exclude=()) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    cols = [c for c in rows[0] if c not in exclude]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items() if k in cols})
    return buf.getvalue()
