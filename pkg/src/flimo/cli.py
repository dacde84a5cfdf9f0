"""Command line interface: ``flimo generate | fit | bench | distribution``.

Exit codes: 0 when the run completed (an unconverged fit still counts),
2 for bad input (unknown model, unreadable data, invalid option), 3 for
internal errors.

A JSON config file (``--config``) may set any long option, using
underscores for dashes, plus an ``options`` object of model options; its
values override the command line. ``FLIMO_SEED`` supplies the default seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .models import MODELS

log = logging.getLogger("flimo")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3
OPTIMIZERS = ("brent", "nelder-mead", "newton")


class InputError(ValueError):
    """Bad command line input."""


def _default_seed():
    raw = os.environ.get("FLIMO_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"FLIMO_SEED must be an integer, got {raw!r}") from None


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flimo", description="Fixed-landscape likelihood-free inference.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", choices=sorted(MODELS))
            sp.add_argument("--option", action="append", type=_key_value, default=[], metavar="KEY=VALUE",
                            help="model option, e.g. p=10 or variant=binomial")
        sp.add_argument("--seed", type=int, default=None, help="base seed (default: $FLIMO_SEED or 0)")
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--config", type=Path, default=None, help="JSON file overriding flags")

    g = sub.add_parser("generate", help="simulate datasets to CSV")
    common(g)
    g.add_argument("--theta", type=_floats, default=None, help="true parameters, comma separated")
    g.add_argument("--datasets", type=int, default=1)

    f = sub.add_parser("fit", help="fit one data file")
    common(f)
    f.add_argument("--data", type=Path)
    f.add_argument("--nsim", type=int, default=None)
    f.add_argument("--optimizer", choices=OPTIMIZERS, default=None)
    f.add_argument("--starts", type=int, default=None)
    f.add_argument("--format", choices=("json", "csv"), default="json")

    b = sub.add_parser("bench", help="replicated benchmark of a scenario")
    common(b, model=False)
    b.add_argument("scenario", nargs="?", default=None)
    b.add_argument("--list", action="store_true", help="list scenarios and exit")
    b.add_argument("--repeats", type=int, default=None, help="replicates (per n_sim value for sweeps)")
    b.add_argument("--nsim", type=int, default=None)
    b.add_argument("--sweep", type=_floats, default=None, help="n_sim grid for a dispersion sweep")
    b.add_argument("--parallel", type=int, default=1)
    b.add_argument("--format", choices=("csv", "json"), default="csv")

    d = sub.add_parser("distribution", help="empirical parameter distribution, n_sim = 1")
    common(d)
    d.add_argument("--data", type=Path)
    d.add_argument("--repeats", type=int, default=100)
    d.add_argument("--optimizer", choices=OPTIMIZERS, default=None)
    d.add_argument("--compare", type=Path, default=None, help="CSV sample to compare with (K-S distance)")
    d.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _apply_config(args):
    if args.config is None:
        return args
    try:
        cfg = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    opts = dict(args.option) if hasattr(args, "option") else {}
    for key, val in cfg.items():
        if key == "options":
            if not isinstance(val, dict):
                raise InputError("config 'options' must be an object")
            opts.update({k: str(v) for k, v in val.items()})
            continue
        if not hasattr(args, key) or key in ("command", "config"):
            raise InputError(f"unknown config key {key!r}")
        if key in ("data", "out", "compare") and val is not None:
            val = Path(val)
        if key in ("theta", "sweep") and val is not None:
            val = tuple(float(v) for v in val)
        setattr(args, key, val)
    if hasattr(args, "option"):
        args.option = list(opts.items())
    return args


def _method(name):
    return None if name is None else {"nelder-mead": "nelder_mead", "newton": "newton_box"}.get(name, name)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise InputError(f"--{n} is required")


def cmd_generate(args):
    _require(args, "model", "out")
    manifest = harness.generate_datasets(args.model, args.theta, args.datasets, args.seed, args.out, dict(args.option))
    log.info("wrote %d datasets to %s", len(manifest["files"]), args.out)


def cmd_fit(args):
    _require(args, "model", "data")
    if not args.data.is_file():
        raise InputError(f"data file not found: {args.data}")
    rec = harness.fit(args.model, args.data, args.nsim, _method(args.optimizer), args.starts, args.seed,
                      dict(args.option))
    if args.format == "json":
        _emit(json.dumps(rec, indent=2, sort_keys=True) + "\n", args.out)
    else:
        row = {"model": args.model, **{f"theta_hat_{k}": v for k, v in rec["result"]["theta_hat"].items()}}
        row.update({k: rec["result"][k] for k in ("objective", "evaluations", "converged")})
        row["seconds"] = rec["timing"]["seconds"]
        _emit(harness.rows_to_csv([row]), args.out)


def cmd_bench(args):
    if args.list:
        for sid, sc in harness.SCENARIOS.items():
            print(f"{sid:28s} {sc.model:14s} n_sim={sc.n_sim:<5d} {sc.description}")
        return
    _require(args, "scenario")
    sweep = tuple(int(v) for v in args.sweep) if args.sweep else None
    res = harness.bench(args.scenario, args.repeats, args.seed, args.parallel, args.nsim, sweep)
    out = args.out or Path(f"bench-{args.scenario}")
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        (out / "replicates.json").write_text(json.dumps(res["rows"], indent=2) + "\n")
        (out / "summary.json").write_text(json.dumps(res["summary"], indent=2) + "\n")
    else:
        (out / "replicates.csv").write_text(harness.rows_to_csv(res["rows"]))
        (out / "summary.csv").write_text(harness.rows_to_csv(res["summary"]))
    if "slope" in res:
        (out / "sweep.json").write_text(json.dumps({"loglog_sd_slope": res["slope"]}, indent=2) + "\n")
    for r in res["summary"]:
        extra = f" n_sim={r['n_sim']}" if "n_sim" in r else ""
        print(f"{r['scenario']}{extra} {r['parameter']}: median={r['median']:.6g} sd={r['sd']:.3g} "
              f"mean={r['mean']:.6g} outliers={r['outliers']}")
    for k, v in res.get("slope", {}).items():
        print(f"log-log slope of sd({k}) on n_sim: {v:.3f}")


def cmd_distribution(args):
    _require(args, "model", "data")
    if not args.data.is_file():
        raise InputError(f"data file not found: {args.data}")
    res = harness.distribution(args.model, args.data, args.repeats, args.seed, dict(args.option),
                               _method(args.optimizer))
    if args.format == "json":
        _emit(json.dumps({k: v for k, v in res.items() if k != "timing"}, indent=2, sort_keys=True) + "\n",
              args.out)
    else:
        _emit(harness.rows_to_csv(res["rows"]), args.out)
    for q in res["summary"]:
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in q.items()),
              file=sys.stderr)
    if args.compare is not None:
        other = harness.read_rows(args.compare)
        for k, v in harness.compare_samples(res["rows"], other).items():
            print(f"ks_distance {k} = {v:.6g}", file=sys.stderr)


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "bench": cmd_bench, "distribution": cmd_distribution}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args = _apply_config(args)
        if args.seed is None:
            args.seed = _default_seed()
        COMMANDS[args.command](args)
    except (InputError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"flimo: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"flimo: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
