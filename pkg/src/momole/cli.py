"""Command-line interface: ``momole {verify,fit,approx-mean,approx-density,eval}``.

Exit codes: 0 success, 1 verification or threshold failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import MomoleError, SchemaError
from .experiments import (
    DENSITY_COLUMNS,
    MEAN_COLUMNS,
    VERIFY_COLUMNS,
    ExperimentConfig,
    final_rows,
    load_config,
    run_approx_density,
    run_approx_mean,
    run_verify,
    verify_rows,
    write_csv,
)
from .fitting import Dataset, FitConfig, fit_em
from .mole import MoleModel, log_conditional_density, mean
from .serialization import load_model, save_model
from .targets import make_density

log = logging.getLogger("momole")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

CSV_HELP = """\
CSV columns
  verify          check, instances, max_error, tolerance, passed
  approx-mean     n, coordinate, coordinate_error, univariate_error,
                  induced_distance, components, status
  approx-density  n, coordinate, kl, standard_error, components, status
"""


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="random seed (required here or in the config)")
    p.add_argument("--out", help="output path (CSV for experiments, JSON for fit)")
    p.add_argument("--n-schedule", help="comma-separated, strictly increasing component counts")
    p.add_argument("--restarts", type=int)
    p.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    p.add_argument("--threshold", type=float, help="pass threshold at the largest n")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momole",
        description="Multiple-output mixtures of linear experts: checks, fits and approximation runs.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="randomized checks of the closure identities and norm axioms",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--corrupt", choices=["add", "multiply"], help=argparse.SUPPRESS)

    p = sub.add_parser("fit", help="fit a Gaussian-gated model by EM and save it as JSON")
    _add_common(p)
    p.add_argument("--data", help="CSV file with input columns followed by response columns")
    p.add_argument("--input-dim", type=int, help="number of leading input columns in --data")
    p.add_argument("--n", type=int, help="number of components")
    p.add_argument("--mode", choices=["starred", "full"])

    for name, what in (("approx-mean", "mean approximation"), ("approx-density", "density approximation")):
        p = sub.add_parser(name, help=f"{what} error as a function of n",
                           epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p)

    p = sub.add_parser("eval", help="evaluate a saved model at points read from stdin")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--mean", action="store_true",
                   help="evaluate the mean function (lines hold x); default is the density (lines hold x then y)")
    p.add_argument("--log", action="store_true", help="print log densities")
    return parser


def _config(args, kind: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = replace(cfg, kind=kind)
    overrides = {}
    for name in ("seed", "out", "restarts", "samples", "threshold"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "n_schedule", None):
        try:
            overrides["n_schedule"] = [int(v) for v in args.n_schedule.split(",")]
        except ValueError:
            raise SchemaError("n_schedule", "expected comma-separated integers") from None
    for name in ("data", "input_dim", "n", "mode", "corrupt"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides).validate()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_verify(cfg: ExperimentConfig) -> int:
    results = run_verify(cfg)
    width = max(len(r.check) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.check:<{width}}  n={r.instances:<5d} max_error={r.max_error:.3e}  tol={r.tolerance:.0e}",
              file=sys.stderr)
    text = write_csv(verify_rows(results), VERIFY_COLUMNS)
    _emit(text, cfg.out)
    failed = [r for r in results if not r.passed]
    if failed:
        first = failed[0]
        dump = {"check": first.check, "seed": cfg.seed, **first.failure}
        path = Path(cfg.out).with_suffix(".failure.json") if cfg.out else Path("verify.failure.json")
        path.write_text(json.dumps(dump, indent=1) + "\n")
        print(f"first failing instance written to {path}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_approx_mean(cfg: ExperimentConfig) -> int:
    rows, timings = run_approx_mean(cfg)
    _emit(write_csv(rows, MEAN_COLUMNS), cfg.out)
    for n, secs in timings:
        print(f"n={n}: {secs:.2f}s", file=sys.stderr)
    threshold = 0.2 if cfg.threshold is None else cfg.threshold
    last = final_rows(rows, cfg.n_schedule)
    if not last or any(r["status"] != "ok" for r in last):
        return EXIT_FAIL
    return EXIT_OK if last[0]["induced_distance"] < threshold else EXIT_FAIL


def cmd_approx_density(cfg: ExperimentConfig) -> int:
    rows, timings = run_approx_density(cfg)
    _emit(write_csv(rows, DENSITY_COLUMNS), cfg.out)
    for n, secs in timings:
        print(f"n={n}: {secs:.2f}s", file=sys.stderr)
    threshold = 0.25 if cfg.threshold is None else cfg.threshold
    last = final_rows(rows, cfg.n_schedule)
    if not last or any(r["status"] != "ok" for r in last):
        return EXIT_FAIL
    return EXIT_OK if all(r["kl"] < threshold for r in last) else EXIT_FAIL


def _read_csv_matrix(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        return np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)


def cmd_fit(cfg: ExperimentConfig) -> int:
    if cfg.data:
        try:
            table = _read_csv_matrix(cfg.data)
        except OSError as exc:
            raise SchemaError("data", str(exc)) from None
        if not 1 <= cfg.input_dim < table.shape[1]:
            raise SchemaError("input_dim", f"must be between 1 and {table.shape[1] - 1}")
        data = Dataset(table[:, : cfg.input_dim], table[:, cfg.input_dim:])
    else:
        specs = cfg.targets or [{"family": "normal", "mean": "sin", "sd": 0.1}]
        tgts = [make_density(s, cfg.grid["lower"], cfg.grid["upper"], f"targets[{j}]") for j, s in enumerate(specs)]
        rng = np.random.default_rng([cfg.seed, 30])
        X = tgts[0].lower + (tgts[0].upper - tgts[0].lower) * rng.random((cfg.train_samples or 5000, tgts[0].lower.shape[0]))
        Y = np.column_stack([t.mean_fn(X) + t.sd * rng.standard_normal(X.shape[0]) for t in tgts])
        data = Dataset(X, Y)
    report = fit_em(data, cfg.n, cfg.mode, FitConfig(restarts=cfg.restarts), np.random.default_rng([cfg.seed, 31]))
    print(f"n={cfg.n} mode={cfg.mode} restart={report.restart_index} iterations={report.iterations} "
          f"converged={report.converged} mean_loglik={report.log_likelihood:.10g}", file=sys.stderr)
    out = cfg.out or "model.json"
    save_model(report.model, out)
    print(f"model written to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    want_mean = args.mean or not isinstance(model, MoleModel)
    width = model.p if want_mean else model.p + model.q
    for lineno, line in enumerate(sys.stdin, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = np.array([float(v) for v in line.replace(",", " ").split()])
        except ValueError:
            raise SchemaError(f"stdin line {lineno}", "expected numbers") from None
        if vals.shape[0] != width:
            raise SchemaError(f"stdin line {lineno}", f"expected {width} numbers, got {vals.shape[0]}")
        x = vals[: model.p]
        if want_mean:
            print(" ".join(repr(float(v)) for v in mean(model, x)))
        else:
            ld = log_conditional_density(model, vals[model.p:], x)
            print(repr(ld if args.log else float(np.exp(ld))))
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "fit": cmd_fit,
    "approx-mean": cmd_approx_mean,
    "approx-density": cmd_approx_density,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "eval":
            return cmd_eval(args)
        cfg = _config(args, args.command)
        return COMMANDS[args.command](cfg)
    except SchemaError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MomoleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
