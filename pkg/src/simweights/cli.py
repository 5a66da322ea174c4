"""Command-line interface.

Subcommands: ``simulate``, ``weigh``, ``grid``, ``bootstrap``. Every flag
may also be given in a config file of ``key = value`` lines (keys are flag
names without the leading dashes, ``#`` starts a comment). The file is
taken from ``--config`` or the ``SIMWEIGHTS_CONFIG`` environment variable;
flags on the command line win.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import LOSSES, METHODS, bootstrap_632plus
from .data import Dataset, read_csv, write_csv
from .exceptions import DataError, NumericalFailure, UnknownSubgroup
from .experiment import SIMILARITIES, GridSpec, run_grid, write_results_csv, write_summary_json
from .scm import ScenarioKind, ScenarioSpec, make_shift_vector, simulate
from .weights import build_weighted_sample

log = logging.getLogger("simweights")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
CONFIG_ENV = "SIMWEIGHTS_CONFIG"


class UsageError(Exception):
    pass


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    try:
        return tuple(int(t) for t in items)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "off"):
        return None
    return float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file into a dict keyed by argparse dest."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.lstrip("-").replace("-", "_")] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simweights",
        description="Similarity-based weighting of external subgroup data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate multi-subgroup SCM data")
    p.add_argument("--scenario", default="covariate",
                   help="covariate | outcome | covariate_outcome (default: covariate)")
    p.add_argument("--externals", type=int, default=3, help="external subgroups (default: 3)")
    p.add_argument("--similarity", default="similar", choices=SIMILARITIES)
    p.add_argument("--target-n", type=int, default=15, help="target rows (default: 15)")
    p.add_argument("--external-n", type=int, default=30, help="rows per external (default: 30)")
    p.add_argument("--k", type=int, default=3, help="subgroup-specific covariates (default: 3)")
    p.add_argument("--c", type=int, default=1, help="global covariates (default: 1)")
    p.add_argument("--membership", default="blocks", choices=("blocks", "categorical"))
    p.add_argument("--out", default="simulated.csv", help="output CSV (default: simulated.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weigh", parents=[common], help="compute similarity weights for a CSV")
    p.add_argument("--input", required=False, help="input CSV (subgroup, y, covariates...)")
    p.add_argument("--target", default="0", help="target subgroup label (default: 0)")
    p.add_argument("--truncate-pct", type=_optional_float, default=None,
                   help="truncate below this percentile of target propensities (default: off)")
    p.add_argument("--no-auc-adjust", type=_bool, nargs="?", const=True, default=False,
                   help="use bare propensities as weights")
    p.add_argument("--ridge", type=float, default=1e-6, help="slope penalty (default: 1e-6)")
    p.add_argument("--out", default="weights.csv", help="output CSV (default: weights.csv)")
    p.add_argument("--diagnostics", default=None,
                   help="diagnostics JSON (default: output path with .json suffix)")
    p.set_defaults(func=cmd_weigh)

    p = sub.add_parser("grid", parents=[common], help="run the simulation study grid")
    p.add_argument("--kinds", type=_str_list, default=tuple(k.value for k in ScenarioKind))
    p.add_argument("--similarities", type=_str_list, default=SIMILARITIES)
    p.add_argument("--external-counts", type=_int_list, default=(1, 3, 5, 7))
    p.add_argument("--external-sizes", type=_int_list, default=(10, 30, 50))
    p.add_argument("--target-sizes", type=_int_list, default=(10, 15, 20))
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--replicates", type=int, default=30)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--truncate-pct", type=_optional_float, default=None)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: number of CPUs)")
    p.add_argument("--out", default="grid_results.csv")
    p.add_argument("--summary", default="grid_summary.json")
    p.set_defaults(func=cmd_grid, seed=2024)

    p = sub.add_parser("bootstrap", parents=[common], help=".632+ bootstrap per target subgroup")
    p.add_argument("--input", required=False, help="input CSV")
    p.add_argument("--target", default=None,
                   help="target subgroup label (default: every subgroup in turn)")
    p.add_argument("--methods", type=_str_list, default=METHODS)
    p.add_argument("--B", "-B", dest="B", type=int, default=1000, help="replicates (default 1000)")
    p.add_argument("--loss", default="absolute", choices=LOSSES)
    p.add_argument("--boxcox-lambda", type=_optional_float, default=None,
                   help="train on y**lambda, report errors on the original scale")
    p.add_argument("--truncate-pct", type=_optional_float, default=None)
    p.add_argument("--out-dir", default="bootstrap_out")
    p.set_defaults(func=cmd_bootstrap)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return args
    cfg = read_config(path)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys in {path}: {', '.join(unknown)}")
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.verbose = _bool(args.verbose)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"simweights: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"simweights: error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(args) or EXIT_OK
    except UsageError as exc:
        subparser.print_usage(sys.stderr)
        print(f"simweights {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"simweights {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"simweights {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def cmd_simulate(args) -> int:
    if args.externals < 1:
        raise UsageError("--externals must be at least 1")
    if args.target_n < 1 or args.external_n < 1:
        raise UsageError("--target-n and --external-n must be positive")
    try:
        kind = ScenarioKind.parse(args.scenario)
        shifts = make_shift_vector(args.externals, args.similarity)
        spec = ScenarioSpec(
            kind=kind,
            shift_vector=shifts,
            subgroup_sizes=[args.target_n] + [args.external_n] * args.externals,
            k=args.k,
            c=args.c,
            seed=args.seed,
            membership=args.membership,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sim = simulate(spec)
    write_csv(sim.data, args.out)
    print("shift vector: " + " ".join(repr(float(v)) for v in shifts))
    log.info("wrote %d rows to %s", sim.data.n, args.out)
    return EXIT_OK


def _load_input(args) -> Dataset:
    if not args.input:
        raise UsageError("--input is required")
    return read_csv(args.input)


def cmd_weigh(args) -> int:
    data = _load_input(args)
    target_label = str(args.target)
    labels = data.labels()
    if target_label not in labels:
        raise UnknownSubgroup(f"target subgroup {target_label!r} not found; available: {labels}")
    if len(labels) < 2:
        raise DataError(
            f"no external subgroups besides target {target_label!r}; available: {labels}"
        )
    if args.truncate_pct is not None and not 0 <= args.truncate_pct < 100:
        raise UsageError("--truncate-pct must lie in [0, 100)")
    target, externals = data.split(target_label)
    ws = build_weighted_sample(
        target, externals, args.truncate_pct, adjust_auc=not args.no_auc_adjust,
        ridge=args.ridge,
    )
    write_csv(ws.data, args.out, {"weight": ws.weights})
    # propensities go in a separate column block so the data columns stay in schema order
    _append_column(args.out, "propensity", ws.propensities)
    diag = {
        "target": target_label,
        "n_target": ws.n_target,
        "n_total": ws.data.n,
        "ess": ws.ess,
        "ess_ratio": ws.ess_ratio,
        "truncation_percentile": ws.truncation_percentile,
        "auc_adjusted": not args.no_auc_adjust,
        "subgroups": [
            {
                "label": str(c.external_label),
                "n": int(len(c.p_external)),
                "auc": c.auc,
                "auc_clamped": c.auc_clamped,
                "converged": bool(c.fit.converged),
                "iterations": int(c.fit.iterations),
            }
            for c in ws.comparisons
        ],
        "failed": [str(f) for f in ws.failed],
    }
    diag_path = args.diagnostics or str(Path(args.out).with_suffix(".json"))
    Path(diag_path).write_text(json.dumps(diag, indent=2) + "\n", encoding="utf-8")
    print(f"ESS {ws.ess:.3f} (ratio {ws.ess_ratio:.3f}) over {ws.data.n} rows")
    for s in diag["subgroups"]:
        print(f"  subgroup {s['label']}: AUC {s['auc']:.4f}")
    return EXIT_OK


def _append_column(path, name, values) -> None:
    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    rows[0].append(name)
    for row, v in zip(rows[1:], values):
        row.append(repr(float(v)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def cmd_grid(args) -> int:
    if args.jobs is not None and args.jobs < 1:
        raise UsageError("--jobs must be positive")
    try:
        spec = GridSpec(
            kinds=args.kinds,
            similarities=args.similarities,
            external_counts=args.external_counts,
            external_sizes=args.external_sizes,
            target_sizes=args.target_sizes,
            k=args.k,
            c=args.c,
            replicates=args.replicates,
            n_test=args.n_test,
            master_seed=args.seed,
            truncation_percentile=args.truncate_pct,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results, summary = run_grid(spec, jobs=args.jobs)
    write_results_csv(results, args.out)
    write_summary_json(summary, args.summary, spec)
    for name, v in summary.average_rmse.items():
        print(f"average RMSE {name:9s} {v:.4f}" if v is not None else f"{name}: n/a")
    for name, v in summary.average_ess_ratio.items():
        print(f"average ESS ratio {name:9s} {v:.4f}" if v is not None else f"{name}: n/a")
    n_failed = sum(summary.failed_counts.values())
    if n_failed:
        print(f"soft failures: {summary.failed_counts}", file=sys.stderr)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    data = _load_input(args)
    if args.B < 1:
        raise UsageError("-B must be at least 1")
    for m in args.methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    labels = data.labels()
    targets = labels if args.target is None else [str(args.target)]
    for t in targets:
        if t not in labels:
            raise UnknownSubgroup(f"target subgroup {t!r} not found; available: {labels}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    obs_rows, cdf_rows = [], []
    for t in targets:
        try:
            rep = bootstrap_632plus(
                data, t, methods=args.methods, B=args.B, loss=args.loss, seed=args.seed,
                boxcox_lambda=args.boxcox_lambda, truncation_percentile=args.truncate_pct,
            )
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"target {t!r}: {exc}") from None
        reports.append(rep.to_dict())
        for m, est in rep.methods.items():
            if est.bands_degenerate:
                log.warning("target %s, %s: some rows have < 2 out-of-bag replicates; "
                            "percentile bands are degenerate", t, m)
            for i in range(len(rep.target_outcome)):
                obs_rows.append([t, m, i, rep.target_outcome[i], est.mae[i], est.mae_p05[i],
                                 est.mae_p95[i], int(est.n_oob[i])])
            for v, cum in zip(est.cdf.values, est.cdf.cumulative):
                cdf_rows.append([t, m, v, cum])
            print(f"target {t} {m:8s} .632+ {est.estimate:.4f} "
                  f"(apparent {est.apparent:.4f}, oob {est.oob:.4f}, ESS {est.ess:.1f})")

    (out_dir / "bootstrap_report.json").write_text(
        json.dumps({"reports": reports}, indent=2, allow_nan=False) + "\n", encoding="utf-8"
    )
    _write_rows(out_dir / "per_observation.csv",
                ["target", "method", "row", "y", "mae", "p05", "p95", "n_oob"], obs_rows)
    _write_rows(out_dir / "cdf.csv", ["target", "method", "value", "cdf"], cdf_rows)
    return EXIT_OK


def _write_rows(path, header, rows) -> None:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return "" if not math.isfinite(v) else repr(float(v))
        return v

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[fmt(v) for v in r] for r in rows])


if __name__ == "__main__":
    sys.exit(main())
