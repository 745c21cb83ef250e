"""Command line: ``uqfair run|validate|plotdata``."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import DatasetError
from .estimators import TaskMismatch
from .experiments import run_experiment
from .fairness import TABLE_COLUMNS
from .gbt import NumericalGuardError, TrainingError

log = logging.getLogger("uqfair")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

FIGURES = {
    "calibration-bins": ("calibration", ["estimator", "bin", "mean_sigma", "empirical_std", "count", "seed"]),
    "abstention": ("abstain", ["estimator", "inclusion", "error", "sp", "eodds", "eopp", "di", "pp",
                               "fpr", "included_pct", "seed"]),
    "consistency-box": ("consistency", ["estimator", "individual", "std", "min", "max", "seed"]),
    "uasp": ("uasp-regression", ["approach", "uasp", "seed"]),
    "feature-shift": ("feature-shift", ["feature", "mean_wasserstein", "seed"]),
}

_METRIC_SHORT = {"error_rate": "error", "statistical_parity": "sp", "equalized_odds": "eodds",
                 "equal_opportunity": "eopp", "disparate_impact": "di",
                 "predictive_parity": "pp", "false_positive_rate": "fpr"}


class ReportError(ValueError):
    pass


def resolve_output_dir(path) -> Path:
    """Use ``path`` if missing or empty, else a fresh timestamped subdirectory."""
    path = Path(path)
    if not path.exists() or (path.is_dir() and not any(path.iterdir())):
        path.mkdir(parents=True, exist_ok=True)
        return path
    stamp = _dt.datetime.now().strftime("run-%Y%m%d-%H%M%S")
    sub, i = path / stamp, 1
    while sub.exists():
        sub = path / f"{stamp}-{i}"
        i += 1
    sub.mkdir(parents=True)
    return sub


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: ("" if r.get(c) is None else r.get(c)) for c in columns})
    return buf.getvalue()


def _fmt(agg):
    if not agg:
        return ""
    return f"{agg['mean']:.6g} ± {agg['std']:.3g}"


def summary_tables(report: dict) -> dict:
    """Aggregate tables (mean ± std over seeds) keyed by file name."""
    exp = report["config"]["experiment"]
    agg = report["aggregate"] or {}
    tables = {}
    if exp == "consistency":
        cols = ["estimator", "max_std", "mean_std"]
        rows = [{"estimator": e, "max_std": _fmt(v.get("max_std")), "mean_std": _fmt(v.get("mean_std"))}
                for e, v in agg.items()]
        tables["consistency.csv"] = _csv_text(cols, rows)
    elif exp == "calibration":
        cols = ["estimator", "nll", "nll_with_constant", "slope", "clamped"]
        rows = [{"estimator": e, **{c: _fmt(v.get(c)) for c in cols[1:]}} for e, v in agg.items()]
        tables["calibration.csv"] = _csv_text(cols, rows)
    elif exp == "fairness-binary":
        rows = []
        for i, rec in enumerate(report["per_seed"][0]["result"]["table"]):
            a = agg["table"][i]
            row = {"Approach": rec["approach"], "Included %": _fmt(a.get("included_pct"))}
            for name, col in zip(("error_rate", "statistical_parity", "equalized_odds",
                                  "equal_opportunity", "disparate_impact", "predictive_parity",
                                  "false_positive_rate"), TABLE_COLUMNS[1:8]):
                row[col] = _fmt(a.get(name))
            rows.append(row)
        tables["fairness.csv"] = _csv_text(list(TABLE_COLUMNS), rows)
    elif exp == "uasp-regression":
        rows = [{"approach": k, "uasp": _fmt(v)} for k, v in agg.get("uasp", {}).items()]
        tables["uasp.csv"] = _csv_text(["approach", "uasp"], rows)
    elif exp == "abstain":
        rows = [{"estimator": e, "selected_rate": _fmt(v.get("selected_rate"))} for e, v in agg.items()]
        tables["abstain.csv"] = _csv_text(["estimator", "selected_rate"], rows)
    elif exp == "feature-shift":
        rows = [{"feature": r["feature"], "mean_wasserstein": _fmt(a.get("mean_wasserstein"))}
                for r, a in zip(report["per_seed"][0]["result"]["features"], agg.get("features", []))]
        tables["feature_shift.csv"] = _csv_text(["feature", "mean_wasserstein"], rows)
    return tables


def plotdata(report: dict, figure: str) -> str:
    """Tidy CSV with one row per plotted point."""
    if figure not in FIGURES:
        raise ReportError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    need, cols = FIGURES[figure]
    exp = report.get("config", {}).get("experiment")
    if exp != need:
        raise ReportError(f"figure {figure!r} needs a {need!r} report, this one is {exp!r}")
    rows = []
    for rec in report["per_seed"]:
        seed, res = rec["seed"], rec["result"]
        if figure == "calibration-bins":
            for est, v in res.items():
                if est.startswith("_"):
                    continue
                rows += [{"estimator": est, "seed": seed, **b} for b in v["bins"]]
        elif figure == "abstention":
            for est, v in res.items():
                for pt in v["curve"]:
                    row = {"estimator": est, "seed": seed, "inclusion": pt["inclusion"],
                           "included_pct": pt["included_pct"]}
                    row.update({short: pt[name] for name, short in _METRIC_SHORT.items()})
                    rows.append(row)
        elif figure == "consistency-box":
            for est, v in res.items():
                for i, (s, lo, hi) in enumerate(zip(v["per_individual_std"], v["per_individual_min"],
                                                    v["per_individual_max"])):
                    rows.append({"estimator": est, "individual": i, "std": s, "min": lo,
                                 "max": hi, "seed": seed})
        elif figure == "uasp":
            rows += [{"approach": k, "uasp": v, "seed": seed} for k, v in res["uasp"].items()]
        elif figure == "feature-shift":
            rows += [{"feature": r["feature"], "mean_wasserstein": r["mean_wasserstein"],
                      "seed": seed} for r in res["features"]]
    return _csv_text(cols, rows)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(cfg.echo(), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    out = Path(cfg.output_dir)
    if not out.is_absolute() and cfg.base_dir is not None and not args.output_dir:
        out = cfg.base_dir / out
    report = run_experiment(cfg)
    out = resolve_output_dir(out)
    (out / "report.json").write_text(dump_report(report), encoding="utf-8")
    for name, text in summary_tables(report).items():
        (out / name).write_text(text, encoding="utf-8")
    print(out / "report.json")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    text = plotdata(report, args.figure)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); not an error
            devnull = open(os.devnull, "w")
            os.dup2(devnull.fileno(), sys.stdout.fileno())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uqfair", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a JSON config")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override the config's output_dir")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config and print the resolved settings")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    d = sub.add_parser("plotdata", help="extract a figure's points from a report as CSV")
    d.add_argument("report")
    d.add_argument("--figure", required=True, choices=sorted(FIGURES))
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReportError, TaskMismatch) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NumericalGuardError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
