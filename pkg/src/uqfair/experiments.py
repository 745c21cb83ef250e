"""Experiment runners behind the ``run`` command.

Each runner takes the resolved config and one repetition seed and returns a
JSON-ready dict. ``run_experiment`` repeats over seeds and aggregates.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .data import BINARY, SplitSpec, load_csv, split, synth_binary, synth_regression
from .estimators import estimate_many, point_estimate
from .evaluation import (bayes_nll_binary, bayes_nll_normal, binary_probabilities,
                         calibration_bins, consistency_many, nll_binary, nll_normal)
from .fairness import (abstention_curve, binary_metrics, feature_shift_report,
                       inclusion_mask, select_abstention_rate, uasp)

log = logging.getLogger(__name__)


def load_dataset(cfg: ExperimentConfig, seed: int):
    if "synthetic" in cfg.dataset:
        s = cfg.dataset["synthetic"]
        gen = synth_binary if s["task"] == BINARY else synth_regression
        return gen(s["n"], seed=s["seed"] + seed, scenario=s["scenario"])
    c = cfg.dataset["csv"]
    path = Path(c["path"])
    if not path.is_absolute() and cfg.base_dir is not None:
        path = cfg.base_dir / path
    return load_csv(path, c["outcome_column"], c["protected_column"], c["task"],
                    c.get("privileged_value"))


def _prepare(cfg: ExperimentConfig, seed: int):
    ds = load_dataset(cfg, seed)
    train, test = split(ds, SplitSpec(cfg.test_fraction, seed))
    return train, test, replace(cfg.pipeline, seed=seed)


def _estimates(cfg, train, test, pipe):
    return estimate_many(cfg.estimators, train, test, pipe, cfg.k, cfg.beta)


def run_consistency(cfg, seed):
    train, test, pipe = _prepare(cfg, seed)
    sw = cfg.sweep
    reports = consistency_many(train, test, cfg.estimators, pipe, sw["hyperparam"], sw["grid"],
                               sw.get("tau"), cfg.k)
    return {name: rep.to_dict() for name, rep in reports.items()}


def run_calibration(cfg, seed):
    train, test, pipe = _prepare(cfg, seed)
    preds = _estimates(cfg, train, test, pipe)
    out = {}
    y = test.outcome
    for name, p in preds.items():
        bins = calibration_bins(p, y, cfg.bins)
        row = {"bins": list(bins.rows()), "slope": bins.slope()}
        if cfg.task == BINARY:
            _, clamped = binary_probabilities(p)
            row.update(nll=nll_binary(p, y), clamped=clamped)
        else:
            row.update(nll=nll_normal(p, y), nll_with_constant=nll_normal(p, y, True))
        out[name] = row
    if test.has_ground_truth:
        out["_oracle"] = {"bayes_nll": bayes_nll_binary(test.true_mean) if cfg.task == BINARY
                          else bayes_nll_normal(test.true_sigma)}
    return out


def _abstain_parts(cfg, seed):
    train, test, pipe = _prepare(cfg, seed)
    test.require_two_groups()
    preds = _estimates(cfg, train, test, pipe)
    rates = [round(1.0 - inc, 10) for inc in cfg.inclusion]
    curves = {}
    for name, p in preds.items():
        curves[name] = abstention_curve(p.label, test.outcome, test.group, p.sigma, rates)
    return test, preds, curves


def run_abstain(cfg, seed):
    _, _, curves = _abstain_parts(cfg, seed)
    out = {}
    for name, curve in curves.items():
        try:
            chosen = select_abstention_rate(curve)
        except ValueError:
            chosen = None
        out[name] = {"curve": list(curve.rows()), "selected_rate": chosen}
    return out


def run_fairness_binary(cfg, seed):
    test, preds, curves = _abstain_parts(cfg, seed)
    table = []
    base_name, base = next(iter(preds.items()))
    full = binary_metrics(base.label, test.outcome, test.group)
    table.append({"approach": f"No abstention ({base_name})", "included_pct": 100.0,
                  **full.as_dict()})
    for name, curve in curves.items():
        rate = select_abstention_rate(curve)
        i = curve.rates.index(rate)
        table.append({"approach": name, "included_pct": 100.0 * curve.included[i],
                      "selected_rate": rate, **curve.metrics[i].as_dict()})
    return {"table": table}


def run_feature_shift(cfg, seed):
    test, preds, curves = _abstain_parts(cfg, seed)
    masks = {}
    for name, curve in curves.items():
        masks[name] = inclusion_mask(preds[name].sigma, select_abstention_rate(curve))
    rep = feature_shift_report(test.features, masks, test.feature_names)
    return {"features": list(rep.rows()), "top_feature": rep.top_feature,
            "top_distance": float(rep.distances[rep.argmax])}


def run_uasp(cfg, seed):
    train, test, pipe = _prepare(cfg, seed)
    test.require_two_groups()
    g = test.group
    rows = {"True": uasp(test.outcome, np.zeros(test.n), g)}
    base = point_estimate(train, test, pipe)
    rows["Baseline"] = uasp(base.mu, np.zeros(test.n), g)
    for name, p in _estimates(cfg, train, test, pipe).items():
        rows[name] = uasp(p.mu, p.sigma, g)
    return {"uasp": rows}


RUNNERS = {
    "consistency": run_consistency,
    "calibration": run_calibration,
    "abstain": run_abstain,
    "fairness-binary": run_fairness_binary,
    "feature-shift": run_feature_shift,
    "uasp-regression": run_uasp,
}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def aggregate(per_seed: list):
    """Mean and sample std over seeds for every numeric leaf.

    Lists of dicts are aggregated position by position; per-individual vectors
    are skipped because test rows differ between seeds.
    """
    first = per_seed[0]
    if isinstance(first, dict):
        out = {}
        for key in first:
            if key.startswith("per_individual"):
                continue
            vals = [d.get(key) for d in per_seed]
            agg = aggregate(vals)
            if agg is not None:
                out[key] = agg
        return out or None
    if isinstance(first, list):
        if any(not isinstance(v, list) or len(v) != len(first) for v in per_seed):
            return None
        parts = [aggregate([v[i] for v in per_seed]) for i in range(len(first))]
        return parts if any(p is not None for p in parts) else None
    if _is_num(first) or first is None:
        nums = [float(v) for v in per_seed if _is_num(v) and math.isfinite(v)]
        if not nums:
            return None
        std = float(np.std(nums, ddof=1)) if len(nums) > 1 else 0.0
        return {"mean": float(np.mean(nums)), "std": std, "n": len(nums)}
    return None


def run_experiment(cfg: ExperimentConfig) -> dict:
    runner = RUNNERS[cfg.experiment]
    t0 = time.perf_counter()

    def one(seed):
        log.info("%s: seed %d", cfg.experiment, seed)
        return {"seed": seed, "result": runner(cfg, seed)}

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            per_seed = list(pool.map(one, cfg.seeds))
    else:
        per_seed = [one(s) for s in cfg.seeds]
    return {
        "artifact": "uqfair",
        "artifact_version": __version__,
        "config": cfg.echo(),
        "per_seed": per_seed,
        "aggregate": aggregate([p["result"] for p in per_seed]),
        "wall_clock_seconds": time.perf_counter() - t0,
    }
