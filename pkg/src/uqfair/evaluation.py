"""Consistency sweeps, binned calibration tables and NLL scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .data import BINARY, Dataset
from .estimators import DEFAULT_K, estimate_many, sigma_to_prob
from .gbt import SWEEPABLE, PipelineConfig
from .losses import PROB_CLIP
from .predictions import Predictions

SIGMA_FLOOR = 1e-6
DEFAULT_GRIDS = {
    "max_depth": [1, 2, 3, 4, 5, 6, 7, 8],
    "gamma": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
}

Estimator = Union[str, Callable[[Dataset, Dataset, PipelineConfig], Predictions]]


@dataclass
class ConsistencyReport:
    estimator: str
    hyperparam: str
    grid: list
    per_individual_std: np.ndarray
    per_individual_min: np.ndarray
    per_individual_max: np.ndarray
    per_setting_error: List[float]
    tau: Optional[float] = None

    @property
    def max_std(self) -> float:
        return float(np.max(self.per_individual_std)) if len(self.per_individual_std) else 0.0

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "hyperparam": self.hyperparam,
            "grid": list(self.grid),
            "tau": self.tau,
            "max_std": self.max_std,
            "mean_std": float(np.mean(self.per_individual_std)),
            "per_setting_error": list(self.per_setting_error),
            "per_individual_std": self.per_individual_std.tolist(),
            "per_individual_min": self.per_individual_min.tolist(),
            "per_individual_max": self.per_individual_max.tolist(),
        }


def _setting_error(pred: Predictions, y: np.ndarray, task: str) -> float:
    if task == BINARY:
        label = pred.label if pred.label is not None else (pred.mu >= 0.5).astype(int)
        return float(np.mean(label != y))
    return float(np.sqrt(np.mean((y - pred.mu) ** 2)))


def _report(name, hyperparam, grid, tau, sigmas, errors) -> ConsistencyReport:
    S = np.vstack(sigmas)
    return ConsistencyReport(name, hyperparam, list(grid), S.std(axis=0), S.min(axis=0),
                             S.max(axis=0), errors, tau)


def consistency_many(train: Dataset, test: Dataset, estimators: Sequence[Estimator],
                     base_config: PipelineConfig, hyperparam: str = "max_depth",
                     grid: Optional[Sequence] = None, tau: Optional[float] = None,
                     k: int = DEFAULT_K) -> Dict[str, ConsistencyReport]:
    """Sweep one hyperparameter and report how much each row's sigma moves.

    Per-individual spread is the population standard deviation of that row's
    sigma across the grid. Named ensemble estimators share members per setting.
    """
    if hyperparam not in SWEEPABLE:
        raise ValueError(f"cannot sweep {hyperparam!r}; choose from {SWEEPABLE}")
    grid = list(DEFAULT_GRIDS[hyperparam] if grid is None else grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    base = getattr(base_config, hyperparam)
    if tau is not None:
        far = [v for v in grid if abs(v - base) > tau]
        if far:
            raise ValueError(f"grid values {far} lie further than tau={tau} from {base}")
    names = [e if isinstance(e, str) else getattr(e, "__name__", "custom") for e in estimators]
    sigmas = {n: [] for n in names}
    errors = {n: [] for n in names}
    for v in grid:
        cfg = replace(base_config, **{hyperparam: v})
        named = [e for e in estimators if isinstance(e, str)]
        preds = estimate_many(named, train, test, cfg, k) if named else {}
        for e, n in zip(estimators, names):
            p = preds[e] if isinstance(e, str) else e(train, test, cfg)
            sigmas[n].append(p.sigma)
            errors[n].append(_setting_error(p, test.outcome, test.task))
    return {n: _report(n, hyperparam, grid, tau, sigmas[n], errors[n]) for n in names}


def consistency(train, test, estimator: Estimator, base_config: PipelineConfig,
                hyperparam: str = "max_depth", grid=None, tau=None,
                k: int = DEFAULT_K) -> ConsistencyReport:
    reports = consistency_many(train, test, [estimator], base_config, hyperparam, grid, tau, k)
    return next(iter(reports.values()))


@dataclass
class CalibrationBins:
    mean_sigma: np.ndarray
    empirical_std: np.ndarray
    count: np.ndarray
    residual_mean: np.ndarray

    @property
    def G(self) -> int:
        return len(self.count)

    def slope(self) -> float:
        """Least-squares slope of empirical std on mean predicted sigma."""
        x, yv = self.mean_sigma, self.empirical_std
        xc = x - x.mean()
        denom = float(np.sum(xc * xc))
        if denom == 0:
            return float("nan")
        return float(np.sum(xc * (yv - yv.mean())) / denom)

    def pooled_std(self) -> float:
        """Overall residual std recovered from per-bin moments."""
        n = self.count.sum()
        mean = np.sum(self.count * self.residual_mean) / n
        within = np.sum(self.count * self.empirical_std ** 2)
        between = np.sum(self.count * (self.residual_mean - mean) ** 2)
        return float(np.sqrt((within + between) / n))

    def rows(self):
        for b in range(self.G):
            yield {"bin": b, "mean_sigma": float(self.mean_sigma[b]),
                   "empirical_std": float(self.empirical_std[b]), "count": int(self.count[b])}


def calibration_bins(predictions: Predictions, outcomes, G: int = 5) -> CalibrationBins:
    """Equal-count bins by predicted sigma; per-bin std of ``y - mu``.

    Ties in sigma keep row order; leftover rows go one each to the leading bins.
    """
    y = np.asarray(outcomes, dtype=float)
    n = len(y)
    if G < 1:
        raise ValueError("G must be >= 1")
    if G > n:
        raise ValueError(f"G={G} exceeds the number of test rows {n}")
    order = np.argsort(predictions.sigma, kind="stable")
    resid = (y - predictions.mu)[order]
    sig = predictions.sigma[order]
    sizes = np.full(G, n // G)
    sizes[: n % G] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    ms, es, rm = np.empty(G), np.empty(G), np.empty(G)
    for b in range(G):
        sl = slice(edges[b], edges[b + 1])
        ms[b] = sig[sl].mean()
        es[b] = resid[sl].std()
        rm[b] = resid[sl].mean()
    return CalibrationBins(ms, es, sizes, rm)


def binary_probabilities(predictions: Predictions):
    """Probability of y = 1 used for NLL scoring, plus how many sigmas were clamped.

    Estimators flagged ``prob_from_sigma`` get p back from sigma (clamped to
    [0, 1/2]) and their label; the rest use ``mu`` directly.
    """
    if predictions.prob_from_sigma:
        if predictions.label is None:
            raise ValueError("sigma-to-probability conversion needs labels")
        return sigma_to_prob(predictions.sigma, predictions.label, return_clamped=True)
    return predictions.mu, 0


def nll_binary(predictions: Predictions, outcomes) -> float:
    y = np.asarray(outcomes, dtype=float)
    if len(y) == 0:
        raise ValueError("empty test set")
    p, _ = binary_probabilities(predictions)
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def nll_normal(predictions: Predictions, outcomes, include_constant: bool = False) -> float:
    y = np.asarray(outcomes, dtype=float)
    if len(y) == 0:
        raise ValueError("empty test set")
    s = np.maximum(predictions.sigma, SIGMA_FLOOR)
    z = (y - predictions.mu) / s
    v = float(np.mean(np.log(s) + 0.5 * z * z))
    if include_constant:
        v += 0.5 * math.log(2 * math.pi)
    return v


def nll(predictions: Predictions, outcomes, task: str, include_constant: bool = False) -> float:
    if task == BINARY:
        return nll_binary(predictions, outcomes)
    return nll_normal(predictions, outcomes, include_constant)


def bayes_nll_binary(p_true) -> float:
    """Expected NLL of the true probabilities: mean binary entropy."""
    p = np.clip(np.asarray(p_true, dtype=float), PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(p * np.log(p) + (1 - p) * np.log(1 - p)))


def bayes_nll_normal(sigma_true) -> float:
    return float(np.mean(np.log(np.maximum(sigma_true, SIGMA_FLOOR))) + 0.5)
