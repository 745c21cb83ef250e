"""Estimators that turn a training set into per-row (mu, sigma) on a test set.

Binary task: ``ensemble``, ``selective_ensemble``, ``self_inconsistency``,
``binomial_nll`` and ``random``. Regression task: ``ensemble``,
``normal_nll``, ``beta_nll`` and ``faithful_nll``. All are deterministic in
(data, config).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import gbt
from .data import BINARY, REGRESSION, Dataset
from .gbt import PipelineConfig
from .losses import BetaNLL, FaithfulNLL, Logistic, NormalNLL, SquaredError
from .predictions import Predictions

DEFAULT_K = 10

BINARY_DEFAULTS = PipelineConfig()
# the scale tree overfits residual noise without a split penalty
REGRESSION_DEFAULTS = PipelineConfig(n_trees=200, max_depth=4, gamma=5.0, min_leaf=10)


def default_config(task: str) -> PipelineConfig:
    return BINARY_DEFAULTS if task == BINARY else REGRESSION_DEFAULTS


class TaskMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleCounts:
    k: int
    k0: int
    k1: int

    def __post_init__(self):
        if self.k < 1 or self.k0 < 0 or self.k1 < 0 or self.k0 + self.k1 != self.k:
            raise ValueError(f"invalid ensemble counts k={self.k}, k0={self.k0}, k1={self.k1}")


@lru_cache(maxsize=None)
def _binomial_two_sided(k: int, m: int) -> Fraction:
    tail = sum(math.comb(k, i) for i in range(m + 1))
    return min(Fraction(1), Fraction(2 * tail, 2 ** k))


def selective_ensemble_uncertainty(counts: EnsembleCounts) -> float:
    """Two-sided exact Binomial(k, 1/2) p-value of the vote split; 1 = maximal doubt."""
    return float(_binomial_two_sided(counts.k, min(counts.k0, counts.k1)))


def self_inconsistency(counts: EnsembleCounts) -> float:
    """Probability that two distinct ensemble members disagree: 2 k0 k1 / (k (k-1))."""
    k = counts.k
    if k < 2:
        raise ValueError("self-inconsistency needs k >= 2")
    return 2 * counts.k0 * counts.k1 / (k * (k - 1))


def sigma_to_prob(sigma, label, return_clamped: bool = False):
    """Invert sigma = sqrt(p (1 - p)), taking the root on the side of ``label``.

    Inputs above 1/2 are clamped to 1/2; with ``return_clamped`` the number of
    clamped entries is returned as well.
    """
    s = np.asarray(sigma, dtype=float)
    over = s > 0.5
    s = np.clip(s, 0.0, 0.5)
    root = np.sqrt(np.maximum(1.0 - 4.0 * s * s, 0.0))
    p = np.where(np.asarray(label) == 1, (1.0 + root) / 2.0, (1.0 - root) / 2.0)
    if p.ndim == 0:
        p = float(p)
    if return_clamped:
        return p, int(np.sum(over))
    return p


# -- member training -------------------------------------------------------

def _check_task(ds: Dataset, task: str, name: str):
    if ds.task != task:
        raise TaskMismatch(f"{name} needs a {task} dataset, got {ds.task}")


def _member(train: Dataset, X_test, config: PipelineConfig, j: int):
    seed = config.seed + j
    rows = gbt.bootstrap_indices(train.n, seed)
    cfg = replace(config, seed=seed)
    if train.task == BINARY:
        loss = Logistic()
        model = gbt.fit(train.design[rows], train.outcome[rows], loss, cfg)
        p = loss.link(gbt.predict(model, X_test))[0]
        return (p >= 0.5).astype(float)
    loss = SquaredError()
    model = gbt.fit(train.design[rows], train.outcome[rows], loss, cfg)
    return gbt.predict(model, X_test)[:, 0]


def ensemble_members(train: Dataset, test: Dataset, k: int = DEFAULT_K,
                     config: PipelineConfig = PipelineConfig(), workers: int = 1) -> np.ndarray:
    """(k, n_test) member outputs: 0/1 labels (binary) or real predictions.

    Member j is fit on a bootstrap resample seeded with ``config.seed + j``.
    """
    if k < 2:
        raise ValueError("ensemble size k must be >= 2")
    jobs = range(1, k + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda j: _member(train, test.design, config, j), jobs))
    else:
        out = [_member(train, test.design, config, j) for j in jobs]
    return np.vstack(out)


def vote_counts(votes: np.ndarray):
    """Per-row (k, k0, k1) arrays from a (k, n) 0/1 vote matrix."""
    k = votes.shape[0]
    k1 = votes.sum(axis=0).astype(int)
    return k, k - k1, k1


def _majority(k0, k1):
    # even-k ties go to label 1
    return (k1 >= k0).astype(int), int(np.sum(k0 == k1))


def ensemble_from_members(members: np.ndarray, task: str) -> Predictions:
    if task == BINARY:
        k, k0, k1 = vote_counts(members)
        label, ties = _majority(k0, k1)
        return Predictions(k1 / k, np.sqrt(k0 * k1) / k, label, "std", True, {"ties": ties})
    return Predictions(members.mean(axis=0), members.std(axis=0))


def selective_from_members(members: np.ndarray) -> Predictions:
    k, k0, k1 = vote_counts(members)
    label, ties = _majority(k0, k1)
    table = np.array([float(_binomial_two_sided(k, m)) for m in range(k + 1)])
    pv = table[np.minimum(k0, k1)]
    return Predictions(k1 / k, pv, label, "pvalue", True, {"ties": ties})


def self_inconsistency_from_members(members: np.ndarray) -> Predictions:
    k, k0, k1 = vote_counts(members)
    if k < 2:
        raise ValueError("self-inconsistency needs k >= 2")
    label, ties = _majority(k0, k1)
    score = 2 * k0 * k1 / (k * (k - 1))
    return Predictions(k1 / k, score, label, "inconsistency", True, {"ties": ties})


def ensemble_estimate(train, test, config=PipelineConfig(), k=DEFAULT_K, workers=1) -> Predictions:
    return ensemble_from_members(ensemble_members(train, test, k, config, workers), train.task)


def selective_ensemble_estimate(train, test, config=PipelineConfig(), k=DEFAULT_K, workers=1):
    _check_task(train, BINARY, "selective_ensemble")
    return selective_from_members(ensemble_members(train, test, k, config, workers))


def self_inconsistency_estimate(train, test, config=PipelineConfig(), k=DEFAULT_K, workers=1):
    _check_task(train, BINARY, "self_inconsistency")
    return self_inconsistency_from_members(ensemble_members(train, test, k, config, workers))


def binomial_nll_estimate(train, test, config=PipelineConfig()) -> Predictions:
    _check_task(train, BINARY, "binomial_nll")
    loss = Logistic()
    model = gbt.fit(train.design, train.outcome, loss, config)
    p, sigma = loss.link(gbt.predict(model, test.design))
    return Predictions(p, sigma, (p >= 0.5).astype(int))


def regression_nll_estimate(train, test, config=PipelineConfig(), variant="normal",
                            beta=0.5) -> Predictions:
    _check_task(train, REGRESSION, f"{variant}_nll")
    if variant == "normal":
        loss = NormalNLL()
    elif variant == "beta":
        loss = BetaNLL(beta)
    elif variant == "faithful":
        loss = FaithfulNLL()
    else:
        raise ValueError(f"unknown NLL variant {variant!r}")
    model = gbt.fit(train.design, train.outcome, loss, config)
    return gbt.predict_linked(model, loss, test.design)


def point_estimate(train, test, config=PipelineConfig()) -> Predictions:
    """Plain squared-error regression with sigma = 0."""
    _check_task(train, REGRESSION, "point regression")
    loss = SquaredError()
    model = gbt.fit(train.design, train.outcome, loss, config)
    return gbt.predict_linked(model, loss, test.design)


def random_uncertainty(base: Predictions, seed: int) -> Predictions:
    """Keep the base labels and predictions, replace sigma with U[0, 1] noise."""
    sigma = np.random.default_rng(seed).random(len(base))
    return Predictions(base.mu, sigma, base.label, "random", False)


def random_estimate(train, test, config=PipelineConfig()) -> Predictions:
    base = binomial_nll_estimate(train, test, config)
    return random_uncertainty(base, config.seed + 7919)


_BINARY_ONLY = {"selective_ensemble", "self_inconsistency", "binomial_nll", "random"}
_REGRESSION_ONLY = {"normal_nll", "beta_nll", "faithful_nll"}
ESTIMATOR_NAMES = ("ensemble", "selective_ensemble", "self_inconsistency", "binomial_nll",
                   "normal_nll", "beta_nll", "faithful_nll", "random")


def supports(name: str, task: str) -> bool:
    if name not in ESTIMATOR_NAMES:
        raise ValueError(f"unknown estimator {name!r}")
    if task == BINARY:
        return name not in _REGRESSION_ONLY
    return name not in _BINARY_ONLY


def estimate(name: str, train: Dataset, test: Dataset, config=PipelineConfig(),
             k: int = DEFAULT_K, beta: float = 0.5, workers: int = 1) -> Predictions:
    """Run the named estimator."""
    if not supports(name, train.task):
        raise TaskMismatch(f"estimator {name!r} does not support task {train.task!r}")
    if name == "ensemble":
        return ensemble_estimate(train, test, config, k, workers)
    if name == "selective_ensemble":
        return selective_ensemble_estimate(train, test, config, k, workers)
    if name == "self_inconsistency":
        return self_inconsistency_estimate(train, test, config, k, workers)
    if name == "binomial_nll":
        return binomial_nll_estimate(train, test, config)
    if name == "random":
        return random_estimate(train, test, config)
    return regression_nll_estimate(train, test, config, name.split("_")[0], beta)


_ENSEMBLE_FAMILY = ("ensemble", "selective_ensemble", "self_inconsistency")


def estimate_many(names, train: Dataset, test: Dataset, config=PipelineConfig(),
                  k: int = DEFAULT_K, beta: float = 0.5, workers: int = 1) -> dict:
    """Run several estimators; the ensemble family shares one set of members."""
    out = {}
    members = None
    for name in names:
        if not supports(name, train.task):
            raise TaskMismatch(f"estimator {name!r} does not support task {train.task!r}")
        if name in _ENSEMBLE_FAMILY:
            if members is None:
                members = ensemble_members(train, test, k, config, workers)
            if name == "ensemble":
                out[name] = ensemble_from_members(members, train.task)
            elif name == "selective_ensemble":
                out[name] = selective_from_members(members)
            else:
                out[name] = self_inconsistency_from_members(members)
        else:
            out[name] = estimate(name, train, test, config, k, beta, workers)
    return out
