"""Tabular datasets, CSV ingestion, splitting and synthetic generators.

Synthetic scenarios carry the true per-row mean and noise level so that
calibration can be checked against a known answer.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

BINARY = "binary"
REGRESSION = "regression"
TASKS = (BINARY, REGRESSION)


class DatasetError(ValueError):
    """Base class for dataset validation failures."""


class SchemaError(DatasetError):
    pass


class ParseError(DatasetError):
    pass


class DomainError(DatasetError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    protected: np.ndarray
    outcome: np.ndarray
    task: str
    feature_names: tuple = ()
    privileged_value: object = None
    true_mean: Optional[np.ndarray] = None
    true_sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.outcome, dtype=float)
        a = np.asarray(self.protected)
        n = X.shape[0]
        if n < 1 or X.shape[1] < 1:
            raise DatasetError("dataset needs n >= 1 rows and d >= 1 features")
        if len(y) != n or len(a) != n:
            raise DatasetError(
                f"length mismatch: features {n}, protected {len(a)}, outcome {len(y)}")
        if self.task not in TASKS:
            raise DatasetError(f"unknown task {self.task!r}")
        if self.task == BINARY:
            bad = np.flatnonzero((y != 0) & (y != 1))
            if bad.size:
                raise DomainError(f"binary outcome must be 0/1; row {bad[0] + 1} has {y[bad[0]]}")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DatasetError("feature_names length does not match feature count")
        priv = self.privileged_value
        if priv is None:
            values = _unique(a)
            priv = values[-1]
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "protected", _frozen(a))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "privileged_value", priv)
        for name in ("true_mean", "true_sigma"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if len(v) != n:
                    raise DatasetError(f"{name} length mismatch")
                object.__setattr__(self, name, _frozen(v))
        if self.true_sigma is not None and np.any(self.true_sigma < 0):
            raise DatasetError("true_sigma must be nonnegative")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def group(self) -> np.ndarray:
        """1 for the privileged group, 0 otherwise."""
        return (self.protected == self.privileged_value).astype(int)

    @property
    def design(self) -> np.ndarray:
        """Model inputs: the features followed by the privileged-group indicator."""
        return np.column_stack([self.features, self.group])

    @property
    def has_ground_truth(self) -> bool:
        return self.true_sigma is not None

    def require_two_groups(self):
        g = self.group
        if g.min() == g.max():
            raise DatasetError("fairness operations need both a privileged and an unprivileged group")

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            features=self.features[idx],
            protected=self.protected[idx],
            outcome=self.outcome[idx],
            task=self.task,
            feature_names=self.feature_names,
            privileged_value=self.privileged_value,
            true_mean=None if self.true_mean is None else self.true_mean[idx],
            true_sigma=None if self.true_sigma is None else self.true_sigma[idx],
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _unique(a):
    try:
        return sorted(set(a.tolist()))
    except TypeError:
        return sorted(set(map(str, a.tolist())))


def _parse_category(s: str):
    try:
        v = float(s)
    except ValueError:
        return s
    return int(v) if v.is_integer() else v


def load_csv(path, outcome_column: str, protected_column: str, task: str,
             privileged_value=None) -> Dataset:
    """Read a headed CSV; every column other than outcome/protected is a feature.

    Categorical features must already be numerically encoded. Missing values
    are rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    for col in (outcome_column, protected_column):
        if col not in header:
            raise SchemaError(f"missing column {col!r} in {path}")
    oi, pi = header.index(outcome_column), header.index(protected_column)
    feat_idx = [j for j in range(len(header)) if j not in (oi, pi)]
    if not feat_idx:
        raise SchemaError("no feature columns left after removing outcome and protected columns")
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    X = np.empty((len(rows), len(feat_idx)))
    y = np.empty(len(rows))
    protected = []
    for i, row in enumerate(rows):
        rownum = i + 1
        if len(row) != len(header):
            raise ParseError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
        for k, j in enumerate(feat_idx):
            X[i, k] = _parse_number(row[j], rownum, header[j])
        y[i] = _parse_number(row[oi], rownum, header[oi])
        if row[pi].strip() == "":
            raise ParseError(f"row {rownum}, column {header[pi]!r}: missing value")
        protected.append(_parse_category(row[pi].strip()))

    if task == BINARY:
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DomainError(
                f"row {bad[0] + 1}: binary outcome must be 0 or 1, got {y[bad[0]]:g}")

    a = np.array(protected, dtype=object)
    if all(isinstance(v, (int, float)) for v in protected):
        a = np.array(protected)
    values = _unique(a)
    if privileged_value is None:
        if len(values) > 2:
            raise SchemaError(
                f"protected column {protected_column!r} has {len(values)} values; "
                "designate privileged_value explicitly")
    else:
        privileged_value = _parse_category(str(privileged_value))
    return Dataset(X, a, y, task, feature_names=[header[j] for j in feat_idx],
                   privileged_value=privileged_value)


def _parse_number(s: str, row: int, col: str) -> float:
    s = s.strip()
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: non-numeric value {s!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: missing or non-finite value {s!r}")
    return v


def write_csv(dataset: Dataset, path, outcome_column="y", protected_column="a"):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*dataset.feature_names, protected_column, outcome_column])
        for x, a, y in zip(dataset.features, dataset.protected, dataset.outcome):
            w.writerow([*map(repr, x.tolist()), a, repr(float(y))])


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def split_indices(n: int, spec: SplitSpec):
    n_test = int(round(n * spec.test_fraction))
    if n_test < 1 or n_test > n - 1:
        raise DatasetError(f"split of n={n} with test_fraction={spec.test_fraction} leaves an empty part")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split(dataset: Dataset, spec: SplitSpec):
    train_idx, test_idx = split_indices(dataset.n, spec)
    return dataset.take(train_idx), dataset.take(test_idx)


# --- synthetic scenarios -------------------------------------------------

BINARY_SCENARIOS = ("default/v1", "constant/v1", "deterministic/v1")
REGRESSION_SCENARIOS = ("default/v1", "noiseless/v1", "homoscedastic/v1", "group_noise/v1")


def _canon(name: str, known: Sequence[str]) -> str:
    full = name if "/" in name else f"{name}/v1"
    if full not in known:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(known)}")
    return full


@dataclass(frozen=True)
class _Covariates:
    X: np.ndarray
    group: np.ndarray


def _draw_covariates(n: int, d: int, rng) -> _Covariates:
    X = rng.standard_normal((n, d))
    group = (rng.random(n) < 0.5).astype(int)
    return _Covariates(X, group)


def binary_probability(X: np.ndarray, group: np.ndarray, scenario="default/v1", p=0.7):
    """Closed-form P(y=1 | x, a) for a binary scenario."""
    scenario = _canon(scenario, BINARY_SCENARIOS)
    if scenario == "constant/v1":
        return np.full(len(X), float(p))
    if scenario == "deterministic/v1":
        return (X[:, 0] > 0).astype(float)
    score = 1.2 * X[:, 0] - 0.8 * X[:, 1] + 0.5 * X[:, 2] * X[:, 3] + 0.6 * group - 0.3
    return expit(score)


def synth_binary(n: int, seed: int = 0, scenario: str = "default/v1", d: int = 5,
                 p: float = 0.7) -> Dataset:
    """Bernoulli outcomes with known success probability.

    ``default``: logistic in a mostly linear score with a +0.6 shift for the
    privileged group. ``constant``: p everywhere. ``deterministic``: p in {0, 1}.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    scenario = _canon(scenario, BINARY_SCENARIOS)
    rng = np.random.default_rng(seed)
    cov = _draw_covariates(n, d, rng)
    prob = binary_probability(cov.X, cov.group, scenario, p)
    y = (rng.random(n) < prob).astype(float)
    return Dataset(cov.X, cov.group, y, BINARY, privileged_value=1,
                   true_mean=prob, true_sigma=np.sqrt(prob * (1 - prob)))


def regression_truth(X: np.ndarray, group: np.ndarray, scenario="default/v1", sigma=2.0,
                     group_multiplier=(1.0, 1.0), group_shift=0.0):
    """Closed-form (mean, sigma) for a regression scenario."""
    scenario = _canon(scenario, REGRESSION_SCENARIOS)
    mean = 1.0 * X[:, 0] + 0.5 * X[:, 1] - 0.5 * X[:, 3] + group_shift * group
    if scenario == "noiseless/v1":
        sd = np.zeros(len(X))
    elif scenario == "homoscedastic/v1":
        sd = np.full(len(X), float(sigma))
    else:
        sd = 0.1 + np.abs(X[:, 2])
    mult = np.where(group == 1, group_multiplier[1], group_multiplier[0])
    return mean, sd * mult


def synth_regression(n: int, seed: int = 0, scenario: str = "default/v1", d: int = 5,
                     sigma: float = 2.0, group_multiplier=(1.0, 1.0),
                     group_shift: float = 0.0) -> Dataset:
    """Gaussian outcomes y = mean(x) + sigma(x) * eps.

    The default noise level is ``0.1 + |x2|`` (third covariate). ``group_multiplier``
    scales noise per group as (unprivileged, privileged). The ``group_noise``
    preset sets a mean shift of 1.0 and multipliers (2.0, 1.0).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    scenario = _canon(scenario, REGRESSION_SCENARIOS)
    if scenario == "group_noise/v1":
        group_multiplier, group_shift = (2.0, 1.0), 1.0
    rng = np.random.default_rng(seed)
    cov = _draw_covariates(n, d, rng)
    mean, sd = regression_truth(cov.X, cov.group, scenario, sigma, group_multiplier, group_shift)
    y = mean + sd * rng.standard_normal(n)
    return Dataset(cov.X, cov.group, y, REGRESSION, privileged_value=1,
                   true_mean=mean, true_sigma=sd)
