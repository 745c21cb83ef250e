"""Group fairness metrics, abstention curves, uncertainty-aware parity and
feature-shift distances.

Group convention: ``group == 1`` is privileged, ``group == 0`` unprivileged.
Gaps are absolute differences; disparate impact is unprivileged / privileged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numba import njit

METRIC_NAMES = ("error_rate", "statistical_parity", "equalized_odds", "equal_opportunity",
                "disparate_impact", "predictive_parity", "false_positive_rate")
TABLE_COLUMNS = ("Approach", "Error Rate", "Statistical Parity", "Equalized Odds",
                 "Equal Opportunity", "Disparate Impact", "Predictive Parity",
                 "False Positive Rate", "Included %")
DEFAULT_INCLUSION = tuple(round(0.75 + 0.01 * i, 2) for i in range(26))


@dataclass
class FairnessMetrics:
    error_rate: Optional[float] = None
    statistical_parity: Optional[float] = None
    equalized_odds: Optional[float] = None
    equal_opportunity: Optional[float] = None
    disparate_impact: Optional[float] = None
    predictive_parity: Optional[float] = None
    false_positive_rate: Optional[float] = None
    reasons: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    @classmethod
    def null(cls, reason: str) -> "FairnessMetrics":
        return cls(reasons={name: reason for name in METRIC_NAMES})


def _rate(num, den):
    return None if den == 0 else num / den


def binary_metrics(label, y, group) -> FairnessMetrics:
    label = np.asarray(label).astype(int)
    y = np.asarray(y).astype(int)
    group = np.asarray(group).astype(int)
    if not (len(label) == len(y) == len(group)):
        raise ValueError("label, outcome and group lengths differ")
    cells = {}
    for a in (0, 1):
        m = group == a
        if not m.any():
            raise ValueError(f"group {a} is empty")
        yh, yy = label[m], y[m]
        cells[a] = {
            "pos": _rate(int(np.sum(yh == 1)), int(m.sum())),
            "tpr": _rate(int(np.sum((yh == 1) & (yy == 1))), int(np.sum(yy == 1))),
            "fpr": _rate(int(np.sum((yh == 1) & (yy == 0))), int(np.sum(yy == 0))),
            "ppv": _rate(int(np.sum((yh == 1) & (yy == 1))), int(np.sum(yh == 1))),
        }
    out = FairnessMetrics(error_rate=float(np.mean(label != y)))
    u, p = cells[0], cells[1]
    out.statistical_parity = abs(u["pos"] - p["pos"])

    def gap(key, name):
        if u[key] is None or p[key] is None:
            out.reasons[name] = "empty conditioning cell"
            return None
        return abs(u[key] - p[key])

    out.equal_opportunity = gap("tpr", "equal_opportunity")
    out.false_positive_rate = gap("fpr", "false_positive_rate")
    out.predictive_parity = gap("ppv", "predictive_parity")
    if out.equal_opportunity is None or out.false_positive_rate is None:
        out.reasons["equalized_odds"] = "empty conditioning cell"
    else:
        out.equalized_odds = max(out.equal_opportunity, out.false_positive_rate)
    if p["pos"] == 0:
        out.reasons["disparate_impact"] = "privileged group has no positive predictions"
    else:
        out.disparate_impact = u["pos"] / p["pos"]
    return out


# -- abstention ------------------------------------------------------------

@dataclass
class AbstentionCurve:
    rates: List[float]
    metrics: List[FairnessMetrics]
    included: List[float]

    @property
    def inclusion(self) -> List[float]:
        return [round(1.0 - r, 10) for r in self.rates]

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(m, name) for m in self.metrics]

    def rows(self):
        for r, inc, m in zip(self.rates, self.included, self.metrics):
            yield {"rate": r, "inclusion": round(1.0 - r, 10), "included_pct": 100.0 * inc,
                   **m.as_dict()}


def abstention_order(sigma) -> np.ndarray:
    """Rows from most to least uncertain; equal sigma keeps the lower index first."""
    sigma = np.asarray(sigma, dtype=float)
    return np.lexsort((np.arange(len(sigma)), -sigma))


def n_abstain(rate: float, n: int) -> int:
    return int(math.ceil(round(rate * n, 9)))


def inclusion_mask(sigma, rate: float) -> np.ndarray:
    n = len(sigma)
    mask = np.ones(n, dtype=bool)
    mask[abstention_order(sigma)[: n_abstain(rate, n)]] = False
    return mask


def abstention_curve(label, y, group, sigma, rates: Optional[Sequence[float]] = None) -> AbstentionCurve:
    """Drop the ceil(r n) most uncertain rows for each rate r and re-score."""
    if rates is None:
        rates = [round(1.0 - inc, 10) for inc in DEFAULT_INCLUSION]
    label, y, group = np.asarray(label), np.asarray(y), np.asarray(group)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.isnan(sigma)):
        raise ValueError("sigma missing for some observations")
    n = len(sigma)
    order = abstention_order(sigma)
    metrics, included = [], []
    for r in rates:
        if not 0 <= r < 1:
            raise ValueError(f"abstention rate {r} outside [0, 1)")
        keep = np.ones(n, dtype=bool)
        keep[order[: n_abstain(r, n)]] = False
        included.append(keep.sum() / n)
        g = group[keep]
        if g.size == 0 or g.min() == g.max():
            metrics.append(FairnessMetrics.null("abstention left a group empty"))
            continue
        metrics.append(binary_metrics(label[keep], y[keep], g))
    return AbstentionCurve(list(rates), metrics, included)


OBJECTIVE_METRICS = ("error_rate", "statistical_parity", "equalized_odds")


def abstention_objective(curve: AbstentionCurve, lo: float = 0.75, hi: float = 1.0):
    """(rates, summed min-max normalised objective) over inclusion in [lo, hi].

    A metric that is constant over the grid contributes 0. Points with a null
    objective metric are skipped.
    """
    pts = [i for i, inc in enumerate(curve.inclusion)
           if lo - 1e-9 <= inc <= hi + 1e-9
           and all(getattr(curve.metrics[i], m) is not None for m in OBJECTIVE_METRICS)]
    if not pts:
        raise ValueError("objective metrics are null across the whole inclusion grid")
    total = np.zeros(len(pts))
    for m in OBJECTIVE_METRICS:
        v = np.array([getattr(curve.metrics[i], m) for i in pts], dtype=float)
        span = v.max() - v.min()
        if span > 0:
            total += (v - v.min()) / span
    return [curve.rates[i] for i in pts], total


def select_abstention_rate(curve: AbstentionCurve, lo: float = 0.75, hi: float = 1.0) -> float:
    """Rate minimising the normalised objective; ties go to the highest inclusion."""
    rates, total = abstention_objective(curve, lo, hi)
    best = total.min()
    tied = [r for r, t in zip(rates, total) if t <= best + 1e-12]
    return min(tied)


# -- uncertainty-aware statistical parity -----------------------------------

@njit(cache=True, nogil=True)
def _mixture_cdf(ys, mu, sigma):
    out = np.empty(len(ys))
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    n = len(mu)
    for i in range(len(ys)):
        y = ys[i]
        acc = 0.0
        for j in range(n):
            s = sigma[j]
            if s > 0:
                acc += 0.5 * math.erfc(-(y - mu[j]) / s * inv_sqrt2)
            elif y >= mu[j]:
                acc += 1.0
        out[i] = acc / n
    return out


@dataclass
class MixtureCDF:
    """Equal-weight mixture of N(mu_i, sigma_i^2); sigma_i = 0 is a point mass."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.ascontiguousarray(self.mu, dtype=float)
        self.sigma = np.ascontiguousarray(self.sigma, dtype=float)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValueError("mu and sigma must be 1-D and equally long")
        if len(self.mu) == 0:
            raise ValueError("mixture needs at least one component")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative")

    def __len__(self):
        return len(self.mu)

    @property
    def is_discrete(self) -> bool:
        return bool(np.all(self.sigma == 0))

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.is_discrete:
            return np.searchsorted(np.sort(self.mu), y, side="right") / len(self.mu)
        return _mixture_cdf(np.ascontiguousarray(y), self.mu, self.sigma)

    def sample(self, size: int, rng) -> np.ndarray:
        comp = rng.integers(0, len(self.mu), size=size)
        return self.mu[comp] + self.sigma[comp] * rng.standard_normal(size)


_GOLDEN = (math.sqrt(5) - 1) / 2


def _golden_max(f, a, b, tol):
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        for x, fx in ((c, fc), (d, fd)):
            if fx > best_f:
                best_x, best_f = x, fx
    return best_x, best_f


def ks_uasp(group_a: MixtureCDF, group_b: MixtureCDF, tol: float = 1e-4) -> float:
    """Sup over y of |F_a(y) - F_b(y)| for two normal mixtures.

    Candidates are every component mean, the means shifted by j sigma / 2 for
    j = 1..8 on both sides, and the left limit at every point mass; the best
    candidate is then refined by golden-section search between its neighbours.
    With all sigma = 0 this is the classical two-sample KS statistic.
    """
    if group_a.is_discrete and group_b.is_discrete:
        a, b = np.sort(group_a.mu), np.sort(group_b.mu)
        n, m = len(a), len(b)
        data = np.concatenate([a, b])
        # integer counts so the result is the exact ratio rounded once
        ca = np.searchsorted(a, data, side="right").astype(np.int64)
        cb = np.searchsorted(b, data, side="right").astype(np.int64)
        return float(np.max(np.abs(ca * m - cb * n)) / (n * m))
    mu = np.concatenate([group_a.mu, group_b.mu])
    sd = np.concatenate([group_a.sigma, group_b.sigma])
    steps = np.arange(1, 9) * 0.5
    pts = [mu, (mu[:, None] + steps * sd[:, None]).ravel(), (mu[:, None] - steps * sd[:, None]).ravel()]
    atoms = mu[sd == 0]
    if atoms.size:
        pts.append(np.nextafter(atoms, -np.inf))
    grid = np.unique(np.concatenate(pts))
    diff = np.abs(group_a(grid) - group_b(grid))
    i = int(np.argmax(diff))
    best = float(diff[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        def f(y):
            return float(abs(group_a(y)[0] - group_b(y)[0]))
        _, fbest = _golden_max(f, lo, hi, tol)
        best = max(best, fbest)
    return min(best, 1.0)


def uasp(mu, sigma, group) -> float:
    """KS distance between the privileged and unprivileged prediction mixtures."""
    mu, sigma, group = np.asarray(mu, float), np.asarray(sigma, float), np.asarray(group)
    a, b = group == 1, group == 0
    if not a.any() or not b.any():
        raise ValueError("both groups must be nonempty")
    return ks_uasp(MixtureCDF(mu[a], sigma[a]), MixtureCDF(mu[b], sigma[b]))


# -- feature shift ----------------------------------------------------------

def wasserstein_1d(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions.

    Integrates |F_a^{-1}(q) - F_b^{-1}(q)| over the merged grid of quantile
    levels {i/n} and {j/m}.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("wasserstein_1d needs nonempty samples")
    if n == m:
        return float(np.mean(np.abs(a - b)))
    levels = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    levels[-1] = 1.0
    widths = np.diff(np.concatenate([[0.0], levels]))
    mid = levels - widths / 2
    qa = a[np.minimum((mid * n).astype(int), n - 1)]
    qb = b[np.minimum((mid * m).astype(int), m - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


@dataclass
class FeatureShift:
    feature_names: List[str]
    distances: np.ndarray
    per_estimator: Dict[str, np.ndarray]

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.distances))

    @property
    def top_feature(self) -> str:
        return self.feature_names[self.argmax]

    def rows(self):
        for j, name in enumerate(self.feature_names):
            row = {"feature": name, "mean_wasserstein": float(self.distances[j])}
            for est, d in self.per_estimator.items():
                row[est] = float(d[j])
            yield row


def feature_shift_report(features, included, feature_names=None) -> FeatureShift:
    """Per-feature Wasserstein distance between all rows and the included rows.

    ``included`` is one boolean mask or a dict of masks keyed by estimator; with
    several masks the distances are averaged.
    """
    X = np.asarray(features, dtype=float)
    masks = included if isinstance(included, dict) else {"estimator": included}
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    per = {}
    for est, mask in masks.items():
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError(f"included set for {est!r} is empty")
        per[est] = np.array([wasserstein_1d(X[:, j], X[mask, j]) for j in range(X.shape[1])])
    mean = np.mean(np.vstack(list(per.values())), axis=0)
    return FeatureShift(names, mean, per)
