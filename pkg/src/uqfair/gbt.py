"""Depth-limited second-order gradient-boosted regression trees.

Trees are grown level by level with an exact greedy split search over every
midpoint between consecutive distinct feature values. Leaf weights and split
gains use the usual second-order formulas with a ridge term and a split
penalty. Models with two score columns are fit by alternating one tree per
coordinate per round.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from typing import List, Sequence

import numpy as np
from numba import njit

from .losses import Loss
from .predictions import Predictions

log = logging.getLogger(__name__)

HESSIAN_FLOOR = 1e-6
MODEL_FORMAT = "uqfair.boosted_model"
MODEL_VERSION = 1


class NumericalGuardError(ArithmeticError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, msg, round_index=None):
        super().__init__(msg)
        self.round_index = round_index


def leaf_weight(g_sum: float, h_sum: float, ridge: float) -> float:
    denom = h_sum + ridge
    if not denom > 0:
        raise NumericalGuardError(f"leaf denominator h_sum + ridge = {denom} is not positive")
    return -g_sum / denom


def split_gain(gL, hL, gR, hR, ridge, gamma) -> float:
    dl, dr, dp = hL + ridge, hR + ridge, hL + hR + ridge
    if not (dl > 0 and dr > 0 and dp > 0):
        raise NumericalGuardError("split gain denominators must be positive")
    return (gL * gL / dl + gR * gR / dr - (gL + gR) ** 2 / dp) / 2 - gamma


@dataclass(frozen=True)
class PipelineConfig:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    gamma: float = 0.0
    ridge: float = 1.0
    bag_fraction: float = 1.0
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 0:
            raise ValueError("n_trees must be a nonnegative integer")
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValueError("max_depth must be a positive integer")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if not 0 < self.bag_fraction <= 1:
            raise ValueError("bag_fraction must lie in (0, 1]")
        if int(self.min_leaf) != self.min_leaf or self.min_leaf < 1:
            raise ValueError("min_leaf must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be an unsigned integer")
        object.__setattr__(self, "n_trees", int(self.n_trees))
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "min_leaf", int(self.min_leaf))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown pipeline fields: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class Tree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf with ``weight[i]``.

    Rows with ``x[feature] < threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r = rows[inner]
            go_left = X[r, f[inner]] < self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.weight[self.apply(X)]

    def to_obj(self, i=0) -> dict:
        if self.feature[i] < 0:
            return {"weight": float(self.weight[i])}
        return {
            "split_feature": int(self.feature[i]),
            "split_threshold": float(self.threshold[i]),
            "left": self.to_obj(self.left[i]),
            "right": self.to_obj(self.right[i]),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Tree":
        feature, threshold, left, right, weight = [], [], [], [], []

        def add(o):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            weight.append(0.0)
            if "weight" in o:
                weight[i] = float(o["weight"])
            else:
                feature[i] = int(o["split_feature"])
                threshold[i] = float(o["split_threshold"])
                left[i] = add(o["left"])
                right[i] = add(o["right"])
            return i

        add(obj)
        return cls(np.array(feature, dtype=np.intp), np.array(threshold),
                   np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                   np.array(weight))


@dataclass
class BoostedModel:
    trees: List[List[Tree]]
    base_score: np.ndarray
    learning_rate: float
    n_features: int
    loss_name: str = ""
    train_loss: List[float] = field(default_factory=list)

    @property
    def n_outputs(self) -> int:
        return len(self.base_score)

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "loss": self.loss_name,
            "n_outputs": self.n_outputs,
            "n_features": self.n_features,
            "learning_rate": self.learning_rate,
            "base_score": [float(b) for b in self.base_score],
            "trees": [[t.to_obj() for t in seq] for seq in self.trees],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BoostedModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a boosted model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        return cls(
            trees=[[Tree.from_obj(o) for o in seq] for seq in doc["trees"]],
            base_score=np.array(doc["base_score"], dtype=float),
            learning_rate=float(doc["learning_rate"]),
            n_features=int(doc["n_features"]),
            loss_name=doc.get("loss", ""),
        )


def bootstrap_indices(n: int, seed: int, fraction: float = 1.0) -> np.ndarray:
    """Row indices drawn with replacement; size round(fraction * n), at least 1."""
    size = max(1, int(round(fraction * n)))
    return np.random.default_rng(seed).integers(0, n, size=size)


@njit(cache=True, nogil=True)
def _best_splits(X, order, pos, g, h, k, lam, gamma, min_leaf, search):
    """Per open node: gradient/hessian totals and the best split over all features.

    Scanning rows in ascending feature order and keeping strict improvements
    breaks ties toward the lower feature index, then the lower threshold.
    """
    n, d = X.shape
    G = np.zeros(k)
    H = np.zeros(k)
    N = np.zeros(k, dtype=np.int64)
    for r in range(n):
        p = pos[r]
        if p >= 0:
            G[p] += g[r]
            H[p] += h[r]
            N[p] += 1
    best_gain = np.full(k, -np.inf)
    best_feat = np.full(k, -1, dtype=np.int64)
    best_thr = np.zeros(k)
    if not search:
        return G, H, best_gain, best_feat, best_thr
    gl = np.zeros(k)
    hl = np.zeros(k)
    cnt = np.zeros(k, dtype=np.int64)
    last = np.zeros(k)
    for f in range(d):
        gl[:] = 0.0
        hl[:] = 0.0
        cnt[:] = 0
        for i in range(n):
            r = order[f, i]
            p = pos[r]
            if p < 0:
                continue
            x = X[r, f]
            c = cnt[p]
            if c >= min_leaf and N[p] - c >= min_leaf and x > last[p]:
                gr = G[p] - gl[p]
                hr = H[p] - hl[p]
                dl = hl[p] + lam
                dr = hr + lam
                dp = H[p] + lam
                if dl > 0 and dr > 0 and dp > 0:
                    gain = 0.5 * (gl[p] * gl[p] / dl + gr * gr / dr - G[p] * G[p] / dp) - gamma
                    if gain > best_gain[p]:
                        best_gain[p] = gain
                        best_feat[p] = f
                        t = 0.5 * (last[p] + x)
                        best_thr[p] = t if t > last[p] else x
            gl[p] += g[r]
            hl[p] += h[r]
            cnt[p] = c + 1
            last[p] = x
    return G, H, best_gain, best_feat, best_thr


def _grow_tree(X, order, g, h, config: PipelineConfig) -> Tree:
    """Grow one tree on rows of X. ``order[f]`` lists rows sorted by feature f."""
    n = len(X)
    feature, threshold, left, right, weight = [-1], [0.0], [-1], [-1], [0.0]

    # pos[r] is the row's slot among the open nodes of this level, -1 once settled
    pos = np.zeros(n, dtype=np.int64)
    open_nodes = [0]
    for depth in range(config.max_depth + 1):
        G, H, best_gain, best_feat, best_thr = _best_splits(
            X, order, pos, g, h, len(open_nodes), float(config.ridge),
            float(config.gamma), config.min_leaf, depth < config.max_depth)
        next_open = []
        new_pos = np.full(n, -1, dtype=np.int64)
        for slot, node in enumerate(open_nodes):
            if best_feat[slot] >= 0 and best_gain[slot] > 0:
                f, t = int(best_feat[slot]), float(best_thr[slot])
                feature[node], threshold[node] = f, t
                kids = []
                for _ in range(2):
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    weight.append(0.0)
                    kids.append(len(feature) - 1)
                left[node], right[node] = kids
                rows = np.flatnonzero(pos == slot)
                goes_left = X[rows, f] < t
                new_pos[rows[goes_left]] = len(next_open)
                new_pos[rows[~goes_left]] = len(next_open) + 1
                next_open.extend(kids)
            else:
                weight[node] = leaf_weight(G[slot], H[slot], config.ridge)
        if not next_open:
            break
        pos, open_nodes = new_pos, next_open

    return Tree(np.array(feature, dtype=np.intp), np.array(threshold),
                np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                np.array(weight))


def _sort_columns(X):
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _as_scores(loss: Loss, base, n):
    return np.tile(np.asarray(base, dtype=float), (n, 1))


def fit(X, y, loss: Loss, config: PipelineConfig = PipelineConfig()) -> BoostedModel:
    """Train a boosted model. Deterministic in (X, y, loss, config)."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    y = loss.check_target(y)
    n = len(X)
    if n == 0:
        raise TrainingError("empty training set")
    if len(y) != n:
        raise ValueError("X and y have different lengths")
    k = loss.n_outputs
    base = np.asarray(loss.base_score(y), dtype=float)
    scores = _as_scores(loss, base, n)
    trees: List[List[Tree]] = [[] for _ in range(k)]
    history = [float(np.mean(loss.value(y, scores)))]
    full_order = None
    rng = np.random.default_rng(config.seed)
    size = max(1, int(round(config.bag_fraction * n)))

    for rnd in range(config.n_trees):
        if config.bag_fraction < 1.0:
            rows = rng.integers(0, n, size=size)
            Xb = X[rows]
            order = _sort_columns(Xb)
        else:
            rows = None
            Xb = X
            if full_order is None:
                full_order = _sort_columns(X)
            order = full_order
        for c in range(k):
            grad = loss.gradient(y, scores)[:, c]
            hess = loss.hessian(y, scores)[:, c]
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                raise TrainingError(f"non-finite gradient or hessian in round {rnd}", rnd)
            hess = np.maximum(hess, HESSIAN_FLOOR)
            if rows is not None:
                grad, hess = grad[rows], hess[rows]
            tree = _grow_tree(Xb, order, grad, hess, config)
            trees[c].append(tree)
            scores[:, c] += config.learning_rate * tree.predict(X)
        value = float(np.mean(loss.value(y, scores)))
        if not np.isfinite(value):
            raise TrainingError(f"loss became non-finite in round {rnd}", rnd)
        history.append(value)

    return BoostedModel(trees, base, config.learning_rate, X.shape[1], loss.name, history)


def predict(model: BoostedModel, X) -> np.ndarray:
    """Raw scores, shape (n, n_outputs)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    out = _as_scores(None, model.base_score, len(X))
    for c, seq in enumerate(model.trees):
        for tree in seq:
            out[:, c] += model.learning_rate * tree.predict(X)
    return out


def predict_linked(model: BoostedModel, loss: Loss, X) -> Predictions:
    mu, sigma = loss.link(predict(model, X))
    return Predictions(mu, np.maximum(sigma, 0.0))


SWEEPABLE = ("max_depth", "gamma")


def sweep(X_train, y_train, X_test, loss: Loss, base_config: PipelineConfig,
          hyperparam: str, grid: Sequence, tau=None):
    """Fit one model per grid value of ``hyperparam``, everything else fixed.

    Returns a list of (config, test Predictions). ``tau`` bounds how far a grid
    value may sit from the base setting.
    """
    if hyperparam not in SWEEPABLE:
        raise ValueError(f"cannot sweep {hyperparam!r}; choose from {SWEEPABLE}")
    if len(grid) == 0:
        raise ValueError("sweep grid is empty")
    base_value = getattr(base_config, hyperparam)
    out = []
    for v in grid:
        if tau is not None and abs(v - base_value) > tau:
            raise ValueError(f"{hyperparam}={v} is further than tau={tau} from base {base_value}")
        cfg = replace(base_config, **{hyperparam: v})
        model = fit(X_train, y_train, loss, cfg)
        out.append((cfg, predict_linked(model, loss, X_test)))
    return out
