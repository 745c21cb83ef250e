"""Twice-differentiable per-observation objectives for the boosting engine.

Every loss works on a score matrix of shape (n, n_outputs). Two-output losses
use (m, t) with sigma = exp(t). Gradients and Hessians are per coordinate
(diagonal approximation).
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

PROB_CLIP = 1e-9


def _scores(scores, k):
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None] if k == 1 else s[None, :]
    if s.shape[1] != k:
        raise ValueError(f"expected {k} score columns, got {s.shape[1]}")
    return s


class Loss:
    """Base contract. ``n_outputs`` raw score columns map to (mu, sigma) via ``link``."""

    name = "loss"
    n_outputs = 1

    def value(self, y, scores):
        raise NotImplementedError

    def gradient(self, y, scores):
        raise NotImplementedError

    def hessian(self, y, scores):
        raise NotImplementedError

    def link(self, scores):
        raise NotImplementedError

    def base_score(self, y):
        raise NotImplementedError

    def objective(self, y, scores, coord, anchor=None):
        """Per-row objective whose derivative in ``coord`` is ``gradient[:, coord]``.

        ``anchor`` holds scores that are treated as constants (stop-gradient).
        Only losses with held-constant factors need to override this.
        """
        return self.value(y, scores)

    def check_target(self, y):
        return np.asarray(y, dtype=float)

    def __repr__(self):
        return f"{type(self).__name__}()"


class SquaredError(Loss):
    name = "squared_error"

    def value(self, y, scores):
        m = _scores(scores, 1)[:, 0]
        return 0.5 * (y - m) ** 2

    def gradient(self, y, scores):
        m = _scores(scores, 1)[:, 0]
        return (m - y)[:, None]

    def hessian(self, y, scores):
        return np.ones((len(np.atleast_1d(y)), 1))

    def link(self, scores):
        m = _scores(scores, 1)[:, 0]
        return m, np.zeros_like(m)

    def base_score(self, y):
        return np.array([np.mean(y)])


class Logistic(Loss):
    name = "logistic"

    def check_target(self, y):
        y = np.asarray(y, dtype=float)
        if np.any((y != 0) & (y != 1)):
            raise ValueError("logistic loss needs 0/1 targets")
        return y

    def value(self, y, scores):
        s = _scores(scores, 1)[:, 0]
        # -[y log p + (1-y) log(1-p)] = log(1 + e^s) - y s
        return np.logaddexp(0.0, s) - y * s

    def gradient(self, y, scores):
        p = expit(_scores(scores, 1)[:, 0])
        return (p - y)[:, None]

    def hessian(self, y, scores):
        p = expit(_scores(scores, 1)[:, 0])
        return (p * (1 - p))[:, None]

    def link(self, scores):
        p = expit(_scores(scores, 1)[:, 0])
        return p, np.sqrt(p * (1 - p))

    def base_score(self, y):
        p = np.clip(np.mean(y), PROB_CLIP, 1 - PROB_CLIP)
        return np.array([np.log(p / (1 - p))])


class NormalNLL(Loss):
    """Gaussian negative log-likelihood without the 0.5*log(2*pi) constant."""

    name = "normal_nll"
    n_outputs = 2

    @staticmethod
    def _parts(y, scores):
        s = _scores(scores, 2)
        m, t = s[:, 0], s[:, 1]
        r = y - m
        inv_var = np.exp(-2.0 * t)
        return m, t, r, inv_var

    def value(self, y, scores):
        _, t, r, iv = self._parts(y, scores)
        return t + 0.5 * r * r * iv

    def gradient(self, y, scores):
        _, _, r, iv = self._parts(y, scores)
        return np.column_stack([-r * iv, 1.0 - r * r * iv])

    def hessian(self, y, scores):
        _, _, r, iv = self._parts(y, scores)
        return np.column_stack([iv, 2.0 * r * r * iv])

    def link(self, scores):
        s = _scores(scores, 2)
        return s[:, 0], np.exp(s[:, 1])

    def base_score(self, y):
        sd = np.std(y)
        return np.array([np.mean(y), np.log(max(sd, 1e-6))])


class BetaNLL(NormalNLL):
    """Normal NLL weighted by sigma**(2*beta), the weight held constant."""

    name = "beta_nll"

    def __init__(self, beta: float = 0.5):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        self.beta = float(beta)

    def _weight(self, scores):
        return np.exp(2.0 * self.beta * _scores(scores, 2)[:, 1])

    def value(self, y, scores):
        return self._weight(scores) * super().value(y, scores)

    def gradient(self, y, scores):
        return self._weight(scores)[:, None] * super().gradient(y, scores)

    def hessian(self, y, scores):
        return self._weight(scores)[:, None] * super().hessian(y, scores)

    def objective(self, y, scores, coord, anchor=None):
        w = self._weight(scores if anchor is None else anchor)
        return w * NormalNLL.value(self, y, scores)

    def __repr__(self):
        return f"BetaNLL(beta={self.beta})"


class FaithfulNLL(NormalNLL):
    """Squared error drives the mean score; Normal NLL (mean fixed) drives the scale."""

    name = "faithful_nll"

    def value(self, y, scores):
        return NormalNLL.value(self, y, scores)

    def gradient(self, y, scores):
        m, _, r, iv = self._parts(y, scores)
        return np.column_stack([m - y, 1.0 - r * r * iv])

    def hessian(self, y, scores):
        _, _, r, iv = self._parts(y, scores)
        return np.column_stack([np.ones_like(r), 2.0 * r * r * iv])

    def objective(self, y, scores, coord, anchor=None):
        if coord == 0:
            m = _scores(scores, 2)[:, 0]
            return 0.5 * (y - m) ** 2
        return NormalNLL.value(self, y, scores)


LOSSES = {
    "squared_error": SquaredError,
    "logistic": Logistic,
    "normal_nll": NormalNLL,
    "beta_nll": BetaNLL,
    "faithful_nll": FaithfulNLL,
}


def get_loss(name: str, **kwargs) -> Loss:
    try:
        cls = LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {', '.join(LOSSES)}") from None
    return cls(**kwargs)


# scalar conveniences matching the documented call shape loss(y, scores)

def squared_error(y, m):
    L = SquaredError()
    y, s = np.atleast_1d(y).astype(float), np.atleast_1d(m).astype(float)
    return L.value(y, s), L.gradient(y, s), L.hessian(y, s)


def logistic(y, s):
    L = Logistic()
    y = L.check_target(np.atleast_1d(y))
    s = np.atleast_1d(s).astype(float)
    return L.value(y, s), L.gradient(y, s), L.hessian(y, s)


def normal_nll(y, m, t):
    return _two(NormalNLL(), y, m, t)


def beta_nll(y, m, t, beta=0.5):
    return _two(BetaNLL(beta), y, m, t)


def faithful_nll(y, m, t):
    return _two(FaithfulNLL(), y, m, t)


def _two(L, y, m, t):
    y = np.atleast_1d(y).astype(float)
    s = np.column_stack([np.broadcast_to(m, y.shape), np.broadcast_to(t, y.shape)]).astype(float)
    return L.value(y, s), L.gradient(y, s), L.hessian(y, s)
