from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Predictions:
    """Per-row point estimate ``mu`` and uncertainty ``sigma`` (>= 0).

    ``kind`` says what ``sigma`` holds: a standard deviation ("std"), a
    selective-ensemble p-value ("pvalue"), a self-inconsistency score
    ("inconsistency") or a random draw ("random"). ``prob_from_sigma`` marks
    binary estimators whose probability for NLL scoring must be recovered from
    ``sigma`` and ``label`` rather than read off ``mu``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    label: Optional[np.ndarray] = None
    kind: str = "std"
    prob_from_sigma: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma must have the same shape")
        if np.any(sigma < 0) or np.any(np.isnan(sigma)):
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if self.label is not None:
            label = np.asarray(self.label, dtype=int)
            if label.shape != mu.shape:
                raise ValueError("label must match mu in shape")
            object.__setattr__(self, "label", label)

    def __len__(self):
        return len(self.mu)

    def take(self, idx) -> "Predictions":
        return Predictions(self.mu[idx], self.sigma[idx],
                           None if self.label is None else self.label[idx],
                           self.kind, self.prob_from_sigma, dict(self.meta))
