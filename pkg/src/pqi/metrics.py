"""Regression evaluation metrics: PLCC, SRCC, and R-squared.

PLCC uses the standard Pearson denominator sqrt(sum(p^2)) * sqrt(sum(q^2))
on mean-centered series. SRCC is, by construction, PLCC applied to
tie-averaged rank vectors, so rank invariance under monotone transforms is
structural rather than tested-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PairedScores:
    """Aligned predicted/target series of equal length >= 2, all finite."""

    predicted: np.ndarray
    target: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.predicted, dtype=np.float64)
        t = np.asarray(self.target, dtype=np.float64)
        if p.ndim != 1 or t.ndim != 1 or p.shape != t.shape:
            raise ValueError("predicted and target must be equal-length 1-D series")
        if p.size < 2:
            raise ValueError("need at least 2 paired scores")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
            raise ValueError("scores must all be finite")
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "target", t)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank run."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # Positions i..j (0-based) hold equal values: average rank (i+1+j+1)/2.
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def plcc(p: PairedScores) -> float:
    """Pearson linear correlation of the mean-centered series."""
    a = p.predicted - p.predicted.mean()
    b = p.target - p.target.mean()
    denom = np.sqrt(np.sum(a * a)) * np.sqrt(np.sum(b * b))
    if denom == 0.0:
        raise ValueError("correlation undefined: a series has zero variance")
    return float(np.sum(a * b) / denom)


def srcc(p: PairedScores) -> float:
    """Spearman rank correlation: PLCC of the tie-averaged rank vectors."""
    return plcc(PairedScores(average_ranks(p.predicted), average_ranks(p.target)))


def r_squared(p: PairedScores) -> float:
    """Coefficient of determination, 1 - RSS/TSS.

    Can be negative when the predictor is worse than the target mean.
    """
    residual = p.target - p.predicted
    rss = float(np.sum(residual * residual))
    centered = p.target - p.target.mean()
    tss = float(np.sum(centered * centered))
    if tss == 0.0:
        raise ValueError("r_squared undefined: target has zero variance")
    return 1.0 - rss / tss
