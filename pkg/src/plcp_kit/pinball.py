"""Pinball loss, the group-weighted empirical objective, and its exact minimizer.

The per-group threshold that minimizes a weighted sum of pinball losses is a
weighted quantile of the scores; ``weighted_quantile`` computes it in closed
form with a deterministic left-endpoint convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import as_scored_arrays

__all__ = [
    "pinball_loss",
    "pinball_matrix",
    "empirical_objective",
    "weighted_quantile",
    "weighted_quantile_sorted",
    "weighted_quantile_items",
    "WeightedScore",
    "DegenerateGroupError",
]

# Cumulative weights are compared with this absolute slack so that float
# round-off cannot flip the selected order statistic.
CUM_WEIGHT_TOL = 1e-12


class DegenerateGroupError(ValueError):
    """Total weight of a group vanished; the caller decides the fallback."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def pinball_loss(q, s, alpha):
    """Asymmetric quantile loss: alpha*(q-s) when q >= s, (1-alpha)*(s-q) otherwise.

    Broadcasts over array arguments; 1-Lipschitz in each argument.
    """
    alpha = _check_alpha(alpha)
    diff = np.asarray(q, dtype=float) - np.asarray(s, dtype=float)
    out = np.where(diff >= 0.0, alpha * diff, (alpha - 1.0) * diff)
    return float(out) if out.ndim == 0 else out


def pinball_matrix(q, s, alpha) -> np.ndarray:
    """(n, m) matrix of pinball losses: entry (j, i) is loss(q_i, s_j)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return pinball_loss(q[None, :], s[:, None], alpha)


def empirical_objective(model, q, data, alpha) -> float:
    """Mean over samples of the membership-weighted pinball losses.

    (1/n) * sum_j sum_i h_i(x_j) * loss(q_i, s_j); convex in q for a fixed
    model.  The reduction order is fixed, so results are bit-stable for a
    given input order.
    """
    x, s = as_scored_arrays(data)
    qa = np.atleast_1d(np.asarray(getattr(q, "q", q), dtype=float))
    if qa.size != model.m:
        raise ValueError("model output dimension and threshold count differ")
    h = model.forward_batch(x)
    costs = pinball_matrix(qa, s, alpha)
    return float(np.sum(h * costs) / s.size)


@dataclass(frozen=True)
class WeightedScore:
    """A score with a nonnegative weight (one term of a group's objective)."""

    s: float
    w: float

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError("score must be finite")
        if not self.w >= 0.0:
            raise ValueError("weight must be nonnegative")


def weighted_quantile_sorted(s_sorted: np.ndarray, w_sorted: np.ndarray, alpha: float) -> float:
    """weighted_quantile for score-sorted inputs; skips sorting and validation."""
    cum = np.cumsum(w_sorted)
    total = cum[-1]
    if not total > 0.0:
        raise DegenerateGroupError("total weight is zero")
    target = (1.0 - alpha) * total
    idx = int(np.searchsorted(cum, target - CUM_WEIGHT_TOL, side="left"))
    return float(s_sorted[min(idx, s_sorted.size - 1)])


def weighted_quantile(scores, weights, alpha) -> float:
    """Smallest score whose cumulative weight reaches (1-alpha) of the total.

    This is the exact minimizer of sum_j w_j * pinball_loss(q, s_j) over q
    (the left endpoint when the minimizer is an interval).  Equal scores
    merge their weights, so the result is independent of input order.
    """
    alpha = _check_alpha(alpha)
    s = np.asarray(scores, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if s.size == 0:
        raise DegenerateGroupError("no scores")
    if s.shape != w.shape:
        raise ValueError("scores and weights have different lengths")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    order = np.argsort(s, kind="stable")
    return weighted_quantile_sorted(s[order], w[order], alpha)


def weighted_quantile_items(items: Sequence[WeightedScore], alpha) -> float:
    """weighted_quantile over a sequence of WeightedScore items."""
    return weighted_quantile([it.s for it in items], [it.w for it in items], alpha)
