"""Split conformal and known-group conditional calibration baselines."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ScoreKind, ScoreSpec, SplitConformalRule, as_covariate_matrix

__all__ = [
    "split_conformal",
    "GroupSpec",
    "GroupConditionalRule",
    "group_conditional",
    "sign_groups",
    "binary_value_groups",
]

_DEFAULT_SPEC = ScoreSpec(ScoreKind.PRECOMPUTED)


def split_conformal(scores, alpha, score_spec: ScoreSpec | None = None) -> SplitConformalRule:
    """Pooled-threshold baseline.

    Threshold is the k-th smallest of the calibration scores with
    k = ceil((1-alpha)(n+1)), or +inf when k exceeds n.  This is the
    convention whose marginal coverage is guaranteed to reach 1-alpha
    for an exchangeable test point.
    """
    s = np.asarray(scores, dtype=float).ravel()
    if s.size < 1:
        raise ValueError("need at least one calibration score")
    if not np.all(np.isfinite(s)):
        raise ValueError("calibration scores must be finite")
    k = math.ceil((1.0 - alpha) * (s.size + 1))
    threshold = math.inf if k > s.size else float(np.sort(s, kind="stable")[k - 1])
    return SplitConformalRule(threshold, score_spec or _DEFAULT_SPEC, alpha)


@dataclass(frozen=True)
class GroupSpec:
    """A partition of the covariate space into named groups.

    ``assign`` must be total: every covariate vector maps to an id in
    [0, n_groups).
    """

    n_groups: int
    assign: Callable[[np.ndarray], np.ndarray]
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValueError("need at least one group")
        if len(self.labels) != self.n_groups:
            raise ValueError("one label per group required")

    def ids(self, x) -> np.ndarray:
        out = np.asarray(self.assign(as_covariate_matrix(x)), dtype=int)
        if out.min(initial=0) < 0 or out.max(initial=0) >= self.n_groups:
            raise ValueError("group assignment out of range")
        return out


def sign_groups(coord: int = 0) -> GroupSpec:
    """Two groups split at zero on one coordinate: {x_c < 0, x_c >= 0}."""
    name = "x" if coord == 0 else f"x{coord}"
    return GroupSpec(
        n_groups=2,
        assign=lambda x: (x[:, coord] >= 0.0).astype(int),
        labels=(f"{name}<0", f"{name}>=0"),
    )


def binary_value_groups(coord: int) -> GroupSpec:
    """Two groups from a 0/1 coordinate; labels use 1-based coordinate names."""
    return GroupSpec(
        n_groups=2,
        assign=lambda x: (x[:, coord] != 0.0).astype(int),
        labels=(f"x{coord + 1}=0", f"x{coord + 1}=1"),
    )


@dataclass(frozen=True)
class GroupConditionalRule:
    """Per-group split-conformal thresholds over a known partition."""

    groups: GroupSpec
    group_thresholds: np.ndarray
    score: ScoreSpec
    alpha: float

    def __post_init__(self):
        t = np.asarray(self.group_thresholds, dtype=float)
        if t.size != self.groups.n_groups:
            raise ValueError("one threshold per group required")
        object.__setattr__(self, "group_thresholds", t)

    def thresholds(self, x, rng=None) -> np.ndarray:
        return self.group_thresholds[self.groups.ids(x)]

    def threshold_at(self, x, rng=None) -> float:
        return float(self.thresholds(np.asarray(x, dtype=float).reshape(1, -1))[0])


def group_conditional(x, scores, groups: GroupSpec, alpha,
                      score_spec: ScoreSpec | None = None) -> GroupConditionalRule:
    """Split conformal restricted to each group of a known partition."""
    x = as_covariate_matrix(x)
    s = np.asarray(scores, dtype=float).ravel()
    ids = groups.ids(x)
    thresholds = np.empty(groups.n_groups)
    for g in range(groups.n_groups):
        member = s[ids == g]
        if member.size == 0:
            warnings.warn(
                f"group {groups.labels[g]!r} has no calibration samples; "
                "threshold set to +inf"
            )
            thresholds[g] = math.inf
        else:
            thresholds[g] = split_conformal(member, alpha).threshold
    return GroupConditionalRule(groups, thresholds, score_spec or _DEFAULT_SPEC, alpha)
