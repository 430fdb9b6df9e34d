"""Domain types shared across the toolkit: samples, conformity scores, rules.

Every type here is an immutable value after construction and every operation
is pure given explicit generator state, so evaluation can be parallelized
over samples without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .partition_model import PartitionModel

__all__ = [
    "LabeledSample",
    "ScoredSample",
    "LabeledData",
    "ScoreKind",
    "ScoreSpec",
    "QuantileVector",
    "PlcpRule",
    "SplitConformalRule",
    "ScoreNormalizer",
    "compute_score",
    "compute_scores",
    "threshold_of",
    "set_size",
    "rng_from_seed",
    "jumped_rng",
    "as_covariate_matrix",
    "as_scored_arrays",
]

# Probability vectors must sum to 1 within this tolerance.
PROB_SUM_TOL = 1e-6


def rng_from_seed(seed: int) -> np.random.Generator:
    """Seeded counter-based generator (Philox), portable across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def jumped_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent sub-stream of ``seed``'s sequence (Philox jump), for workers."""
    return np.random.Generator(np.random.Philox(seed).jumped(stream))


def as_covariate_matrix(x) -> np.ndarray:
    """Coerce covariates to a (n, d) float matrix; 1-D input is read as d=1."""
    m = np.asarray(x, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[1] < 1:
        raise ValueError(f"expected an (n, d) covariate matrix, got shape {m.shape}")
    return m


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v[None]
    if v.ndim != 1 or v.size < 1:
        raise ValueError("covariate must be a vector with at least one component")
    return v


@dataclass(frozen=True)
class LabeledSample:
    """A covariate vector paired with its label (real value or class index)."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))


@dataclass(frozen=True)
class ScoredSample:
    """A covariate vector paired with a scalar conformity score."""

    x: np.ndarray
    s: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        s = float(self.s)
        if not math.isfinite(s):
            raise ValueError(f"conformity score must be finite, got {s}")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class LabeledData:
    """Column-wise view of a labeled dataset: x is (n, d), y is (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_covariate_matrix(self.x)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y row counts differ")
        if x.shape[0] == 0:
            raise ValueError("empty dataset")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "LabeledData":
        return LabeledData(self.x[idx], self.y[idx])


def as_scored_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Normalize scored data to (x, s) arrays.

    Accepts an (x, s) pair of array-likes or a sequence of ScoredSample.
    """
    if isinstance(data, tuple) and len(data) == 2:
        x, s = data
        x = as_covariate_matrix(x)
        s = np.asarray(s, dtype=float).ravel()
    else:
        samples = list(data)
        if not samples:
            raise ValueError("empty data")
        x = np.stack([p.x for p in samples])
        s = np.array([p.s for p in samples], dtype=float)
    if x.shape[0] != s.shape[0]:
        raise ValueError("covariates and scores have different lengths")
    if s.size == 0:
        raise ValueError("empty data")
    return x, s


class ScoreKind(str, Enum):
    ABSOLUTE_RESIDUAL = "absolute_residual"
    SOFTMAX_COMPLEMENT = "softmax_complement"
    CUMULATIVE_SOFTMAX = "cumulative_softmax"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class ScoreSpec:
    """How conformity scores are computed.

    ``predictor`` is either a callable mapping an (n, d) matrix to point
    predictions (n,) or class probabilities (n, K), or a per-sample table:
    predictions for ABSOLUTE_RESIDUAL, scores themselves for PRECOMPUTED.
    """

    kind: ScoreKind
    predictor: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScoreKind(self.kind))


def _predictions(spec: ScoreSpec, x: np.ndarray) -> np.ndarray:
    if spec.predictor is None:
        raise ValueError(f"score kind {spec.kind.value} requires a predictor")
    if callable(spec.predictor):
        return np.asarray(spec.predictor(x), dtype=float)
    table = np.asarray(spec.predictor, dtype=float)
    if table.shape[0] != x.shape[0]:
        raise ValueError(
            f"predictor table has {table.shape[0]} rows, dataset has {x.shape[0]}"
        )
    return table


def _check_probabilities(probs: np.ndarray) -> np.ndarray:
    if probs.ndim != 2:
        raise ValueError("probability predictor must return an (n, K) matrix")
    if np.any(probs < 0):
        raise ValueError("class probabilities must be nonnegative")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_SUM_TOL):
        raise ValueError("class probabilities must sum to 1 within 1e-6")
    return probs


def _class_indices(y: np.ndarray, n_classes: int) -> np.ndarray:
    yi = np.asarray(y)
    cls = yi.astype(int)
    if np.any(cls != yi) or np.any(cls < 0) or np.any(cls >= n_classes):
        raise ValueError(f"class index out of range [0, {n_classes})")
    return cls


def compute_scores(spec: ScoreSpec, x, y) -> np.ndarray:
    """Vectorized conformity scores for a whole dataset."""
    x = as_covariate_matrix(x)
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y row counts differ")
    if spec.kind is ScoreKind.PRECOMPUTED:
        if spec.predictor is None:
            raise ValueError("precomputed score kind requires a score table")
        table = np.asarray(spec.predictor, dtype=float).ravel()
        if table.shape[0] != x.shape[0]:
            raise ValueError("precomputed score table does not match dataset size")
        return table.copy()
    out = _predictions(spec, x)
    if spec.kind is ScoreKind.ABSOLUTE_RESIDUAL:
        preds = out.ravel()
        if preds.shape[0] != x.shape[0]:
            raise ValueError("point predictor must return one value per row")
        return np.abs(y - preds)
    probs = _check_probabilities(out)
    cls = _class_indices(y, probs.shape[1])
    p_true = probs[np.arange(len(cls)), cls]
    if spec.kind is ScoreKind.SOFTMAX_COMPLEMENT:
        return 1.0 - p_true
    # Cumulative softmax: total mass of classes strictly more probable than y.
    return np.where(probs > p_true[:, None], probs, 0.0).sum(axis=1)


def compute_score(spec: ScoreSpec, sample: LabeledSample, index: int | None = None) -> float:
    """Conformity score of one sample; ``index`` addresses table-backed specs."""
    if spec.kind is ScoreKind.PRECOMPUTED:
        if spec.predictor is None or callable(spec.predictor):
            raise ValueError("precomputed score kind requires a score table")
        if index is None:
            raise ValueError("precomputed scores are addressed by sample index")
        return float(np.asarray(spec.predictor, dtype=float).ravel()[index])
    if not callable(spec.predictor) and spec.predictor is not None and index is not None:
        table = np.asarray(spec.predictor, dtype=float)
        spec = ScoreSpec(spec.kind, table[index : index + 1])
    return float(compute_scores(spec, sample.x[None, :], [sample.y])[0])


@dataclass(frozen=True)
class QuantileVector:
    """Per-group thresholds q = (q_1 .. q_m)."""

    q: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.ndim != 1 or q.size < 1:
            raise ValueError("quantile vector must hold at least one threshold")
        if np.any(np.isnan(q)) or np.any(np.isneginf(q)):
            raise ValueError("thresholds must be finite or +inf")
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.q.size


_ASSIGNMENTS = ("argmax", "randomized")


@dataclass(frozen=True)
class PlcpRule:
    """A trained partition model plus per-group thresholds: defines C*(x).

    Argmax assignment picks the most likely group (ties to the lowest index)
    and is the deterministic default; randomized assignment draws the group
    from the model's soft membership using an explicit generator.
    """

    model: "PartitionModel"
    q: QuantileVector
    score: ScoreSpec
    alpha: float
    assignment: str = "argmax"
    seed: int | None = None

    def __post_init__(self):
        if self.model.m != self.q.m:
            raise ValueError("model output dimension and threshold count differ")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.assignment not in _ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {_ASSIGNMENTS}")

    def weights(self, x) -> np.ndarray:
        """Soft group memberships h(x) for each row of x."""
        return self.model.forward_batch(as_covariate_matrix(x))

    def group_indices(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        h = self.weights(x)
        if self.assignment == "argmax":
            return np.argmax(h, axis=1)  # np.argmax breaks ties at the lowest index
        if rng is None:
            rng = rng_from_seed(self.seed if self.seed is not None else 0)
        u = rng.random(h.shape[0])
        idx = (np.cumsum(h, axis=1) < u[:, None]).sum(axis=1)
        return np.minimum(idx, self.q.m - 1)

    def thresholds(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.q.q[self.group_indices(x, rng)]

    def threshold_at(self, x, rng: np.random.Generator | None = None) -> float:
        return float(self.thresholds(_as_vector(x)[None, :], rng)[0])


@dataclass(frozen=True)
class SplitConformalRule:
    """A single pooled threshold (an order statistic of calibration scores, or +inf)."""

    threshold: float
    score: ScoreSpec
    alpha: float

    def __post_init__(self):
        t = float(self.threshold)
        if math.isnan(t) or t == -math.inf:
            raise ValueError("threshold must be finite or +inf")
        object.__setattr__(self, "threshold", t)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def thresholds(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.full(as_covariate_matrix(x).shape[0], self.threshold)

    def threshold_at(self, x, rng: np.random.Generator | None = None) -> float:
        return self.threshold


def threshold_of(rule, x, rng: np.random.Generator | None = None) -> float:
    """Threshold the rule applies at a single covariate point."""
    return rule.threshold_at(x, rng)


def set_size(rule, x, labels=None, rng: np.random.Generator | None = None) -> float:
    """Size of the prediction set at x.

    With no candidate labels the score kind must admit the interval-length
    shortcut (absolute residual: the set is an interval of length 2t).  With
    a finite label collection (classification classes or a y-grid fallback),
    counts the labels whose score falls at or below the threshold.
    """
    t = rule.threshold_at(x, rng)
    if labels is None:
        if rule.score.kind is not ScoreKind.ABSOLUTE_RESIDUAL:
            raise ValueError(
                "interval-length shortcut needs an absolute-residual score; "
                "pass candidate labels or a y-grid instead"
            )
        return 2.0 * t
    labels = np.asarray(labels, dtype=float).ravel()
    if math.isinf(t):
        return float(labels.size)
    xv = _as_vector(x)
    scores = compute_scores(rule.score, np.repeat(xv[None, :], labels.size, axis=0), labels)
    return float(np.count_nonzero(scores <= t))


@dataclass(frozen=True)
class ScoreNormalizer:
    """Optional min-max rescaling of scores to [0, 1], fit on calibration data.

    Off by default everywhere: the training loop never needs bounded scores,
    only the finite-sample coverage theory does.  Test-time scores are
    clamped into [0, 1].
    """

    lo: float
    hi: float

    @classmethod
    def fit(cls, scores) -> "ScoreNormalizer":
        s = np.asarray(scores, dtype=float)
        if s.size == 0 or not np.all(np.isfinite(s)):
            raise ValueError("normalizer needs a nonempty finite score sample")
        return cls(float(s.min()), float(s.max()))

    def transform(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        span = self.hi - self.lo
        if span <= 0.0:
            return np.zeros_like(s)
        return np.clip((s - self.lo) / span, 0.0, 1.0)
