"""Combiner rules and classification metrics.

All combiners take a list of row-stochastic prediction matrices with
identical shapes and return a matrix of the same shape, so metrics compose
uniformly over single models and ensembles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadWeights, EmptyList, ShapeMismatch

# -log(p) is computed on p clamped to [LOG_CLAMP, 1] so one-hot-wrong rows
# stay finite.
LOG_CLAMP = 1e-12
WEIGHT_SUM_TOLERANCE = 1e-6

METRIC_NAMES = ("cross_entropy", "error_rate", "macro_f1")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float

    def __post_init__(self):
        if self.name not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.name!r}")


def _stack(preds: Sequence[np.ndarray]) -> np.ndarray:
    if len(preds) == 0:
        raise EmptyList("need at least one prediction matrix")
    shape = preds[0].shape
    for p in preds[1:]:
        if p.shape != shape:
            raise ShapeMismatch(f"prediction shapes differ: {p.shape} vs {shape}")
    return np.stack([np.asarray(p, dtype=np.float64) for p in preds])


def average_combine(preds: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of the member predictions."""
    return _stack(preds).mean(axis=0)


def weighted_average_combine(preds: Sequence[np.ndarray], weights) -> np.ndarray:
    """Convex combination sum_i w_i * P_i."""
    stack = _stack(preds)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != stack.shape[0]:
        raise ShapeMismatch(f"{w.shape[0] if w.ndim == 1 else '?'} weights for {stack.shape[0]} matrices")
    if np.any(w < 0):
        raise BadWeights("weights must be non-negative")
    if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise BadWeights(f"weights sum to {w.sum()!r}, expected 1")
    return np.tensordot(w, stack, axes=1)


def majority_vote_combine(preds: Sequence[np.ndarray]) -> np.ndarray:
    """Each model votes its argmax class; output is one-hot on the plurality.

    Ties (within a row's argmax and between vote counts) resolve to the
    lowest class index.
    """
    stack = _stack(preds)
    n_models, n_samples, n_classes = stack.shape
    votes = stack.argmax(axis=2)
    counts = np.zeros((n_samples, n_classes), dtype=np.int64)
    rows = np.arange(n_samples)
    for m in range(n_models):
        counts[rows, votes[m]] += 1
    winners = counts.argmax(axis=1)
    out = np.zeros((n_samples, n_classes), dtype=np.float64)
    out[rows, winners] = 1.0
    return out


def _check_labels(preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if preds.ndim != 2:
        raise ShapeMismatch("predictions must be a 2-D matrix")
    if labels.ndim != 1 or labels.shape[0] != preds.shape[0]:
        raise ShapeMismatch(
            f"{labels.shape[0] if labels.ndim == 1 else '?'} labels for {preds.shape[0]} samples"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= preds.shape[1]):
        raise ShapeMismatch("label index out of class range")
    return labels.astype(np.int64)


def cross_entropy(preds: np.ndarray, labels) -> float:
    """Mean over samples of -log p(true class), p clamped to [1e-12, 1]."""
    labels = _check_labels(preds, labels)
    p_true = preds[np.arange(preds.shape[0]), labels]
    return float(-np.log(np.clip(p_true, LOG_CLAMP, 1.0)).mean())


def error_rate(preds: np.ndarray, labels) -> float:
    """Fraction of samples whose argmax class (ties -> lowest) is wrong."""
    labels = _check_labels(preds, labels)
    return float((preds.argmax(axis=1) != labels).mean())


def macro_f1(preds: np.ndarray, labels) -> float:
    """Unweighted mean of per-class F1.

    A class absent from both labels and predicted classes is excluded from
    the mean; a class present on only one side contributes F1 = 0.
    """
    labels = _check_labels(preds, labels)
    predicted = preds.argmax(axis=1)
    n_classes = preds.shape[1]
    scores = []
    for c in range(n_classes):
        tp = int(np.sum((predicted == c) & (labels == c)))
        fp = int(np.sum((predicted == c) & (labels != c)))
        fn = int(np.sum((predicted != c) & (labels == c)))
        if tp == 0 and fp == 0 and fn == 0:
            continue  # class absent everywhere: excluded
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    if not scores:
        raise ShapeMismatch("no classes present in labels or predictions")
    return float(np.mean(scores))


_METRIC_FNS = {
    "cross_entropy": cross_entropy,
    "error_rate": error_rate,
    "macro_f1": macro_f1,
}


def evaluate_metric(name: str, preds: np.ndarray, labels) -> float:
    try:
        fn = _METRIC_FNS[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}") from None
    return fn(preds, labels)


def error_value(name: str, preds: np.ndarray, labels) -> float:
    """Metric in error orientation (lower is better); macro_f1 flips to 1 - F1."""
    value = evaluate_metric(name, preds, labels)
    return 1.0 - value if name == "macro_f1" else value
