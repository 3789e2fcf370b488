"""Evaluation metrics for sigmoid-output predictions with a "none" category.

A prediction is only valid when its top class probability strictly
exceeds the confidence threshold; otherwise the example is predicted as
"none" (out of distribution). AUROC and AUPR are computed one-vs-rest
per class, scoring the "none" category by one minus the top class
probability, and averaged weighted by class support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import NONE_LABEL


@dataclass(frozen=True)
class PredictionSet:
    """Per-example class probabilities plus true labels.

    Probabilities are sigmoid outputs in [0, 1]; rows need not sum to 1.
    True labels are class indices or NONE_LABEL.
    """

    probs: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=float)
        labels = np.ascontiguousarray(self.true_labels, dtype=np.int64)
        if probs.ndim != 2:
            raise ValueError(f"probs must be 2-D, got shape {probs.shape}")
        n, C = probs.shape
        if C < 2:
            raise ValueError(f"need at least 2 classes, got {C}")
        if labels.shape != (n,):
            raise ValueError(f"true_labels shape {labels.shape} does not match n={n}")
        if n and (((probs < 0) | (probs > 1)).any() or not np.isfinite(probs).all()):
            raise ValueError("probabilities must lie in [0, 1]")
        bad = (labels != NONE_LABEL) & ((labels < 0) | (labels >= C))
        if bad.any():
            raise ValueError(f"true labels out of range [0, {C}): {labels[bad][:5]}")
        probs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "true_labels", labels)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def confidence(self) -> np.ndarray:
        """Top class probability per example."""
        return self.probs.max(axis=1) if self.n else np.zeros(0)

    def argmax_class(self) -> np.ndarray:
        """Top class per example; ties broken toward the lowest index."""
        return self.probs.argmax(axis=1) if self.n else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class ThresholdedOutcome:
    predicted: np.ndarray
    threshold: float


class AccuracyTriplet(NamedTuple):
    id_acc: float | None
    none_acc: float | None
    overall_acc: float | None


@dataclass(frozen=True)
class ReliabilityDiagram:
    """Binned confidence vs accuracy over argmax predictions.

    NONE-labeled examples are excluded: calibration is judged on class
    predictions only. Empty bins carry NaN confidence/accuracy.
    """

    edges: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray
    count: np.ndarray


@dataclass(frozen=True)
class OneVsRestScores:
    """Per-class area scores plus the support-weighted average.

    ``per_class[c]`` is NaN when class c lacks a positive or a negative
    example; such classes are excluded, with their weight, from the
    average. ``none_score`` covers the "none" pseudo-class.
    """

    per_class: np.ndarray
    none_score: float
    weighted_average: float
    supports: np.ndarray
    none_support: int


def apply_threshold(p: PredictionSet, threshold: float) -> ThresholdedOutcome:
    """Predict the argmax class where its probability strictly exceeds
    the threshold, NONE_LABEL otherwise."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    predicted = np.where(p.confidence() > threshold, p.argmax_class(), NONE_LABEL)
    return ThresholdedOutcome(predicted, float(threshold))


def accuracy_triplet(outcome: ThresholdedOutcome, p: PredictionSet) -> AccuracyTriplet:
    """Accuracy over ID examples, over "none" examples, and overall.

    A "none" example counts as correct when predicted NONE. Empty
    denominators yield None rather than a 0/0 value.
    """
    if outcome.predicted.shape != p.true_labels.shape:
        raise ValueError("outcome does not match prediction set")
    correct = outcome.predicted == p.true_labels
    is_none = p.true_labels == NONE_LABEL
    n_id = int((~is_none).sum())
    n_none = int(is_none.sum())
    id_acc = float(correct[~is_none].mean()) if n_id else None
    none_acc = float(correct[is_none].mean()) if n_none else None
    overall = float(correct.mean()) if p.n else None
    return AccuracyTriplet(id_acc, none_acc, overall)


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    new_group = np.r_[True, xs[1:] != xs[:-1]]
    group = np.cumsum(new_group) - 1
    raw = np.arange(1, x.size + 1, dtype=float)
    counts = np.bincount(group)
    sums = np.bincount(group, weights=raw)
    ranks = np.empty(x.size)
    ranks[order] = (sums / counts)[group]
    return ranks


def _auroc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Rank-based AUROC; tied scores contribute 1/2. NaN if degenerate."""
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = _midranks(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_precision(scores: np.ndarray, positive: np.ndarray) -> float:
    """Step-wise area under the precision-recall curve (average precision).

    Thresholds sweep the distinct scores in descending order; tied scores
    enter as a single block. NaN if there is no positive or no negative.
    """
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == positive.size:
        return float("nan")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    pos = positive[order].astype(float)
    block_end = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(pos)[block_end]
    ranks = np.arange(1, s.size + 1)[block_end]
    precision = tp / ranks
    recall = tp / n_pos
    recall_prev = np.r_[0.0, recall[:-1]]
    return float(((recall - recall_prev) * precision).sum())


def _ovr(p: PredictionSet, score_fn) -> OneVsRestScores:
    C = p.n_classes
    labels = p.true_labels
    per_class = np.empty(C)
    supports = np.empty(C, dtype=np.int64)
    for c in range(C):
        positive = labels == c
        supports[c] = int(positive.sum())
        per_class[c] = score_fn(p.probs[:, c], positive)
    none_positive = labels == NONE_LABEL
    none_support = int(none_positive.sum())
    none_score = score_fn(1.0 - p.confidence(), none_positive)
    values = np.r_[per_class, none_score]
    weights = np.r_[supports, none_support].astype(float)
    defined = ~np.isnan(values)
    if not defined.any() or weights[defined].sum() == 0:
        raise ValueError("no class has both positive and negative examples")
    weighted = float((values[defined] * weights[defined]).sum() / weights[defined].sum())
    return OneVsRestScores(per_class, float(none_score), weighted, supports, none_support)


def roc_auc_ovr(p: PredictionSet) -> OneVsRestScores:
    """One-vs-rest AUROC per class and support-weighted average.

    Class c is scored by probs[:, c]; the "none" pseudo-class by
    1 - max class probability (consistent with thresholding: predicting
    NONE at threshold t is exactly none-score >= 1 - t).
    """
    return _ovr(p, _auroc)


def pr_auc_ovr(p: PredictionSet) -> OneVsRestScores:
    """One-vs-rest AUPR (average precision) and support-weighted average."""
    return _ovr(p, _average_precision)


def reliability(p: PredictionSet, bins: int = 10) -> ReliabilityDiagram:
    """Bin argmax confidence into uniform bins on [0, 1] and compare the
    per-bin mean confidence with the per-bin argmax accuracy."""
    if bins < 2:
        raise ValueError(f"need bins >= 2, got {bins}")
    is_id = p.true_labels != NONE_LABEL
    conf = p.confidence()[is_id]
    correct = (p.argmax_class() == p.true_labels)[is_id].astype(float)
    idx = np.minimum((conf * bins).astype(int), bins - 1)
    count = np.bincount(idx, minlength=bins)
    with np.errstate(invalid="ignore"):
        mean_conf = np.bincount(idx, weights=conf, minlength=bins) / count
        acc = np.bincount(idx, weights=correct, minlength=bins) / count
    return ReliabilityDiagram(np.linspace(0.0, 1.0, bins + 1), mean_conf, acc, count)


def confidence_accuracy_correlation(p: PredictionSet, bins: int = 10) -> float | None:
    """Pearson correlation between per-bin mean confidence and per-bin
    accuracy over the non-empty reliability bins.

    Returns None when either side has zero variance; raises with fewer
    than two non-empty bins.
    """
    diagram = reliability(p, bins)
    nonempty = diagram.count > 0
    if int(nonempty.sum()) < 2:
        raise ValueError("need at least 2 non-empty reliability bins")
    x = diagram.mean_confidence[nonempty]
    y = diagram.accuracy[nonempty]
    if x.std() == 0.0 or y.std() == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def confidence_accuracy_correlation_per_example(p: PredictionSet) -> float | None:
    """Pearson correlation between per-example confidence and binary
    correctness, an unbinned companion to the per-bin correlation."""
    is_id = p.true_labels != NONE_LABEL
    conf = p.confidence()[is_id]
    correct = (p.argmax_class() == p.true_labels)[is_id].astype(float)
    if conf.size < 2 or conf.std() == 0.0 or correct.std() == 0.0:
        return None
    return float(np.corrcoef(conf, correct)[0, 1])


def confidence_histogram(p: PredictionSet, bins: int) -> np.ndarray:
    """Counts of per-example argmax confidence over uniform bins on [0, 1]."""
    if bins < 1:
        raise ValueError(f"need bins >= 1, got {bins}")
    if p.n == 0:
        return np.zeros(bins, dtype=np.int64)
    idx = np.minimum((p.confidence() * bins).astype(int), bins - 1)
    return np.bincount(idx, minlength=bins)
