"""Confidence-threshold sweep and the two threshold-selection heuristics.

The sweep walks a uniform grid of thresholds, recording the accuracy
triplet and the ratio TP/(FP+FN) computed separately for the pooled ID
classes and for the "none" category. One heuristic picks the threshold
where overall and "none" accuracy intersect; the other maximizes the
equal-weight mean of the two ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import NONE_LABEL
from .metrics import PredictionSet, accuracy_triplet, apply_threshold

SWEEP_COLUMNS = ("threshold", "id_acc", "none_acc", "overall_acc", "ratio_id", "ratio_none")


@dataclass(frozen=True)
class ThresholdSweep:
    """Per-threshold accuracies and TP/(FP+FN) ratios.

    Ratios are NaN when TP = 0 with an empty denominator and +inf when
    TP > 0 with an empty denominator (a perfect operating point, treated
    as better than any finite ratio).
    """

    thresholds: np.ndarray
    id_acc: np.ndarray
    none_acc: np.ndarray
    overall_acc: np.ndarray
    ratio_id: np.ndarray
    ratio_none: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SWEEP_COLUMNS)
            for i in range(self.thresholds.size):
                writer.writerow([
                    repr(float(self.thresholds[i])),
                    repr(float(self.id_acc[i])),
                    repr(float(self.none_acc[i])),
                    repr(float(self.overall_acc[i])),
                    repr(float(self.ratio_id[i])),
                    repr(float(self.ratio_none[i])),
                ])


@dataclass(frozen=True)
class IntersectionResult:
    threshold: float
    # False when the curves never cross and the closest-gap grid point
    # was returned instead
    crossed: bool


def _ratio(tp: int, fp: int, fn: int) -> float:
    if fp + fn == 0:
        return float("inf") if tp > 0 else float("nan")
    return tp / (fp + fn)


def sweep(p: PredictionSet, grid_step: float = 0.01) -> ThresholdSweep:
    """Evaluate accuracies and ratios on a threshold grid covering [0, 1]."""
    if not 0.0 < grid_step <= 0.5:
        raise ValueError(f"grid_step must be in (0, 0.5], got {grid_step}")
    n_steps = int(np.ceil(1.0 / grid_step))
    grid = np.minimum(np.arange(n_steps + 1) * grid_step, 1.0)
    is_none = p.true_labels == NONE_LABEL
    n_none = int(is_none.sum())

    cols = {name: np.empty(grid.size) for name in SWEEP_COLUMNS[1:]}
    for i, t in enumerate(grid):
        outcome = apply_threshold(p, float(t))
        triplet = accuracy_triplet(outcome, p)
        pred_none = outcome.predicted == NONE_LABEL
        # pooled one-vs-rest counts over the real classes
        tp_id = int((~is_none & (outcome.predicted == p.true_labels)).sum())
        n_valid = int((~pred_none).sum())
        fp_id = n_valid - tp_id
        fn_id = int((~is_none).sum()) - tp_id
        tp_none = int((is_none & pred_none).sum())
        fp_none = int((~is_none & pred_none).sum())
        fn_none = n_none - tp_none
        cols["id_acc"][i] = np.nan if triplet.id_acc is None else triplet.id_acc
        cols["none_acc"][i] = np.nan if triplet.none_acc is None else triplet.none_acc
        cols["overall_acc"][i] = np.nan if triplet.overall_acc is None else triplet.overall_acc
        cols["ratio_id"][i] = _ratio(tp_id, fp_id, fn_id)
        cols["ratio_none"][i] = _ratio(tp_none, fp_none, fn_none)
    return ThresholdSweep(grid, cols["id_acc"], cols["none_acc"], cols["overall_acc"],
                          cols["ratio_id"], cols["ratio_none"])


def heuristic_intersection(s: ThresholdSweep) -> IntersectionResult:
    """Threshold where overall accuracy meets "none" accuracy.

    Between adjacent grid points with a sign change the crossing is
    located by linear interpolation of the difference; with several
    crossings the lowest one wins. Curves that never cross fall back to
    the grid point of minimal gap, flagged via ``crossed=False``.
    """
    if np.isnan(s.none_acc).all():
        raise ValueError("sweep has no \"none\" accuracy curve (no NONE examples)")
    diff = s.overall_acc - s.none_acc
    if np.isnan(diff).all():
        raise ValueError("sweep has no overlapping accuracy curves")
    for i in range(diff.size):
        if diff[i] == 0.0:
            return IntersectionResult(float(s.thresholds[i]), True)
        if i + 1 < diff.size and diff[i] * diff[i + 1] < 0.0:
            t0, t1 = s.thresholds[i], s.thresholds[i + 1]
            frac = abs(diff[i]) / (abs(diff[i]) + abs(diff[i + 1]))
            return IntersectionResult(float(t0 + frac * (t1 - t0)), True)
    best = int(np.nanargmin(np.abs(diff)))
    return IntersectionResult(float(s.thresholds[best]), False)


def heuristic_ratio(s: ThresholdSweep) -> float:
    """Threshold maximizing the equal-weight mean of the ID and "none"
    TP/(FP+FN) ratios, over thresholds where both are defined.

    Ties break toward the lower threshold; +inf ratios (perfect
    operating points) beat every finite objective.
    """
    objective = (s.ratio_id + s.ratio_none) / 2.0
    if np.isnan(objective).all():
        raise ValueError("ratio objective is undefined at every threshold")
    best = int(np.nanargmax(objective))
    return float(s.thresholds[best])
