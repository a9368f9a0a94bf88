"""Evaluation primitives: precision/recall against injected ground truth
and RMSE of recovered redundant readings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

__all__ = ["ConfusionCounts", "precision_recall", "rmse", "mean_rmse"]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def precision_recall(
    truth: Iterable[Hashable],
    predicted: Iterable[Hashable],
    universe: Iterable[Hashable],
) -> tuple[float, float, ConfusionCounts]:
    """Precision and recall of a predicted positive set against ground truth.

    Empty denominators get a defined value so perfect-on-empty runs do not
    fail: with no predictions, precision is 1.0 when the truth set is also
    empty and 0.0 otherwise; recall mirrors this when the truth set is
    empty.
    """
    truth = set(truth)
    predicted = set(predicted)
    universe = set(universe)
    if not truth <= universe:
        raise ValueError("truth set is not a subset of the decision universe")
    if not predicted <= universe:
        raise ValueError("predicted set is not a subset of the decision universe")
    tp = len(truth & predicted)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    tn = len(universe) - tp - fp - fn
    counts = ConfusionCounts(tp, fp, fn, tn)
    if tp + fp == 0:
        precision = 1.0 if not truth else 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0 if not predicted else 0.0
    else:
        recall = tp / (tp + fn)
    return precision, recall, counts


def rmse(actual: Sequence[float], estimated: Sequence[float]) -> float:
    """Root mean squared difference between paired readings."""
    a = np.asarray(actual, dtype=float)
    e = np.asarray(estimated, dtype=float)
    if a.size == 0:
        raise ValueError("rmse of empty input")
    if a.shape != e.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {e.shape}")
    return float(np.sqrt(np.mean((a - e) ** 2)))


def mean_rmse(per_node_rmse: Sequence[float]) -> float:
    """Arithmetic mean of per-node RMSE values over the redundant nodes."""
    values = [float(v) for v in per_node_rmse]
    if not values:
        raise ValueError("mean_rmse of empty input")
    return sum(values) / len(values)
