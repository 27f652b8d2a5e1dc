"""Accuracy, precision, recall, F-value and root relative squared error."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f_value: float
    rrse_percent: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def f_value(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


def rrse_percent(labels, probs) -> float:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    base = float(((y.mean() - y) ** 2).sum())
    if base == 0:
        raise ValueError("RRSE undefined: labels contain a single class")
    return 100.0 * math.sqrt(float(((p - y) ** 2).sum()) / base)


def compute_metrics(
    labels: Sequence[int], probs: Sequence[float], threshold: float = 0.5
) -> EvalMetrics:
    """Score probabilities against 0/1 labels.

    A probability exactly at ``threshold`` predicts the negative class.
    """
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(probs, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("labels and probs differ in length")
    if y.size == 0:
        raise ValueError("empty input")
    pred = (p > threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    acc = float((pred == y).mean())
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return EvalMetrics(acc, prec, rec, f_value(prec, rec), rrse_percent(y, p))
