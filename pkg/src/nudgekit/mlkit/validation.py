"""Stratified k-fold cross-validation with pooled scoring."""

from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .metrics import EvalMetrics, compute_metrics
from .models import ClassifierSpec, train


def stratified_folds(dataset: Dataset, k: int, seed: int) -> np.ndarray:
    """Fold index per row.

    Rows are put in canonical order first, so the assignment does not depend
    on the order the rows arrived in.
    """
    order = dataset.canonical_order()
    rng = np.random.default_rng(seed)
    folds = np.empty(len(dataset), dtype=np.int64)
    offset = 0
    for label in (0, 1):
        members = order[dataset.y[order] == label]
        members = members[rng.permutation(members.size)]
        folds[members] = (np.arange(members.size) + offset) % k
        offset += members.size
    return folds


def cross_validate_probs(
    dataset: Dataset, spec: ClassifierSpec | None = None, k: int = 10, seed: int = 0
) -> np.ndarray:
    """Out-of-fold positive probabilities, one per row."""
    if len(dataset) < k:
        raise ValueError(f"{len(dataset)} rows cannot fill {k} folds")
    dataset.check_trainable()
    folds = stratified_folds(dataset, k, seed)
    probs = np.empty(len(dataset))
    seeds = np.random.SeedSequence(seed).spawn(k)
    for f in range(k):
        test = np.flatnonzero(folds == f)
        fit = np.flatnonzero(folds != f)
        model = train(dataset.subset(fit), spec, int(seeds[f].generate_state(1)[0]))
        probs[test] = model.predict_proba(dataset.X[test])
    return probs


def cross_validate(
    dataset: Dataset, spec: ClassifierSpec | None = None, k: int = 10, seed: int = 0
) -> EvalMetrics:
    """Stratified ``k``-fold CV; out-of-fold predictions are pooled and scored once."""
    probs = cross_validate_probs(dataset, spec, k, seed)
    return compute_metrics(dataset.y, probs)
