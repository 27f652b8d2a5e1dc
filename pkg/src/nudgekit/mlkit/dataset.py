"""Labelled feature matrix with per-row provenance tags, plus CSV round-trip."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class Dataset:
    feature_names: list[str]
    X: np.ndarray  # float64, NaN marks an absent entry
    y: np.ndarray  # int64 in {0, 1}
    tags: list[tuple] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names do not match X arity")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y differ in length")
        if not self.tags:
            self.tags = [() for _ in range(len(self.y))]
        if len(self.tags) != len(self.y):
            raise ValueError("one provenance tag per row required")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def positive_fraction(self) -> float:
        return float(self.y.mean()) if len(self) else math.nan

    def check_trainable(self) -> None:
        if len(self) < 2:
            raise ValueError("need at least 2 rows to train")
        if self.y.min() == self.y.max():
            raise ValueError("both labels must be present to train")
        if self.X.shape[1] == 0:
            raise ValueError("no usable features")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.feature_names, self.X[idx], self.y[idx], [self.tags[i] for i in idx])

    def select(self, names: Sequence[str]) -> "Dataset":
        cols = [self.feature_names.index(n) for n in names]
        return Dataset(list(names), self.X[:, cols], self.y, list(self.tags))

    def concat(self, other: "Dataset") -> "Dataset":
        if other.feature_names != self.feature_names:
            raise ValueError("feature names differ")
        return Dataset(
            self.feature_names,
            np.vstack([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            self.tags + other.tags,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()[:16]

    def canonical_order(self) -> np.ndarray:
        """Row order that depends only on row content, not on input order."""

        def key(i):
            row = tuple(math.inf if math.isnan(v) else v for v in self.X[i])
            return (tuple(str(t) for t in self.tags[i]), row, int(self.y[i]))

        return np.array(sorted(range(len(self)), key=key), dtype=np.int64)

    @classmethod
    def empty(cls, feature_names: Sequence[str]) -> "Dataset":
        return cls(list(feature_names), np.empty((0, len(feature_names))), np.empty(0, dtype=np.int64))


TAG_COLUMN = "tag"
LABEL_COLUMN = "label"


def write_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([TAG_COLUMN, *ds.feature_names, LABEL_COLUMN])
        for tag, row, label in zip(ds.tags, ds.X, ds.y):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
            w.writerow(["/".join(str(t) for t in tag), *cells, int(label)])


def read_csv(path: str | Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        has_tag = header[0] == TAG_COLUMN
        if header[-1] != LABEL_COLUMN:
            raise ValueError(f"{path}: last column must be {LABEL_COLUMN!r}")
        names = header[1:-1] if has_tag else header[:-1]
        rows, labels, tags = [], [], []
        for rec in r:
            if not rec:
                continue
            cells = rec[1:-1] if has_tag else rec[:-1]
            rows.append([float(c) if c != "" else math.nan for c in cells])
            labels.append(int(rec[-1]))
            tags.append(tuple(rec[0].split("/")) if has_tag and rec[0] else ())
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(names, X, np.array(labels, dtype=np.int64), tags)
