"""Decision tree, bagged random forest and k-NN classifiers for binary labels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Sequence

import numpy as np

from . import _kernels
from .dataset import Dataset

MODEL_FORMAT = "nudgekit-model"
MODEL_VERSION = 1
KINDS = ("tree", "forest", "knn")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "forest"
    n_trees: int = 10
    max_depth: int = 0  # 0 = unlimited
    min_leaf: int = 1
    bag_fraction: float = 1.0
    features_per_split: int = 0  # 0 = log2(d) + 1 for forests, all for a single tree
    k: int = 6

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.n_trees < 1 or self.min_leaf < 1 or self.k < 1:
            raise ValueError("n_trees, min_leaf and k must be positive")
        if not 0 < self.bag_fraction <= 1:
            raise ValueError("bag_fraction must lie in (0, 1]")

    def split_features(self, n_features: int) -> int:
        if self.features_per_split > 0:
            return min(self.features_per_split, n_features)
        if self.kind == "forest":
            return min(n_features, int(math.log2(n_features)) + 1)
        return n_features


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    missing_left: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        return int(_kernels.tree_depth(self.left, self.right))

    def accumulate(self, X: np.ndarray, out: np.ndarray) -> None:
        _kernels.predict_tree(
            self.feature, self.threshold, self.left, self.right, self.value, self.missing_left, X, out
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        self.accumulate(np.ascontiguousarray(X, dtype=np.float64), out)
        return out

    def to_nested(self) -> list[list]:
        return [
            [int(f), float(t), int(l), int(r), float(v), bool(m)]
            for f, t, l, r, v, m in zip(
                self.feature, self.threshold, self.left, self.right, self.value, self.missing_left
            )
        ]

    @classmethod
    def from_nested(cls, nodes: list[list]) -> "Tree":
        cols = list(zip(*nodes)) if nodes else [[]] * 6
        return cls(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=np.float64),
            np.array(cols[2], dtype=np.int64),
            np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=np.float64),
            np.array(cols[5], dtype=np.bool_),
        )


@dataclass
class KnnState:
    rows: np.ndarray  # min-max normalised, imputed
    labels: np.ndarray
    lo: np.ndarray
    scale: np.ndarray
    medians: np.ndarray


@dataclass
class ClassifierModel:
    spec: ClassifierSpec
    feature_names: list[str]
    fingerprint: str
    seed: int
    trees: list[Tree] = field(default_factory=list)
    knn: KnnState | None = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    def predict_proba(self, X) -> np.ndarray:
        """Positive-class probability for each row of ``X`` (NaN = absent)."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"row arity {X.shape[1]} does not match model arity {len(self.feature_names)}"
            )
        if self.kind == "knn":
            return _knn_predict(self.knn, self.spec.k, X)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            tree.accumulate(X, out)
        return out / len(self.trees)

    def tree_probas(self, X) -> np.ndarray:
        """Per-tree leaf probabilities, shape (n_trees, n_rows)."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return np.vstack([t.predict_proba(X) for t in self.trees])

    # serialisation -------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "parameters": asdict(self.spec),
            "feature_names": self.feature_names,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
        }
        if self.kind == "knn":
            k = self.knn
            doc["knn"] = {
                "rows": k.rows.tolist(),
                "labels": k.labels.tolist(),
                "lo": k.lo.tolist(),
                "scale": k.scale.tolist(),
                "medians": k.medians.tolist(),
            }
        else:
            doc["trees"] = [t.to_nested() for t in self.trees]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ClassifierModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a nudgekit model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}")
        spec = ClassifierSpec(**doc["parameters"])
        model = cls(spec, list(doc["feature_names"]), doc["fingerprint"], int(doc["seed"]))
        if spec.kind == "knn":
            k = doc["knn"]
            model.knn = KnnState(
                np.array(k["rows"], dtype=np.float64).reshape(len(k["labels"]), -1),
                np.array(k["labels"], dtype=np.int64),
                np.array(k["lo"], dtype=np.float64),
                np.array(k["scale"], dtype=np.float64),
                np.array(k["medians"], dtype=np.float64),
            )
        else:
            model.trees = [Tree.from_nested(t) for t in doc["trees"]]
        return model

    @classmethod
    def from_json(cls, text: str) -> "ClassifierModel":
        return cls.from_dict(json.loads(text))


def _fit_tree(X, y, idx, spec: ClassifierSpec, seed: int) -> Tree:
    arrays = _kernels.build_tree(
        X,
        y,
        idx,
        spec.max_depth,
        spec.min_leaf,
        spec.split_features(X.shape[1]),
        seed,
    )
    return Tree(*arrays)


def _tree_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def train(dataset: Dataset, spec: ClassifierSpec | None = None, seed: int = 0) -> ClassifierModel:
    """Fit a classifier; identical (dataset, spec, seed) give identical models."""
    spec = spec or ClassifierSpec()
    dataset.check_trainable()
    X = np.ascontiguousarray(dataset.X, dtype=np.float64)
    y = np.ascontiguousarray(dataset.y, dtype=np.int64)
    n = X.shape[0]
    model = ClassifierModel(spec, list(dataset.feature_names), dataset.fingerprint(), seed)

    if spec.kind == "knn":
        model.knn = _knn_fit(X, y)
        return model

    if spec.kind == "tree":
        model.trees = [_fit_tree(X, y, np.arange(n, dtype=np.int64), spec, seed)]
        return model

    n_bag = max(1, int(round(spec.bag_fraction * n)))
    for tree_seed in _tree_seeds(seed, spec.n_trees):
        rng = np.random.default_rng(tree_seed)
        idx = rng.integers(0, n, size=n_bag).astype(np.int64)
        model.trees.append(_fit_tree(X, y, idx, spec, tree_seed))
    return model


def predict_proba(model: ClassifierModel, row: Sequence[float]) -> float:
    """Positive-class probability for one feature vector."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("predict_proba takes a single row")
    return float(model.predict_proba(row[None, :])[0])


def _knn_fit(X: np.ndarray, y: np.ndarray) -> KnnState:
    medians = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        col = col[~np.isnan(col)]
        medians[j] = float(np.median(col)) if col.size else 0.0
    Xi = np.where(np.isnan(X), medians, X)
    lo = Xi.min(axis=0)
    rng_ = Xi.max(axis=0) - lo
    scale = np.where(rng_ > 0, rng_, 1.0)
    return KnnState((Xi - lo) / scale, y.copy(), lo, scale, medians)


def _knn_predict(state: KnnState, k: int, X: np.ndarray) -> np.ndarray:
    Xi = np.where(np.isnan(X), state.medians, X)
    Z = (Xi - state.lo) / state.scale
    k = min(k, state.rows.shape[0])
    out = np.empty(Z.shape[0])
    chunk = 512
    for s in range(0, Z.shape[0], chunk):
        block = Z[s : s + chunk]
        d2 = ((block[:, None, :] - state.rows[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[s : s + chunk] = state.labels[nearest].mean(axis=1)
    return out
