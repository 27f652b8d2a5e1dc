"""Self-contained binary classification toolkit."""

from .dataset import Dataset, read_csv, write_csv
from .metrics import EvalMetrics, compute_metrics, f_value, rrse_percent
from .models import ClassifierModel, ClassifierSpec, Tree, predict_proba, train
from .validation import cross_validate, cross_validate_probs, stratified_folds

__all__ = [
    "ClassifierModel",
    "ClassifierSpec",
    "Dataset",
    "EvalMetrics",
    "Tree",
    "compute_metrics",
    "cross_validate",
    "cross_validate_probs",
    "f_value",
    "predict_proba",
    "read_csv",
    "rrse_percent",
    "stratified_folds",
    "train",
    "write_csv",
]
