"""Classification metrics computed from a model's argmax predictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError
from .nn import Model, forward


@dataclass
class Metrics:
    """Accuracy, per-class precision/recall/F1, and a confusion matrix with
    rows indexed by true class and columns by predicted class. Undefined
    ratios (empty class or empty prediction) are reported as 0."""

    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    positive_class: int | None = None

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def f1_headline(self) -> float:
        """Positive-class F1 when a positive class is set, macro F1 otherwise."""
        if self.positive_class is not None:
            return float(self.f1[self.positive_class])
        return float(self.f1.mean())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": [float(v) for v in self.precision],
            "recall": [float(v) for v in self.recall],
            "f1": [float(v) for v in self.f1],
            "f1_headline": self.f1_headline,
            "confusion": self.confusion.tolist(),
            "positive_class": self.positive_class,
        }


def confusion_matrix(true_labels: np.ndarray, predicted: np.ndarray,
                     num_classes: int) -> np.ndarray:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    return np.bincount(true_labels * num_classes + predicted,
                       minlength=num_classes * num_classes
                       ).reshape(num_classes, num_classes)


def metrics_from_predictions(true_labels: np.ndarray, predicted: np.ndarray,
                             num_classes: int,
                             positive_class: int | None = None) -> Metrics:
    if positive_class is not None and not 0 <= positive_class < num_classes:
        raise ConfigError(f"positive_class {positive_class} out of range for M={num_classes}")
    cm = confusion_matrix(true_labels, predicted, num_classes)
    diag = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    accuracy = float(diag.sum() / max(cm.sum(), 1))
    return Metrics(accuracy, precision, recall, f1, cm, positive_class)


def evaluate(model: Model, dataset: LabeledDataset,
             positive_class: int | None = None) -> Metrics:
    """Score the dataset, predict by argmax, and tabulate metrics."""
    if dataset.num_classes != model.output_dim:
        raise ConfigError(
            f"dataset has {dataset.num_classes} classes, model outputs {model.output_dim}")
    predicted = np.argmax(forward(model, dataset.features), axis=1)
    return metrics_from_predictions(dataset.labels, predicted,
                                    dataset.num_classes, positive_class)
