"""Losses and score transforms shared by both backends.

Loss sums accumulate in float64 regardless of the float32 parameter dtype.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

LOSS_KINDS = ("mse", "ce")


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Length-``num_classes`` one-hot float32 rows for integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float32)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def softmax(scores: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis (max-subtracted)."""
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_loss_shapes(scores, targets, weights) -> None:
    if scores.shape != targets.shape:
        raise ShapeError(f"scores {scores.shape} vs targets {targets.shape}")
    if weights.shape != (scores.shape[0],):
        raise ShapeError(f"weights {weights.shape} do not match {scores.shape[0]} samples")


def weighted_mse_loss(scores: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """(1/N) * sum_i w_i * ||scores_i - targets_i||^2."""
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    weights = np.asarray(weights)
    _check_loss_shapes(scores, targets, weights)
    diff = scores.astype(np.float64) - targets.astype(np.float64)
    per_sample = (diff * diff).sum(axis=1)
    return float((weights.astype(np.float64) * per_sample).sum() / scores.shape[0])


def softmax_ce_loss(scores: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """(1/N) * sum_i w_i * -log softmax(scores_i)[label_i].

    Same normalization convention as :func:`weighted_mse_loss`.
    """
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    weights = np.asarray(weights)
    _check_loss_shapes(scores, targets, weights)
    z = scores.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    picked = (z * targets.astype(np.float64)).sum(axis=1)
    per_sample = log_norm - picked
    return float((weights.astype(np.float64) * per_sample).sum() / scores.shape[0])
