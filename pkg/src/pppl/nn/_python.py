"""Pure numpy backend: forward pass, analytic backprop, momentum-SGD step.

The compiled backend in ``_kernels.pyx`` implements the same contracts; this
module is the fallback and the reference the extension is tested against.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _forward_hidden(weights, biases, x):
    """Activations per layer; h[0] is the input, h[-1] the last hidden."""
    h = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        h.append(np.maximum(x @ w + b, 0.0, dtype=np.float32))
        x = h[-1]
    return h


def forward(weights, biases, x):
    x = np.ascontiguousarray(x, dtype=np.float32)
    for w, b in zip(weights[:-1], biases[:-1]):
        x = np.maximum(x @ w + b, 0.0, dtype=np.float32)
    return x @ weights[-1] + biases[-1]


def _output_delta(scores, targets, sample_weights, loss_kind):
    """d(loss)/d(scores) and the float64 loss value."""
    n = scores.shape[0]
    w64 = sample_weights.astype(np.float64)
    if loss_kind == "mse":
        diff = scores.astype(np.float64) - targets.astype(np.float64)
        loss = float((w64 * (diff * diff).sum(axis=1)).sum() / n)
        delta = ((2.0 / n) * sample_weights)[:, None] * (scores - targets)
        return delta.astype(np.float32), loss
    z = scores.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    picked = (z * targets).sum(axis=1)
    loss = float((w64 * (np.log(e.sum(axis=1)) - picked)).sum() / n)
    delta = ((1.0 / n) * sample_weights)[:, None] * (p.astype(np.float32) - targets)
    return delta.astype(np.float32), loss


def loss_and_grads(weights, biases, x, targets, sample_weights, loss_kind):
    x = np.ascontiguousarray(x, dtype=np.float32)
    h = _forward_hidden(weights, biases, x)
    scores = h[-1] @ weights[-1] + biases[-1]
    delta, loss = _output_delta(scores, targets, sample_weights, loss_kind)
    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        grad_w[l] = h[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights[l].T) * (h[l] > 0)
    return loss, grad_w, grad_b


def train_step(weights, biases, vel_w, vel_b, x, targets, sample_weights,
               learning_rate, momentum, loss_kind):
    """One momentum-SGD step in place. Returns the pre-step loss, or NaN
    without touching the parameters if the loss or any gradient is
    non-finite."""
    loss, grad_w, grad_b = loss_and_grads(weights, biases, x, targets,
                                          sample_weights, loss_kind)
    if not np.isfinite(loss):
        return float("nan")
    for g in grad_w + grad_b:
        if not np.all(np.isfinite(g)):
            return float("nan")
    lr = np.float32(learning_rate)
    mom = np.float32(momentum)
    for p, v, g in zip(weights + biases, vel_w + vel_b, grad_w + grad_b):
        v *= mom
        v -= lr * g
        p += v
    return loss
