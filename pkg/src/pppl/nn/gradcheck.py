"""Gradient verification via central finite differences.

The finite-difference side evaluates the loss in float64 so the comparison
is not drowned by float32 rounding; the analytic side is whatever the
selected backend computes in production.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .backends import loss_and_grads
from .model import Batch, Model

MAX_CHECK_PARAMS = 10_000


def _loss_f64(weights, biases, x, targets, sample_weights, loss_kind) -> float:
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    scores = h @ weights[-1] + biases[-1]
    n = scores.shape[0]
    if loss_kind == "mse":
        diff = scores - targets
        return float((sample_weights * (diff * diff).sum(axis=1)).sum() / n)
    z = scores - scores.max(axis=1, keepdims=True)
    per = np.log(np.exp(z).sum(axis=1)) - (z * targets).sum(axis=1)
    return float((sample_weights * per).sum() / n)


def gradient_check(model: Model, batch: Batch, loss_kind: str,
                   epsilon: float = 1e-4, backend=None) -> float:
    """Worst relative error between analytic and central-finite-difference
    gradients, with denominator max(|analytic|, |numeric|, 1e-8).

    Intended for small models; refuses anything above 10^4 parameters.
    """
    if model.num_params > MAX_CHECK_PARAMS:
        raise ConfigError(
            f"gradient_check is for small models (<= {MAX_CHECK_PARAMS} params), "
            f"got {model.num_params}"
        )
    _, grad_w, grad_b = loss_and_grads(model, batch, loss_kind, backend=backend)

    w64 = [w.astype(np.float64) for w in model.weights]
    b64 = [b.astype(np.float64) for b in model.biases]
    x64 = batch.features.astype(np.float64)
    t64 = batch.targets.astype(np.float64)
    sw64 = batch.sample_weights.astype(np.float64)

    worst = 0.0
    for params, grads in ((w64, grad_w), (b64, grad_b)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                hi = _loss_f64(w64, b64, x64, t64, sw64, loss_kind)
                flat[i] = orig - epsilon
                lo = _loss_f64(w64, b64, x64, t64, sw64, loss_kind)
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                analytic = gflat[i]
                denom = max(abs(analytic), abs(numeric), 1e-8)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst
