"""Backend selection: compiled kernels when built, numpy otherwise.

``PPPL_BACKEND=python`` or ``PPPL_BACKEND=ext`` forces a choice; forcing
``ext`` when the extension is missing is an error rather than a silent
fallback.
"""

from __future__ import annotations

import math
import os

import numpy as np

from ..errors import ConfigError, NumericalError, ShapeError
from .model import Batch, Model, OptimizerState
from .ops import LOSS_KINDS
from . import _python

try:
    from . import _kernels
except ImportError:
    _kernels = None

_BACKENDS = {"python": _python}
if _kernels is not None:
    _BACKENDS["ext"] = _kernels


def _select():
    forced = os.environ.get("PPPL_BACKEND")
    if forced:
        if forced not in ("python", "ext"):
            raise ConfigError(f"PPPL_BACKEND must be 'python' or 'ext', got {forced!r}")
        if forced not in _BACKENDS:
            raise ConfigError("PPPL_BACKEND=ext but the compiled kernels are not built")
        return _BACKENDS[forced]
    return _BACKENDS.get("ext", _python)


_active = _select()


def active_backend() -> str:
    """Name of the backend in use: 'ext' or 'python'."""
    return _active.NAME


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Raw backend module (forward / loss_and_grads / train_step)."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigError(f"backend {name!r} not available; have {available_backends()}")


def _check_features(model: Model, features: np.ndarray) -> np.ndarray:
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[1] != model.input_dim:
        raise ShapeError(
            f"features {features.shape} do not match model input dim {model.input_dim}"
        )
    return features


def forward(model: Model, features: np.ndarray, backend=None) -> np.ndarray:
    """Raw N x M output scores (no squashing on the output layer)."""
    features = _check_features(model, features)
    impl = get_backend(backend) if isinstance(backend, str) or backend is None else backend
    return impl.forward(model.weights, model.biases, features)


def train_step(model: Model, batch: Batch, loss_kind: str, opt: OptimizerState,
               backend=None) -> float:
    """One momentum-SGD step on the analytic gradient of the selected loss.

    Updates parameters in place and returns the pre-step loss. A non-finite
    loss or gradient aborts the step (parameters untouched) and raises
    ``NumericalError``.
    """
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    features = _check_features(model, batch.features)
    if batch.targets.shape[1] != model.output_dim:
        raise ShapeError(
            f"targets {batch.targets.shape} do not match model output dim {model.output_dim}"
        )
    impl = get_backend(backend) if isinstance(backend, str) or backend is None else backend
    loss = impl.train_step(
        model.weights, model.biases, opt.vel_weights, opt.vel_biases,
        features, batch.targets, batch.sample_weights,
        opt.learning_rate, opt.momentum, loss_kind,
    )
    if math.isnan(loss):
        raise NumericalError("non-finite loss or gradient; step aborted")
    return float(loss)


def loss_and_grads(model: Model, batch: Batch, loss_kind: str, backend=None):
    """Loss plus analytic parameter gradients, without updating the model."""
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    features = _check_features(model, batch.features)
    impl = get_backend(backend) if isinstance(backend, str) or backend is None else backend
    return impl.loss_and_grads(
        model.weights, model.biases, features, batch.targets, batch.sample_weights,
        loss_kind,
    )
