"""Deterministic feed-forward network engine with weighted losses and
momentum SGD. Hot kernels run in a compiled extension when built; a numpy
fallback is selected automatically (see ``backends``)."""

from .backends import (
    active_backend,
    available_backends,
    forward,
    get_backend,
    loss_and_grads,
    train_step,
)
from .gradcheck import gradient_check
from .model import (
    Batch,
    Model,
    OptimizerState,
    init_model,
    load_checkpoint,
    make_optimizer,
    save_checkpoint,
)
from .ops import one_hot, softmax, softmax_ce_loss, weighted_mse_loss

__all__ = [
    "Batch",
    "Model",
    "OptimizerState",
    "active_backend",
    "available_backends",
    "forward",
    "get_backend",
    "gradient_check",
    "init_model",
    "load_checkpoint",
    "loss_and_grads",
    "make_optimizer",
    "one_hot",
    "save_checkpoint",
    "softmax",
    "softmax_ce_loss",
    "train_step",
    "weighted_mse_loss",
]
