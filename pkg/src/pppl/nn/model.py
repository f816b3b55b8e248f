"""Feed-forward model container, initialization, and checkpoint files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, ShapeError

CHECKPOINT_MAGIC = "PPPL-CKPT"
CHECKPOINT_VERSION = 1


@dataclass
class Model:
    """Fully-connected network with rectifier hidden layers and a linear
    output layer (raw scores, no squashing).

    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l+1])``; biases are
    zero-initialized. Parameters are float32.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "Model":
        return Model(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            rng_seed=self.rng_seed,
        )

    def validate(self) -> None:
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("parameter count does not match layer dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_dims[l], self.layer_dims[l + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ShapeError(f"layer {l}: weight shape {w.shape} does not chain {expect}")


@dataclass
class OptimizerState:
    """Momentum-SGD state; velocity buffers mirror the model parameters."""

    learning_rate: float
    momentum: float
    vel_weights: list[np.ndarray]
    vel_biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be nonnegative, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class Batch:
    """Training minibatch: features, one-hot targets, per-sample weights."""

    features: np.ndarray
    targets: np.ndarray
    sample_weights: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        self.sample_weights = np.ascontiguousarray(self.sample_weights, dtype=np.float32)
        n = self.features.shape[0]
        if self.targets.shape[0] != n or self.sample_weights.shape != (n,):
            raise ShapeError("batch arrays disagree on sample count")
        rows = self.targets.sum(axis=1)
        if not (np.allclose(rows, 1.0) and np.all(self.targets.max(axis=1) == 1.0)):
            raise ShapeError("targets must be one-hot rows")
        if np.any(self.sample_weights < 0):
            raise ShapeError("sample weights must be nonnegative")


def init_model(layer_dims: list[int], seed: int) -> Model:
    """Create a model with fan-scaled symmetric uniform weights.

    Each weight matrix is drawn from U(-s, s) with s = sqrt(6 / (fan_in +
    fan_out)); biases start at zero. Fully determined by ``seed``.
    """
    if len(layer_dims) < 2:
        raise ConfigError(f"need at least one layer transition, got dims {layer_dims}")
    if any(int(d) < 1 for d in layer_dims):
        raise ConfigError(f"all layer dims must be >= 1, got {layer_dims}")
    dims = [int(d) for d in layer_dims]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-scale, scale, size=(fan_in, fan_out)).astype(np.float32)
        weights.append(w)
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return Model(layer_dims=dims, weights=weights, biases=biases, rng_seed=int(seed))


def make_optimizer(model: Model, learning_rate: float, momentum: float = 0.9) -> OptimizerState:
    """Zero-initialized momentum buffers shaped like the model parameters."""
    return OptimizerState(
        learning_rate=float(learning_rate),
        momentum=float(momentum),
        vel_weights=[np.zeros_like(w) for w in model.weights],
        vel_biases=[np.zeros_like(b) for b in model.biases],
    )


def save_checkpoint(model: Model, path: str | Path, loss_kind: str = "mse") -> None:
    """Write a self-describing checkpoint: a textual header followed by
    row-major little-endian float32 parameter arrays (W0, b0, W1, b1, ...).
    """
    path = Path(path)
    header = (
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n"
        f"layer_dims: {','.join(str(d) for d in model.layer_dims)}\n"
        f"seed: {model.rng_seed}\n"
        f"loss: {loss_kind}\n"
        "---\n"
    )
    with path.open("wb") as fh:
        fh.write(header.encode("ascii"))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[Model, str]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns the model and the loss kind recorded in the header. The header is
    validated against the byte payload; any mismatch raises ``DataError``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    sep = b"---\n"
    cut = blob.find(sep)
    if cut < 0:
        raise DataError(f"{path}: missing header terminator")
    try:
        lines = blob[:cut].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: header is not ASCII") from exc
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise DataError(f"{path}: not a model checkpoint")
    version = lines[0].split()[1]
    if int(version) != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        dims = [int(d) for d in fields["layer_dims"].split(",")]
        seed = int(fields["seed"])
        loss_kind = fields["loss"]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed header field ({exc})") from exc
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise DataError(f"{path}: invalid layer dims {dims}")

    payload = blob[cut + len(sep):]
    expected = sum(4 * (a * b + b) for a, b in zip(dims[:-1], dims[1:]))
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(payload, dtype="<f4", count=fan_in * fan_out, offset=offset)
        offset += 4 * fan_in * fan_out
        b = np.frombuffer(payload, dtype="<f4", count=fan_out, offset=offset)
        offset += 4 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    model = Model(layer_dims=dims, weights=weights, biases=biases, rng_seed=seed)
    model.validate()
    return model, loss_kind
