"""The proportional progressive pseudo-labeling algorithm.

Each adaptation round scores the target set, pseudo-labels it by argmax,
ranks samples by certainty (gap between the two largest raw scores), admits
the top N% of each pseudo-class on a growing schedule with rank-decaying
weights, caps over-predicted classes at their expected proportions, mixes in
randomly selected source samples at weight 1, and trains one pass with the
weighted MSE loss.

Ablation variants: A1 swaps MSE for cross-entropy, A2 forces N=100 from the
first round, A3 ranks globally instead of per class, A4 skips the
class-proportion cap.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import LabeledDataset, UnlabeledDataset
from .errors import ConfigError, DegenerateStateError, NumericalError, ShapeError
from .nn import Model, get_backend, forward, make_optimizer, one_hot
from .nn.model import OptimizerState

ABLATIONS = ("none", "A1", "A2", "A3", "A4")

# guards against float fuzz when cp_c * n_total is mathematically integral
_CAP_EPS = 1e-9


@dataclass
class ClassProportions:
    """Length-M simplex vector of per-class sample fractions."""

    proportions: np.ndarray
    kind: str = "true"

    def __post_init__(self) -> None:
        self.proportions = np.asarray(self.proportions, dtype=np.float64)
        if self.proportions.ndim != 1 or self.proportions.shape[0] < 2:
            raise ConfigError("proportions must be a vector of length >= 2")
        if np.any(self.proportions < 0):
            raise ConfigError("proportions must be nonnegative")
        if abs(float(self.proportions.sum()) - 1.0) > 1e-9:
            raise ConfigError(f"proportions sum to {self.proportions.sum()}, expected 1")
        if self.kind not in ("true", "guessed", "source", "perturbed"):
            raise ConfigError(f"unknown proportions kind {self.kind!r}")

    def __len__(self) -> int:
        return self.proportions.shape[0]


@dataclass
class PseudoState:
    """Per-sample pseudo-labels, certainty scores, curriculum weights, and
    the inclusion mask for one adaptation round."""

    pseudo_labels: np.ndarray
    certainty: np.ndarray
    weights: np.ndarray
    included: np.ndarray

    @classmethod
    def from_scores(cls, scores: np.ndarray, percent: float,
                    class_aware: bool = True) -> "PseudoState":
        labels = assign_pseudo_labels(scores)
        certainty = certainty_scores(scores)
        weights = calculate_weights(certainty, labels, percent, class_aware)
        return cls(labels, certainty, weights, weights > 0)

    def exclude(self, mask: np.ndarray) -> "PseudoState":
        """New state with the inclusion mask replaced; dropped samples get
        weight zero."""
        weights = np.where(mask, self.weights, 0.0)
        return PseudoState(self.pseudo_labels, self.certainty, weights, mask.copy())


@dataclass
class TrainConfig:
    """Plain supervised training settings (used for source pretraining)."""

    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class AdaptConfig:
    """Settings for the adaptation loop; defaults follow the 45-round
    10 + 2i percent schedule."""

    iterations: int = 45
    schedule_base: float = 10.0
    schedule_step: float = 2.0
    epochs_per_iteration: int = 1
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    source_mix: int | str = "match"
    ablation: str = "none"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.iterations > 0 and self.schedule_base + self.schedule_step * self.iterations < 100:
            raise ConfigError(
                "schedule must reach 100% by the final iteration: "
                f"base {self.schedule_base} + step {self.schedule_step} x "
                f"{self.iterations} iterations < 100")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.source_mix != "match" and (not isinstance(self.source_mix, int) or self.source_mix < 0):
            raise ConfigError("source_mix must be 'match' or a nonnegative count")
        if self.batch_size < 1 or self.epochs_per_iteration < 0:
            raise ConfigError("batch_size must be >= 1 and epochs_per_iteration >= 0")

    @property
    def loss_kind(self) -> str:
        return "ce" if self.ablation == "A1" else "mse"


@dataclass
class IterationRecord:
    iteration: int
    percent: float
    included_per_class: list[int]
    excluded_per_class: list[int]
    mean_weight: float
    train_loss: float
    target_accuracy: float | None = None
    target_f1: float | None = None
    pseudo_error: float | None = None


@dataclass
class AdaptReport:
    """One record per adaptation round plus the config that produced them."""

    records: list[IterationRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"record": "config", **self.config}) + "\n")
            for rec in self.records:
                fh.write(json.dumps({"record": "iteration", **asdict(rec)}) + "\n")

    def to_csv(self, path: str | Path) -> None:
        cols = ["iteration", "percent", "included_total", "excluded_total",
                "mean_weight", "train_loss", "target_accuracy", "target_f1",
                "pseudo_error"]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.records:
                writer.writerow([
                    r.iteration, f"{r.percent:g}", sum(r.included_per_class),
                    sum(r.excluded_per_class), f"{r.mean_weight:.6f}",
                    f"{r.train_loss:.6f}",
                    "" if r.target_accuracy is None else f"{r.target_accuracy:.6f}",
                    "" if r.target_f1 is None else f"{r.target_f1:.6f}",
                    "" if r.pseudo_error is None else f"{r.pseudo_error:.6f}",
                ])


def assign_pseudo_labels(scores: np.ndarray) -> np.ndarray:
    """Per-row argmax of raw scores; ties break toward the lowest class."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ShapeError(f"scores must be N x M with M >= 2, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise NumericalError("scores contain non-finite values")
    return np.argmax(scores, axis=1).astype(np.int64)


def certainty_scores(scores: np.ndarray) -> np.ndarray:
    """Gap between the two largest raw scores per row (always >= 0)."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ShapeError(f"scores must be N x M with M >= 2, got {scores.shape}")
    part = np.sort(scores, axis=1)
    return (part[:, -1] - part[:, -2]).astype(np.float64)


def inclusion_percent(iteration: int, base: float = 10.0, step: float = 2.0) -> float:
    """Percent of each pseudo-class admitted at a 1-based iteration:
    min(base + step * i, 100)."""
    if iteration < 1:
        raise ConfigError(f"iteration index starts at 1, got {iteration}")
    return min(base + step * iteration, 100.0)


def _group_weights(certainty: np.ndarray, idx: np.ndarray, percent: float,
                   out: np.ndarray) -> None:
    group_size = idx.shape[0]
    top = max(1, math.ceil(percent / 100.0 * group_size))
    order = np.argsort(-certainty[idx], kind="stable")
    chosen = idx[order[:top]]
    ranks = np.arange(top, dtype=np.float64)
    out[chosen] = 1.0 / (1.0 + 4.0 * ranks / top)


def calculate_weights(certainty: np.ndarray, pseudo_labels: np.ndarray,
                      percent: float, class_aware: bool = True) -> np.ndarray:
    """Curriculum weights: within each pseudo-class, the top ``percent`` of
    samples by certainty (count L = ceil(percent/100 * group size), at least
    1) get weight 1 / (1 + 4j/L) at certainty rank j; everyone else gets 0.
    Certainty ties break by sample index. ``class_aware=False`` ranks one
    global group instead (the A3 variant)."""
    certainty = np.asarray(certainty, dtype=np.float64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    if certainty.shape != pseudo_labels.shape:
        raise ShapeError("certainty and labels must align")
    if not 0.0 < percent <= 100.0:
        raise ConfigError(f"percent must be in (0, 100], got {percent}")
    weights = np.zeros(certainty.shape[0], dtype=np.float64)
    if certainty.shape[0] == 0:
        return weights
    if class_aware:
        for cls in np.unique(pseudo_labels):
            _group_weights(certainty, np.where(pseudo_labels == cls)[0], percent, weights)
    else:
        _group_weights(certainty, np.arange(certainty.shape[0]), percent, weights)
    return weights


def exclude_by_proportion(pseudo_labels: np.ndarray, certainty: np.ndarray,
                          included: np.ndarray, cp: ClassProportions,
                          total_count: int) -> np.ndarray:
    """Cap each pseudo-class at floor(cp_c * total_count) included samples by
    dropping its least-certain members; classes at or under their cap are
    untouched. ``total_count`` is the full target-domain size (fixed
    denominator), not the included count."""
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    certainty = np.asarray(certainty, dtype=np.float64)
    mask = np.asarray(included, dtype=bool).copy()
    if not (pseudo_labels.shape == certainty.shape == mask.shape):
        raise ShapeError("labels, certainty, and mask must align")
    if pseudo_labels.size and pseudo_labels.max() >= len(cp):
        raise ConfigError("pseudo-label outside proportion vector")
    for cls in range(len(cp)):
        members = np.where(mask & (pseudo_labels == cls))[0]
        cap = int(math.floor(cp.proportions[cls] * total_count + _CAP_EPS))
        excess = members.shape[0] - cap
        if excess > 0:
            order = np.argsort(certainty[members], kind="stable")
            mask[members[order[:excess]]] = False
    return mask


def select_source(source: LabeledDataset, k: int, rng: np.random.Generator
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniformly sample ``k`` source rows (without replacement unless
    k exceeds the source size) with unit training weights."""
    if k < 0:
        raise ConfigError(f"selection count must be >= 0, got {k}")
    if k == 0:
        return (np.zeros((0, source.features.shape[1]), dtype=np.float32),
                np.zeros((0, source.num_classes), dtype=np.float32),
                np.zeros(0, dtype=np.float64))
    n = len(source)
    if n == 0:
        raise ConfigError("cannot select from an empty source dataset")
    idx = rng.choice(n, size=k, replace=k > n)
    return (source.features[idx],
            one_hot(source.labels[idx], source.num_classes),
            np.ones(k, dtype=np.float64))


def _train_epoch(model: Model, opt: OptimizerState, features: np.ndarray,
                 targets: np.ndarray, sample_weights: np.ndarray,
                 loss_kind: str, batch_size: int, rng: np.random.Generator) -> float:
    """One shuffled pass of minibatch momentum-SGD; returns the mean
    pre-step loss over the pass."""
    impl = get_backend()
    n = features.shape[0]
    order = rng.permutation(n)
    total, seen = 0.0, 0
    sw32 = np.ascontiguousarray(sample_weights, dtype=np.float32)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss = impl.train_step(
            model.weights, model.biases, opt.vel_weights, opt.vel_biases,
            np.ascontiguousarray(features[idx]),
            np.ascontiguousarray(targets[idx]),
            sw32[idx], opt.learning_rate, opt.momentum, loss_kind)
        if math.isnan(loss):
            raise NumericalError("non-finite loss or gradient; step aborted")
        total += loss * idx.shape[0]
        seen += idx.shape[0]
    return total / max(seen, 1)


def pretrain_source(model: Model, source: LabeledDataset, config: TrainConfig) -> Model:
    """Train on the labeled source set with unit weights and the MSE loss."""
    if model.input_dim != source.features.shape[1] or model.output_dim != source.num_classes:
        raise ShapeError(
            f"model {model.layer_dims} does not fit data "
            f"D={source.features.shape[1]}, M={source.num_classes}")
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(model, config.learning_rate, config.momentum)
    targets = one_hot(source.labels, source.num_classes)
    weights = np.ones(len(source), dtype=np.float64)
    for _ in range(config.epochs):
        _train_epoch(model, opt, source.features, targets, weights,
                     "mse", config.batch_size, rng)
    return model


def _source_count(source_mix: int | str, included: int, source_size: int) -> int:
    if source_mix == "match":
        return min(included, source_size)
    return min(int(source_mix), source_size)


def adapt(model: Model, source: LabeledDataset, target: UnlabeledDataset,
          cp: ClassProportions, config: AdaptConfig,
          positive_class: int | None = None) -> tuple[Model, AdaptReport]:
    """Run the full adaptation loop and return the trained model plus a
    per-round report.

    The loop sees only ``target.features``; hidden labels, when present,
    feed the report's accuracy/F1/pseudo-error columns and nothing else.
    """
    from .metrics import evaluate  # local import; metrics sits above adapt

    if len(cp) != model.output_dim:
        raise ConfigError(f"proportions length {len(cp)} != model classes {model.output_dim}")
    if model.input_dim != target.features.shape[1]:
        raise ShapeError("target feature width does not match model input dim")

    n_target = len(target)
    num_classes = model.output_dim
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(model, config.learning_rate, config.momentum)
    report = AdaptReport(config={
        "iterations": config.iterations, "schedule_base": config.schedule_base,
        "schedule_step": config.schedule_step, "ablation": config.ablation,
        "loss": config.loss_kind, "seed": config.seed,
        "epochs_per_iteration": config.epochs_per_iteration,
        "batch_size": config.batch_size, "learning_rate": config.learning_rate,
        "momentum": config.momentum, "cp_kind": cp.kind,
        "cp": [float(p) for p in cp.proportions],
    })
    labeled_eval = target.as_labeled() if target.hidden_labels is not None else None

    for i in range(1, config.iterations + 1):
        percent = 100.0 if config.ablation == "A2" else \
            inclusion_percent(i, config.schedule_base, config.schedule_step)
        scores = forward(model, target.features)
        state = PseudoState.from_scores(scores, percent,
                                        class_aware=config.ablation != "A3")
        before = state.included
        if config.ablation != "A4":
            mask = exclude_by_proportion(state.pseudo_labels, state.certainty,
                                         before, cp, n_target)
            excluded = before & ~mask
            state = state.exclude(mask)
        else:
            excluded = np.zeros(n_target, dtype=bool)

        inc_idx = np.where(state.included)[0]
        if inc_idx.shape[0] == 0:
            raise DegenerateStateError(
                f"round {i}: class-proportion exclusion removed every sample")

        k = _source_count(config.source_mix, inc_idx.shape[0], len(source))
        src_x, src_y, src_w = select_source(source, k, rng)
        feats = np.concatenate([target.features[inc_idx], src_x])
        targets = np.concatenate(
            [one_hot(state.pseudo_labels[inc_idx], num_classes), src_y])
        weights = np.concatenate([state.weights[inc_idx], src_w])

        loss = 0.0
        for _ in range(config.epochs_per_iteration):
            loss = _train_epoch(model, opt, feats, targets, weights,
                                config.loss_kind, config.batch_size, rng)

        rec = IterationRecord(
            iteration=i,
            percent=percent,
            included_per_class=np.bincount(state.pseudo_labels[inc_idx],
                                           minlength=num_classes).tolist(),
            excluded_per_class=np.bincount(state.pseudo_labels[excluded],
                                           minlength=num_classes).tolist(),
            mean_weight=float(state.weights[inc_idx].mean()),
            train_loss=float(loss),
        )
        if labeled_eval is not None:
            m = evaluate(model, labeled_eval, positive_class)
            rec.target_accuracy = m.accuracy
            rec.target_f1 = m.f1_headline
            rec.pseudo_error = float(np.mean(state.pseudo_labels != target.hidden_labels))
        report.records.append(rec)
    return model, report


def perturb_proportions(cp_true: ClassProportions, error: float, task_kind: str,
                        rng: np.random.Generator, anomaly_class: int = 1
                        ) -> ClassProportions:
    """Guessed proportions at a controlled distance from the truth.

    anomaly mode (binary): the anomalous-class proportion is scaled by
    (1 +/- error) with the sign drawn from ``rng`` (falling back to the
    feasible sign), the other class absorbing the difference. multiclass
    mode: a random simplex point whose L1 distance from the truth is exactly
    ``error``, built rejection-free by moving mass off a random subset of
    classes onto the rest.
    """
    if error < 0:
        raise ConfigError(f"error level must be >= 0, got {error}")
    p = cp_true.proportions.copy()
    if error == 0:
        return ClassProportions(p, "perturbed")

    if task_kind == "anomaly":
        if len(p) != 2:
            raise ConfigError("anomaly-mode perturbation expects binary proportions")
        a = anomaly_class
        if a not in (0, 1):
            raise ConfigError("anomaly_class must be 0 or 1")
        sign = 1.0 if rng.random() < 0.5 else -1.0
        for s in (sign, -sign):
            scaled = p[a] * (1.0 + s * error)
            if 0.0 <= scaled <= 1.0:
                out = p.copy()
                out[a] = scaled
                out[1 - a] = 1.0 - scaled
                return ClassProportions(out, "perturbed")
        raise ConfigError(f"error {error} pushes proportion {p[a]} off the simplex")

    if task_kind != "multiclass":
        raise ConfigError(f"task_kind must be 'anomaly' or 'multiclass', got {task_kind!r}")
    m = p.shape[0]
    half = error / 2.0
    reserve = int(np.argmin(p))  # up-only class; guarantees feasibility bound
    if half > 1.0 - p[reserve] + 1e-12:
        raise ConfigError(
            f"error {error} exceeds the maximum L1 distance {2 * (1 - p[reserve]):.6g}")

    def allocate(candidates: np.ndarray, capacity: np.ndarray, amount: float) -> np.ndarray:
        """Random allocation of ``amount`` over candidates within per-class
        capacity; a forcing pass guarantees the total is hit exactly."""
        taken = np.zeros(m, dtype=np.float64)
        order = rng.permutation(candidates)
        remaining = amount
        for c in order:
            share = rng.uniform(0.0, min(capacity[c], remaining))
            taken[c] += share
            remaining -= share
        for c in order:
            if remaining <= 0:
                break
            share = min(capacity[c] - taken[c], remaining)
            taken[c] += share
            remaining -= share
        return taken

    others = np.array([c for c in range(m) if c != reserve])
    down = allocate(others, p, half)
    up_candidates = np.array([reserve] + [c for c in others if down[c] == 0.0])
    up = allocate(up_candidates, 1.0 - p, half)
    return ClassProportions(p - down + up, "perturbed")


def proportion_distance(cp_a, cp_b) -> float:
    """L1 distance between two proportion vectors."""
    a = cp_a.proportions if isinstance(cp_a, ClassProportions) else np.asarray(cp_a, dtype=np.float64)
    b = cp_b.proportions if isinstance(cp_b, ClassProportions) else np.asarray(cp_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("proportion vectors must have equal length")
    return float(np.abs(a - b).sum())
