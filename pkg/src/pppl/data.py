"""Synthetic domain-shift generators, time-series windowing, CSV loading,
and class-proportion helpers.

All generators are pure functions of their parameters plus a seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateSeriesError


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.shape[0] == 0:
            raise DataError("dataset is empty")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("feature/label row counts disagree")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(
                f"labels outside [0, {self.num_classes}): "
                f"range {self.labels.min()}..{self.labels.max()}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class UnlabeledDataset:
    """Target-domain features; hidden labels (when present) exist only for
    evaluation and diagnostics, never for the adaptation loop itself."""

    features: np.ndarray
    hidden_labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.hidden_labels is not None:
            self.hidden_labels = np.ascontiguousarray(self.hidden_labels, dtype=np.int64)
            if self.hidden_labels.shape[0] != self.features.shape[0]:
                raise DataError("hidden label count does not match features")
            if self.num_classes is not None and self.hidden_labels.size:
                if self.hidden_labels.min() < 0 or self.hidden_labels.max() >= self.num_classes:
                    raise DataError("hidden labels outside class range")

    def __len__(self) -> int:
        return self.features.shape[0]

    def as_labeled(self, provenance: str = "hidden") -> LabeledDataset:
        if self.hidden_labels is None:
            raise ConfigError("dataset has no hidden labels")
        m = self.num_classes or int(self.hidden_labels.max()) + 1
        return LabeledDataset(self.features, self.hidden_labels, m, provenance)


@dataclass
class SeriesSpec:
    """One synthetic time-series regime: sinusoid + noise + injected point
    anomalies. Source and target domains differ through noise_scale,
    trend_drift, and the anomaly magnitude range."""

    length: int = 6000
    period: float = 50.0
    amplitude: float = 1.0
    noise_scale: float = 0.15
    anomaly_count: int = 60
    anomaly_magnitude: tuple[float, float] = (3.0, 6.0)
    trend_drift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.length < 16:
            raise ConfigError("series length too short")
        if self.noise_scale <= 0 or self.amplitude <= 0 or self.period <= 0:
            raise ConfigError("scales and period must be positive")
        if self.anomaly_count < 0 or self.anomaly_count >= self.length / 10:
            raise ConfigError("anomaly count must be in [0, length/10)")
        lo, hi = self.anomaly_magnitude
        if lo <= 0 or hi < lo:
            raise ConfigError("anomaly magnitude range must be 0 < lo <= hi")


def _rotate(points: np.ndarray, theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return points @ rot.T


def gen_rotated_gaussians(per_class: int, num_classes: int, radius: float = 3.0,
                          spread: float = 1.0, theta: float = 35.0,
                          seed: int = 0) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Gaussian blobs centered on a circle; the target domain repeats the
    generative process and rotates every point by ``theta`` degrees about the
    origin. Class proportions are identical across domains."""
    if num_classes < 2 or per_class < 1:
        raise ConfigError("need num_classes >= 2 and per_class >= 1")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def draw():
        feats = np.concatenate(
            [rng.normal(c, spread, size=(per_class, 2)) for c in centers])
        labels = np.repeat(np.arange(num_classes), per_class)
        order = rng.permutation(feats.shape[0])
        return feats[order], labels[order]

    src_x, src_y = draw()
    tgt_x, tgt_y = draw()
    tgt_x = _rotate(tgt_x, theta)
    source = LabeledDataset(src_x, src_y, num_classes, "rotated_gaussians/source")
    target = UnlabeledDataset(tgt_x.astype(np.float32), tgt_y, num_classes)
    return source, target


def gen_two_moons_shift(per_class: int, noise: float = 0.1, theta: float = 30.0,
                        seed: int = 0) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Interleaved half-circle pair; the target domain is a fresh draw rotated
    by ``theta`` degrees about the origin."""
    if per_class < 1:
        raise ConfigError("per_class must be >= 1")
    rng = np.random.default_rng(seed)

    def draw():
        t = rng.uniform(0.0, np.pi, size=per_class)
        outer = np.stack([np.cos(t), np.sin(t)], axis=1)
        t = rng.uniform(0.0, np.pi, size=per_class)
        inner = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
        feats = np.concatenate([outer, inner]) + rng.normal(0.0, noise, size=(2 * per_class, 2))
        labels = np.repeat([0, 1], per_class)
        order = rng.permutation(feats.shape[0])
        return feats[order], labels[order]

    src_x, src_y = draw()
    tgt_x, tgt_y = draw()
    tgt_x = _rotate(tgt_x, theta)
    source = LabeledDataset(src_x, src_y, 2, "two_moons/source")
    target = UnlabeledDataset(tgt_x.astype(np.float32), tgt_y, 2)
    return source, target


def gen_anomaly_series(spec: SeriesSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sinusoid + drift + Gaussian noise with spike anomalies at uniformly
    random positions; returns (values, per-point anomaly flags)."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length)
    base = spec.amplitude * np.sin(2.0 * np.pi * t / spec.period)
    drift = spec.trend_drift * t / spec.length
    values = base + drift + rng.normal(0.0, spec.noise_scale, size=spec.length)
    flags = np.zeros(spec.length, dtype=bool)
    if spec.anomaly_count:
        # keep the first point clean so every anomaly survives differencing
        pos = rng.choice(np.arange(1, spec.length), size=spec.anomaly_count, replace=False)
        lo, hi = spec.anomaly_magnitude
        mags = rng.uniform(lo, hi, size=spec.anomaly_count)
        signs = rng.choice([-1.0, 1.0], size=spec.anomaly_count)
        values[pos] += signs * mags
        flags[pos] = True
    return values, flags


def window_preprocess(series: np.ndarray, flags: np.ndarray, window: int) -> LabeledDataset:
    """First-difference the series, z-normalize the differenced series with
    its population mean/std, and emit one sample per point: the point plus
    the ``window - 1`` points before it. The label is the anomaly flag of the
    final (current) point; leading points without full history are dropped.
    """
    series = np.asarray(series, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if window < 1:
        raise ConfigError("window must be >= 1")
    if series.ndim != 1 or series.shape[0] <= window + 1:
        raise ConfigError(f"series length {series.shape} too short for window {window}")
    if flags.shape != series.shape:
        raise DataError("flags length does not match series")
    diffed = np.diff(series)
    std = diffed.std()  # population std
    if std == 0.0:
        raise DegenerateSeriesError("differenced series has zero standard deviation")
    normed = (diffed - diffed.mean()) / std
    count = normed.shape[0] - (window - 1)
    idx = np.arange(count)[:, None] + np.arange(window)[None, :]
    feats = normed[idx]
    # diffed[j] spans series points j and j+1; the window ending at j has
    # current point j+1
    labels = flags[window:].astype(np.int64)
    return LabeledDataset(feats, labels, 2, "windowed_series")


def load_feature_csv(path: str | Path, label_column: str | None = None
                     ) -> LabeledDataset | UnlabeledDataset:
    """Load a feature file: comma-separated, mandatory header row, one sample
    per row. With ``label_column`` the named column becomes integer class
    labels; otherwise the result is unlabeled. Malformed cells are reported
    with their data-row number (first data row = row 1)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise DataError(f"{path}: label column {label_column!r} not in header {header}")
            label_idx = header.index(label_column)
        rows, labels = [], []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            feats = []
            for col, cell in enumerate(row):
                if col == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} in column "
                        f"{header[col]!r} at row {rownum}")
            if label_idx is not None:
                try:
                    label = int(row[label_idx])
                except ValueError:
                    raise DataError(f"{path}: non-integer label {row[label_idx]!r} at row {rownum}")
                if label < 0:
                    raise DataError(f"{path}: negative label at row {rownum}")
                labels.append(label)
            rows.append(feats)
    if not rows:
        raise DataError(f"{path}: no data rows")
    feats = np.asarray(rows, dtype=np.float32)
    if label_idx is None:
        return UnlabeledDataset(feats)
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(feats, labels, int(labels.max()) + 1, str(path))


def class_proportions(labels: np.ndarray, num_classes: int, kind: str = "true"):
    """Per-class frequencies count_c / N as a ClassProportions vector."""
    from .adapt import ClassProportions

    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ConfigError("labels must be nonempty")
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    return ClassProportions(counts / labels.size, kind)


def split(dataset, fraction: float, seed: int):
    """Seeded uniform split into (train, eval) parts of sizes round(f*N) and
    the remainder. Works for labeled and unlabeled datasets."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    k = int(round(fraction * n))
    first, second = order[:k], order[k:]

    def take(idx):
        if isinstance(dataset, LabeledDataset):
            return LabeledDataset(dataset.features[idx], dataset.labels[idx],
                                  dataset.num_classes, dataset.provenance)
        hidden = None if dataset.hidden_labels is None else dataset.hidden_labels[idx]
        return UnlabeledDataset(dataset.features[idx], hidden, dataset.num_classes)

    return take(first), take(second)
