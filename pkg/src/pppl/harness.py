"""Experiment orchestration on top of the library: validated JSON configs,
seeded end-to-end runs (generate, pretrain, adapt, evaluate), ablation and
proportion-error sweeps, and three diagnostics that examine why progressive
pseudo-labeling works.

All artifacts are deterministic functions of the config and seed list: no
timestamps, no machine identifiers, stable key order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .adapt import (
    AdaptConfig,
    ClassProportions,
    TrainConfig,
    _train_epoch,
    adapt,
    assign_pseudo_labels,
    certainty_scores,
    perturb_proportions,
    pretrain_source,
    proportion_distance,
)
from .data import (
    LabeledDataset,
    SeriesSpec,
    UnlabeledDataset,
    class_proportions,
    gen_anomaly_series,
    gen_rotated_gaussians,
    gen_two_moons_shift,
    load_feature_csv,
    window_preprocess,
)
from .errors import ConfigError, DataError, PPPLError
from .metrics import evaluate
from .nn import Model, forward, init_model, make_optimizer, one_hot

CONFIG_FORMAT = 1

_TASK_DEFAULTS = {
    "rotated_gaussians": {"per_class": 500, "classes": 3, "radius": 3.0,
                          "spread": 1.4, "theta": 35.0},
    "two_moons": {"per_class": 300, "noise": 0.15, "theta": 30.0},
    "anomaly_series": {"window": 32, "source": {}, "target": {}},
    "csv": {"source": None, "target": None, "label_column": None,
            "target_label_column": None, "perturb_mode": "multiclass"},
}

# default domain shift for the synthetic series task: the target stream is
# noisier, drifts upward, and carries slightly fainter anomalies
_TARGET_SERIES_SHIFT = {"noise_scale": 0.25, "trend_drift": 0.8,
                        "anomaly_magnitude": (2.5, 5.0)}

_TOP_KEYS = {"format", "task", "model", "pretrain", "adapt", "metrics",
             "cp", "seeds", "out_dir"}


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; see ``load_config`` for the JSON
    form. ``cp`` selects the proportion vector handed to adaptation:
    "true" (from hidden target labels), "source" (from source labels), or an
    explicit list."""

    task: dict
    hidden_dims: list[int] = field(default_factory=lambda: [32, 16])
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    positive_class: int | None = None
    cp: str | list[float] = "true"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.task, dict) or "kind" not in self.task:
            raise ConfigError("task must be an object with a 'kind' key")
        kind = self.task["kind"]
        if kind not in _TASK_DEFAULTS:
            raise ConfigError(f"unknown task kind {kind!r}; expected one of "
                              f"{sorted(_TASK_DEFAULTS)}")
        unknown = set(self.task) - set(_TASK_DEFAULTS[kind]) - {"kind"}
        if unknown:
            raise ConfigError(f"unknown task keys for {kind!r}: {sorted(unknown)}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a nonempty list of integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigError("hidden_dims must be a nonempty list of positive ints")
        if isinstance(self.cp, str):
            if self.cp not in ("true", "source"):
                raise ConfigError(f"cp must be 'true', 'source', or a list, got {self.cp!r}")
        else:
            ClassProportions(np.asarray(self.cp, dtype=np.float64), "guessed")

    def to_dict(self) -> dict:
        # per-stage seeds are derived from each run seed, so the echoed
        # sections drop them; the result loads back via config_from_dict
        return {
            "format": CONFIG_FORMAT,
            "task": self.task,
            "model": {"hidden_dims": list(self.hidden_dims)},
            "pretrain": {k: v for k, v in asdict(self.pretrain).items()
                         if k != "seed"},
            "adapt": {k: v for k, v in asdict(self.adapt).items()
                      if k != "seed"},
            "metrics": {"positive_class": self.positive_class},
            "cp": self.cp,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
        }


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if raw.get("format") != CONFIG_FORMAT:
        raise ConfigError(f"config format must be {CONFIG_FORMAT}, got {raw.get('format')!r}")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "task" not in raw:
        raise ConfigError("config requires a 'task' object")

    def sub(section: str, cls):
        body = raw.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"{section} must be an object")
        if "seed" in body:
            raise ConfigError(f"{section}.seed is derived per run seed; remove it")
        allowed = set(cls.__dataclass_fields__) - {"seed"}
        bad = set(body) - allowed
        if bad:
            raise ConfigError(f"unknown {section} keys: {sorted(bad)}")
        return cls(**body)

    model = raw.get("model", {})
    if not isinstance(model, dict) or set(model) - {"hidden_dims"}:
        raise ConfigError("model section supports only 'hidden_dims'")
    metrics = raw.get("metrics", {})
    if not isinstance(metrics, dict) or set(metrics) - {"positive_class"}:
        raise ConfigError("metrics section supports only 'positive_class'")
    kwargs = {
        "task": raw["task"],
        "pretrain": sub("pretrain", TrainConfig),
        "adapt": sub("adapt", AdaptConfig),
        "positive_class": metrics.get("positive_class"),
        "cp": raw.get("cp", "true"),
        "seeds": raw.get("seeds", [0, 1, 2]),
        "out_dir": raw.get("out_dir"),
    }
    if "hidden_dims" in model:
        kwargs["hidden_dims"] = model["hidden_dims"]
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; referenced CSV files are
    checked for existence immediately."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    cfg = config_from_dict(raw)
    if cfg.task["kind"] == "csv":
        for key in ("source", "target"):
            ref = cfg.task.get(key)
            if not ref:
                raise ConfigError(f"csv task requires a {key!r} path")
            if not Path(ref).exists():
                raise DataError(f"csv task: {key} file not found: {ref}")
    return cfg


def derive_seeds(seed: int, n: int = 6) -> list[int]:
    """Decorrelated per-stage seeds from one run seed. Slot order: data,
    model init, pretrain shuffle, adaptation, proportion perturbation,
    diagnostics."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def build_task(task: dict, seed: int) -> tuple[LabeledDataset, UnlabeledDataset, str]:
    """Materialize (source, target, perturbation mode) for a task config."""
    kind = task["kind"]
    params = {**_TASK_DEFAULTS[kind], **{k: v for k, v in task.items() if k != "kind"}}
    if kind == "rotated_gaussians":
        src, tgt = gen_rotated_gaussians(
            params["per_class"], params["classes"], params["radius"],
            params["spread"], params["theta"], seed)
        return src, tgt, "multiclass"
    if kind == "two_moons":
        src, tgt = gen_two_moons_shift(params["per_class"], params["noise"],
                                       params["theta"], seed)
        return src, tgt, "multiclass"
    if kind == "anomaly_series":
        allowed = set(SeriesSpec.__dataclass_fields__) - {"seed"}
        for side in ("source", "target"):
            bad = set(params[side]) - allowed
            if bad:
                raise ConfigError(f"unknown {side} series keys: {sorted(bad)}")
        seed_a, seed_b = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
        src_spec = SeriesSpec(**params["source"], seed=seed_a)
        tgt_kwargs = {**_TARGET_SERIES_SHIFT, **params["target"]}
        tgt_spec = SeriesSpec(**tgt_kwargs, seed=seed_b)
        window = params["window"]
        src = window_preprocess(*gen_anomaly_series(src_spec), window)
        tgt = window_preprocess(*gen_anomaly_series(tgt_spec), window)
        target = UnlabeledDataset(tgt.features, tgt.labels, 2)
        return src, target, "anomaly"
    # csv
    if not params.get("label_column"):
        raise ConfigError("csv task requires 'label_column' for the source file")
    src = load_feature_csv(params["source"], params["label_column"])
    tgt = load_feature_csv(params["target"], params.get("target_label_column"))
    if isinstance(tgt, LabeledDataset):
        if tgt.labels.max() >= src.num_classes:
            raise DataError("target labels exceed the source class count")
        tgt = UnlabeledDataset(tgt.features, tgt.labels, src.num_classes)
    elif tgt.num_classes is None:
        tgt = UnlabeledDataset(tgt.features, None, src.num_classes)
    if tgt.features.shape[1] != src.features.shape[1]:
        raise DataError(
            f"feature width mismatch: source {src.features.shape[1]}, "
            f"target {tgt.features.shape[1]}")
    return src, tgt, params["perturb_mode"]


def _resolve_cp(cfg: ExperimentConfig, source: LabeledDataset,
                target: UnlabeledDataset) -> ClassProportions:
    if isinstance(cfg.cp, list):
        return ClassProportions(np.asarray(cfg.cp, dtype=np.float64), "guessed")
    if cfg.cp == "source":
        return class_proportions(source.labels, source.num_classes, "source")
    if target.hidden_labels is None:
        raise ConfigError(
            "cp='true' needs target reference labels; supply an explicit cp "
            "list or cp='source' for unlabeled targets")
    return class_proportions(target.hidden_labels, source.num_classes, "true")


def run_seed(cfg: ExperimentConfig, seed: int,
             cp_error: float | None = None) -> dict:
    """One end-to-end run: build data, pretrain on source, adapt, evaluate
    before and after. Returns metrics plus the per-round report; the
    "report" and "models" entries are live objects, not JSON."""
    slots = derive_seeds(seed)
    source, target, perturb_mode = build_task(cfg.task, slots[0])
    dims = [source.features.shape[1], *cfg.hidden_dims, source.num_classes]
    model = init_model(dims, slots[1])
    pretrain_source(model, source, replace(cfg.pretrain, seed=slots[2]))

    cp = _resolve_cp(cfg, source, target)
    if cp_error is not None:
        cp = perturb_proportions(cp, cp_error, perturb_mode,
                                 np.random.default_rng(slots[4]))

    result: dict = {"seed": seed, "cp_kind": cp.kind,
                    "cp": [float(p) for p in cp.proportions]}
    has_hidden = target.hidden_labels is not None
    if has_hidden:
        result["source_only"] = evaluate(
            model, target.as_labeled(), cfg.positive_class).to_dict()

    adapted = model.copy()
    adapted, report = adapt(adapted, source, target, cp,
                            replace(cfg.adapt, seed=slots[3]),
                            cfg.positive_class)
    if has_hidden:
        result["adapted"] = evaluate(
            adapted, target.as_labeled(), cfg.positive_class).to_dict()
        result["gain_accuracy"] = (result["adapted"]["accuracy"]
                                   - result["source_only"]["accuracy"])
        result["gain_f1"] = (result["adapted"]["f1_headline"]
                             - result["source_only"]["f1_headline"])
    result["report"] = report
    result["models"] = {"source_only": model, "adapted": adapted}
    return result


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _summarize(rows: list[dict]) -> dict:
    summary: dict = {"seeds_succeeded": len(rows)}
    if not rows or "adapted" not in rows[0]:
        return summary
    for key, col in (("source_accuracy", lambda r: r["source_only"]["accuracy"]),
                     ("source_f1", lambda r: r["source_only"]["f1_headline"]),
                     ("adapted_accuracy", lambda r: r["adapted"]["accuracy"]),
                     ("adapted_f1", lambda r: r["adapted"]["f1_headline"]),
                     ("gain_accuracy", lambda r: r["gain_accuracy"])):
        mean, std = _mean_std([col(r) for r in rows])
        summary[f"{key}_mean"] = mean
        summary[f"{key}_std"] = std
    return summary


def _strip_live(row: dict) -> dict:
    return {k: v for k, v in row.items() if k not in ("report", "models")}


def _write_run_artifacts(out_dir: Path, cfg: ExperimentConfig,
                         rows: list[dict], failures: list[dict],
                         summary: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "report.jsonl").open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"record": "config", **cfg.to_dict()}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps({"record": "seed", **_strip_live(row)}, sort_keys=True) + "\n")
        for fail in failures:
            fh.write(json.dumps({"record": "seed_error", **fail}, sort_keys=True) + "\n")
        fh.write(json.dumps({"record": "summary", **summary}, sort_keys=True) + "\n")
    with (out_dir / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "source_accuracy", "source_f1",
                         "adapted_accuracy", "adapted_f1", "gain_accuracy"])
        for row in rows:
            if "adapted" in row:
                writer.writerow([
                    row["seed"],
                    f"{row['source_only']['accuracy']:.6f}",
                    f"{row['source_only']['f1_headline']:.6f}",
                    f"{row['adapted']['accuracy']:.6f}",
                    f"{row['adapted']['f1_headline']:.6f}",
                    f"{row['gain_accuracy']:.6f}",
                ])
        if "adapted_accuracy_mean" in summary:
            writer.writerow(["mean", f"{summary['source_accuracy_mean']:.6f}",
                             f"{summary['source_f1_mean']:.6f}",
                             f"{summary['adapted_accuracy_mean']:.6f}",
                             f"{summary['adapted_f1_mean']:.6f}",
                             f"{summary['gain_accuracy_mean']:.6f}"])
            writer.writerow(["std", f"{summary['source_accuracy_std']:.6f}",
                             f"{summary['source_f1_std']:.6f}",
                             f"{summary['adapted_accuracy_std']:.6f}",
                             f"{summary['adapted_f1_std']:.6f}",
                             f"{summary['gain_accuracy_std']:.6f}"])
    for row in rows:
        row["report"].to_jsonl(out_dir / f"adapt_seed{row['seed']}.jsonl")


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   cp_error: float | None = None) -> dict:
    """Run every seed, isolate per-seed failures, aggregate, and (when an
    output directory is set) write report.jsonl, summary.csv, and per-seed
    adaptation logs."""
    rows, failures = [], []
    last_error: PPPLError | None = None
    for seed in cfg.seeds:
        try:
            rows.append(run_seed(cfg, seed, cp_error))
        except PPPLError as exc:
            failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
            last_error = exc
    if not rows:
        raise PPPLError(f"every seed failed; last error: {last_error}")
    summary = _summarize(rows)
    dest = out_dir if out_dir is not None else cfg.out_dir
    if dest is not None:
        _write_run_artifacts(Path(dest), cfg, rows, failures, summary)
    return {"config": cfg.to_dict(), "seeds": rows, "failures": failures,
            "summary": summary}


ABLATION_VARIANTS = ("A1", "A2", "A3", "A4")


def run_ablation(cfg: ExperimentConfig,
                 variants: tuple[str, ...] = ABLATION_VARIANTS) -> dict:
    """Full method against its ablations on one task. The returned table
    maps each variant (plus "PPPL" for the unablated method) to its run
    summary; with an output directory set, writes ablation.csv and per-
    variant run artifacts."""
    table: dict[str, dict] = {}
    base = Path(cfg.out_dir) if cfg.out_dir else None
    for variant in (*variants, "none"):
        sub = replace(cfg, adapt=replace(cfg.adapt, ablation=variant),
                      out_dir=None)
        name = "PPPL" if variant == "none" else variant
        res = run_experiment(
            sub, out_dir=None if base is None else base / f"variant_{name}")
        table[name] = res["summary"]
    if base is not None:
        base.mkdir(parents=True, exist_ok=True)
        names = list(table)
        with (base / "ablation.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", *names])
            for metric in ("adapted_accuracy_mean", "adapted_accuracy_std",
                           "adapted_f1_mean", "adapted_f1_std"):
                writer.writerow([metric] + [
                    f"{table[n].get(metric, float('nan')):.6f}" for n in names])
    return table


def run_cp_sweep(cfg: ExperimentConfig,
                 errors: tuple[float, ...] = (0.1, 0.2, 0.3),
                 include_source_cp: bool = True) -> dict:
    """Sensitivity to wrong class proportions: one column per error level
    (true proportions perturbed to L1 distance E, fresh draw per seed), an
    exact-proportions column, optionally a source-proportions column, with
    the source-to-true distance reported alongside."""
    if any(e < 0 for e in errors):
        raise ConfigError("error levels must be >= 0")
    table: dict[str, dict] = {}
    base = Path(cfg.out_dir) if cfg.out_dir else None

    def run(label: str, cp_mode: str | list, cp_error: float | None):
        sub = replace(cfg, cp=cp_mode, out_dir=None)
        res = run_experiment(
            sub, out_dir=None if base is None else base / f"cp_{label}",
            cp_error=cp_error)
        table[label] = res["summary"]

    for err in errors:
        run(f"E{err:g}", "true", err)
    if include_source_cp:
        run("source", "source", None)
    run("true", "true", None)

    distances = []
    for seed in cfg.seeds:
        slots = derive_seeds(seed)
        source, target, _ = build_task(cfg.task, slots[0])
        if target.hidden_labels is None:
            raise ConfigError("cp sweep needs target reference labels")
        distances.append(proportion_distance(
            class_proportions(source.labels, source.num_classes, "source"),
            class_proportions(target.hidden_labels, source.num_classes, "true")))
    table["cp_diff_source_vs_true"] = {"mean": _mean_std(distances)[0],
                                       "std": _mean_std(distances)[1]}
    if base is not None:
        base.mkdir(parents=True, exist_ok=True)
        cols = [k for k in table if k != "cp_diff_source_vs_true"]
        with (base / "cp_sweep.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", *cols, "cp_diff_source_vs_true"])
            for metric in ("adapted_f1_mean", "adapted_f1_std",
                           "adapted_accuracy_mean", "adapted_accuracy_std"):
                row = [metric] + [f"{table[c].get(metric, float('nan')):.6f}" for c in cols]
                row.append(f"{table['cp_diff_source_vs_true']['mean']:.6f}"
                           if metric == "adapted_f1_mean" else "")
                writer.writerow(row)
    return table


# --- diagnostics -----------------------------------------------------------

def diag_oracle_filter(model: Model, target: UnlabeledDataset,
                       epochs: int, train: TrainConfig) -> list[float]:
    """Accuracy trajectory when each epoch trains only on currently-correct
    pseudo-labels (an oracle filters the wrong ones out). Element 0 is the
    starting accuracy; the model is modified in place."""
    if target.hidden_labels is None:
        raise ConfigError("oracle-filter diagnostic needs target reference labels")
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    labeled = target.as_labeled()
    num_classes = model.output_dim
    curve = [evaluate(model, labeled).accuracy]
    rng = np.random.default_rng(train.seed)
    opt = make_optimizer(model, train.learning_rate, train.momentum)
    for _ in range(epochs):
        pseudo = assign_pseudo_labels(forward(model, target.features))
        keep = pseudo == target.hidden_labels
        if keep.any():
            _train_epoch(model, opt, target.features[keep],
                         one_hot(pseudo[keep], num_classes),
                         np.ones(int(keep.sum()), dtype=np.float64),
                         "mse", train.batch_size, rng)
        curve.append(evaluate(model, labeled).accuracy)
    return curve


@dataclass
class BucketEntry:
    bucket: int
    lo: float
    hi: float
    wrong_ratio: float
    sample_count: int
    per_class_counts: list[int]


@dataclass
class BucketReport:
    """Wrong-pseudo-label ratio per certainty decile. Only occupied buckets
    appear; scores of 1 or more are clamped into the top bucket and counted
    in ``clamped``."""

    entries: list[BucketEntry]
    clamped: int
    buckets: int

    def to_dict(self) -> dict:
        return {"buckets": self.buckets, "clamped": self.clamped,
                "entries": [asdict(e) for e in self.entries]}


def diag_certainty_buckets(model: Model, target: UnlabeledDataset,
                           buckets: int = 10) -> BucketReport:
    """Bucket target samples by certainty score and report how often the
    pseudo-label is wrong in each bucket, class-averaged over the predicted
    classes present in the bucket."""
    if target.hidden_labels is None:
        raise ConfigError("certainty-bucket diagnostic needs target reference labels")
    if buckets < 1:
        raise ConfigError("buckets must be >= 1")
    scores = forward(model, target.features)
    pseudo = assign_pseudo_labels(scores)
    certainty = certainty_scores(scores)
    wrong = pseudo != target.hidden_labels
    num_classes = model.output_dim
    idx = np.minimum((certainty * buckets).astype(np.int64), buckets - 1)
    clamped = int((certainty >= 1.0).sum())
    entries = []
    for b in range(buckets):
        in_bucket = idx == b
        count = int(in_bucket.sum())
        if count == 0:
            continue
        ratios, class_counts = [], []
        for cls in range(num_classes):
            members = in_bucket & (pseudo == cls)
            class_counts.append(int(members.sum()))
            if class_counts[-1]:
                ratios.append(float(wrong[members].mean()))
        entries.append(BucketEntry(
            bucket=b, lo=b / buckets, hi=(b + 1) / buckets,
            wrong_ratio=float(np.mean(ratios)), sample_count=count,
            per_class_counts=class_counts))
    return BucketReport(entries, clamped, buckets)


def diag_timing_injection(model: Model, target: UnlabeledDataset,
                          train: TrainConfig, epochs: int = 10,
                          injection_epochs: tuple[int, ...] = (1, 4, 7, 10),
                          poison_fraction: float = 0.1) -> dict:
    """Damage done by wrong pseudo-labels as a function of when they join
    training.

    The poison set is a fixed random sample of the initial model's wrong
    predictions, frozen with those wrong pseudo-labels (capped by how many
    wrong predictions exist); the remaining samples train under the oracle
    filter. One run per injection epoch, all runs sharing the initial model,
    poison set, and shuffle stream; reports final accuracy per run and its
    delta against the latest-injection run.
    """
    if target.hidden_labels is None:
        raise ConfigError("timing diagnostic needs target reference labels")
    if not injection_epochs or any(not 1 <= e <= epochs for e in injection_epochs):
        raise ConfigError(f"injection epochs must lie in [1, {epochs}]")
    if not 0.0 <= poison_fraction < 1.0:
        raise ConfigError("poison_fraction must be in [0, 1)")
    n = len(target)
    num_classes = model.output_dim
    hidden = target.hidden_labels
    labeled = target.as_labeled()
    seed_setup, seed_run = (int(s) for s in
                            np.random.SeedSequence(train.seed).generate_state(2))
    setup_rng = np.random.default_rng(seed_setup)
    initial_pseudo = assign_pseudo_labels(forward(model, target.features))
    wrong_pool = np.where(initial_pseudo != hidden)[0]
    n_poison = min(int(round(poison_fraction * n)), wrong_pool.shape[0])
    poison_idx = setup_rng.choice(wrong_pool, size=n_poison, replace=False)
    poison_mask = np.zeros(n, dtype=bool)
    poison_mask[poison_idx] = True
    poison_targets = one_hot(initial_pseudo[poison_idx], num_classes)

    final_accuracy: dict[int, float] = {}
    for inject_at in injection_epochs:
        run_model = model.copy()
        opt = make_optimizer(run_model, train.learning_rate, train.momentum)
        rng = np.random.default_rng(seed_run)
        for epoch in range(1, epochs + 1):
            pseudo = assign_pseudo_labels(forward(run_model, target.features))
            keep = (pseudo == hidden) & ~poison_mask
            feats = [target.features[keep]]
            targets = [one_hot(pseudo[keep], num_classes)]
            if epoch >= inject_at and n_poison:
                feats.append(target.features[poison_idx])
                targets.append(poison_targets)
            feats_all = np.concatenate(feats)
            if feats_all.shape[0] == 0:
                continue
            _train_epoch(run_model, opt, feats_all, np.concatenate(targets),
                         np.ones(feats_all.shape[0], dtype=np.float64),
                         "mse", train.batch_size, rng)
        final_accuracy[inject_at] = evaluate(run_model, labeled).accuracy
    latest = max(injection_epochs)
    return {
        "epochs": epochs,
        "poison_count": n_poison,
        "final_accuracy": {str(k): v for k, v in final_accuracy.items()},
        "delta_vs_latest": {str(k): final_accuracy[k] - final_accuracy[latest]
                            for k in final_accuracy},
    }


def run_diagnostic(cfg: ExperimentConfig, which: str, **params) -> dict:
    """Config-driven entry point for the three diagnostics; uses the first
    config seed, pretrains a fresh model, and returns a JSON-ready dict."""
    seed = params.pop("seed", cfg.seeds[0])
    slots = derive_seeds(seed)
    source, target, _ = build_task(cfg.task, slots[0])
    if target.hidden_labels is None:
        raise ConfigError("diagnostics need target reference labels")
    dims = [source.features.shape[1], *cfg.hidden_dims, source.num_classes]
    model = init_model(dims, slots[1])
    pretrain_source(model, source, replace(cfg.pretrain, seed=slots[2]))
    diag_train = replace(cfg.pretrain, seed=slots[5])

    if which == "oracle":
        curve = diag_oracle_filter(model, target,
                                   params.pop("epochs", 10), diag_train)
        out = {"diagnostic": "oracle", "seed": seed, "accuracy_curve": curve}
    elif which == "buckets":
        rep = diag_certainty_buckets(model, target, params.pop("buckets", 10))
        out = {"diagnostic": "buckets", "seed": seed, **rep.to_dict()}
    elif which == "timing":
        res = diag_timing_injection(
            model, target, diag_train,
            epochs=params.pop("epochs", 10),
            injection_epochs=tuple(params.pop("injection_epochs", (1, 4, 7, 10))),
            poison_fraction=params.pop("poison_fraction", 0.1))
        out = {"diagnostic": "timing", "seed": seed, **res}
    else:
        raise ConfigError(f"unknown diagnostic {which!r}; "
                          "expected oracle, buckets, or timing")
    if params:
        raise ConfigError(f"unknown diagnostic parameters: {sorted(params)}")
    if cfg.out_dir:
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / f"diag_{which}.json").open("w", encoding="utf-8") as fh:
            json.dump(out, fh, sort_keys=True, indent=2)
    return out
