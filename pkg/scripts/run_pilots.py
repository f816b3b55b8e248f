"""Regenerate the committed pilot baselines (calibration/pilots.json).

The pilot numbers anchor the trend checks in the test suite: source-only and
adapted accuracy on the two covariate-shift tasks, the oracle-filter gain,
certainty-bucket correlations, injection-timing curves, ablation table, and
the proportion-error sweep on the anomaly task. Rerun after changing any
committed config:

    python3 scripts/run_pilots.py
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from pppl.adapt import TrainConfig, pretrain_source
from pppl.harness import (
    build_task,
    derive_seeds,
    diag_certainty_buckets,
    diag_oracle_filter,
    diag_timing_injection,
    load_config,
    run_ablation,
    run_cp_sweep,
    run_experiment,
)
from pppl.nn import init_model

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
OUT = ROOT / "calibration" / "pilots.json"


def spearman(x, y) -> float:
    rx = np.argsort(np.argsort(x))
    ry = np.argsort(np.argsort(y))
    return float(np.corrcoef(rx, ry)[0, 1])


def pretrained_models(cfg):
    for seed in cfg.seeds:
        slots = derive_seeds(seed)
        source, target, _ = build_task(cfg.task, slots[0])
        dims = [source.features.shape[1], *cfg.hidden_dims, source.num_classes]
        model = init_model(dims, slots[1])
        pretrain_source(model, source, replace(cfg.pretrain, seed=slots[2]))
        yield seed, slots, model, target


def main() -> None:
    pilots: dict = {}

    gauss = load_config(CONFIGS / "gaussians.json")
    moons = load_config(CONFIGS / "moons.json")
    anomaly = load_config(CONFIGS / "anomaly.json")

    for name, cfg in (("gaussians", gauss), ("moons", moons), ("anomaly", anomaly)):
        summary = run_experiment(cfg)["summary"]
        pilots[f"experiment_{name}"] = summary

    # timing needs more seeds than the other diagnostics: adjacent early
    # injection epochs differ by well under a point, so the mean only
    # orders cleanly once the seed noise is averaged down
    timing_seeds = list(range(8))
    oracle_gains, rhos, timing_runs = [], [], []
    for seed, slots, model, target in pretrained_models(
            replace(gauss, seeds=timing_seeds)):
        timing = diag_timing_injection(
            model.copy(), target, replace(gauss.pretrain, seed=slots[5]))
        timing_runs.append(timing["final_accuracy"])
        if seed in gauss.seeds:
            rep = diag_certainty_buckets(model.copy(), target)
            rhos.append(spearman([e.bucket for e in rep.entries],
                                 [e.wrong_ratio for e in rep.entries]))
            curve = diag_oracle_filter(model, target, 10,
                                       replace(gauss.pretrain, seed=slots[5]))
            oracle_gains.append(curve[-1] - curve[0])
    pilots["diag_oracle_gains"] = oracle_gains
    pilots["diag_bucket_spearman"] = rhos
    pilots["diag_timing_final_accuracy"] = timing_runs

    pilots["ablation_gaussians"] = run_ablation(gauss)
    pilots["cp_sweep_anomaly"] = run_cp_sweep(anomaly, errors=(0.1, 0.2, 0.3))

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(pilots, sort_keys=True, indent=2) + "\n",
                   encoding="utf-8")
    print(f"wrote {OUT}")
    print(f"gaussians gain: {pilots['experiment_gaussians']['gain_accuracy_mean']:+.4f}")
    print(f"moons gain:     {pilots['experiment_moons']['gain_accuracy_mean']:+.4f}")
    print(f"oracle gain:    {np.mean(oracle_gains):+.4f}")
    print(f"cp-sweep F1 true/E0.3: "
          f"{pilots['cp_sweep_anomaly']['true']['adapted_f1_mean']:.4f} / "
          f"{pilots['cp_sweep_anomaly']['E0.3']['adapted_f1_mean']:.4f}")


if __name__ == "__main__":
    main()
