"""Command-line surface.

Subcommands: synth, pretrain, adapt, evaluate, ablate, cp-sweep, diagnose.
Every subcommand reads a JSON experiment config (--config); --seed restricts
the run to one seed, --out overrides the output directory, --quiet silences
progress output. Exit codes: 0 success, 1 configuration error, 2 data error,
3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adapt import pretrain_source
from .errors import ConfigError, DataError, NumericalError, PPPLError
from .harness import (
    ABLATION_VARIANTS,
    ExperimentConfig,
    build_task,
    derive_seeds,
    load_config,
    run_diagnostic,
    run_experiment,
    run_ablation,
    run_cp_sweep,
)
from .metrics import evaluate
from .nn import init_model, load_checkpoint, save_checkpoint


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so argument mistakes map to exit code 1."""

    def error(self, message: str):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pppl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="run only this seed (overrides the config list)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        return p

    common(sub.add_parser("synth", help="write the generated datasets to CSV"))
    common(sub.add_parser("pretrain", help="pretrain on source; report the "
                          "source-only target metrics"))
    common(sub.add_parser("adapt", help="full multi-seed experiment: pretrain, "
                          "adapt, evaluate, aggregate"))
    p = common(sub.add_parser("evaluate", help="evaluate a checkpoint on the "
                              "task's target domain"))
    p.add_argument("--checkpoint", required=True, help="model file to evaluate")
    p = common(sub.add_parser("ablate", help="compare the method against its "
                              "ablation variants"))
    p.add_argument("--variants", default=",".join(ABLATION_VARIANTS),
                   help="comma-separated subset of A1,A2,A3,A4")
    p = common(sub.add_parser("cp-sweep", help="sensitivity to wrong class "
                              "proportions"))
    p.add_argument("--errors", default="0.1,0.2,0.3",
                   help="comma-separated proportion error levels")
    p.add_argument("--no-source-cp", action="store_true",
                   help="skip the source-proportions column")
    p = common(sub.add_parser("diagnose", help="run one insight diagnostic"))
    p.add_argument("which", choices=("oracle", "buckets", "timing"))
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--buckets", type=int, default=10)
    p.add_argument("--injection-epochs", default="1,4,7,10")
    p.add_argument("--poison-fraction", type=float, default=0.1)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _emit(args, payload: dict) -> None:
    # the result payload itself; --quiet silences only progress lines
    print(json.dumps(payload, sort_keys=True, indent=2))


def _require_out(cfg: ExperimentConfig, command: str) -> Path:
    if not cfg.out_dir:
        raise ConfigError(f"{command} needs an output directory (--out or config out_dir)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, features: np.ndarray, labels: np.ndarray | None) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"f{i}" for i in range(features.shape[1])]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(features.shape[0]):
            row = [f"{v:.7g}" for v in features[i]]
            if labels is not None:
                row.append(int(labels[i]))
            writer.writerow(row)


def _cmd_synth(args) -> int:
    cfg = _load(args)
    out = _require_out(cfg, "synth")
    seed = cfg.seeds[0]
    source, target, _ = build_task(cfg.task, derive_seeds(seed)[0])
    _write_csv(out / "source.csv", source.features, source.labels)
    # the label column in target.csv is reference-only; adaptation never sees it
    _write_csv(out / "target.csv", target.features, target.hidden_labels)
    _say(args, f"wrote {len(source)} source and {len(target)} target samples to {out}")
    return 0


def _cmd_pretrain(args) -> int:
    cfg = _load(args)
    seed = cfg.seeds[0]
    slots = derive_seeds(seed)
    source, target, _ = build_task(cfg.task, slots[0])
    dims = [source.features.shape[1], *cfg.hidden_dims, source.num_classes]
    model = init_model(dims, slots[1])
    pretrain_source(model, source, replace(cfg.pretrain, seed=slots[2]))
    payload = {"seed": seed, "layer_dims": dims,
               "source_metrics": evaluate(model, source, cfg.positive_class).to_dict()}
    if target.hidden_labels is not None:
        payload["target_metrics"] = evaluate(
            model, target.as_labeled(), cfg.positive_class).to_dict()
    if cfg.out_dir:
        out = _require_out(cfg, "pretrain")
        save_checkpoint(model, out / "pretrained.ckpt")
        payload["checkpoint"] = str(out / "pretrained.ckpt")
    _emit(args, payload)
    return 0


def _cmd_adapt(args) -> int:
    cfg = _load(args)
    result = run_experiment(cfg)
    _emit(args, {"summary": result["summary"],
                 "failures": result["failures"]})
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        for row in result["seeds"]:
            save_checkpoint(row["models"]["adapted"],
                            out / f"adapted_seed{row['seed']}.ckpt")
        _say(args, f"artifacts written to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load(args)
    model, _ = load_checkpoint(args.checkpoint)
    _, target, _ = build_task(cfg.task, derive_seeds(cfg.seeds[0])[0])
    if target.hidden_labels is None:
        raise ConfigError("evaluate needs target reference labels")
    if model.input_dim != target.features.shape[1]:
        raise DataError(
            f"checkpoint expects {model.input_dim} features, task provides "
            f"{target.features.shape[1]}")
    metrics = evaluate(model, target.as_labeled(), cfg.positive_class)
    _emit(args, {"checkpoint": args.checkpoint, "target_metrics": metrics.to_dict()})
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load(args)
    variants = tuple(v for v in args.variants.split(",") if v)
    bad = set(variants) - set(ABLATION_VARIANTS)
    if not variants or bad:
        raise ConfigError(f"variants must be a nonempty subset of "
                          f"{ABLATION_VARIANTS}, got {args.variants!r}")
    table = run_ablation(cfg, variants)
    _emit(args, table)
    return 0


def _cmd_cp_sweep(args) -> int:
    cfg = _load(args)
    try:
        errors = tuple(float(v) for v in args.errors.split(",") if v)
    except ValueError:
        raise ConfigError(f"bad --errors list: {args.errors!r}")
    table = run_cp_sweep(cfg, errors, include_source_cp=not args.no_source_cp)
    _emit(args, table)
    return 0


def _cmd_diagnose(args) -> int:
    cfg = _load(args)
    params: dict = {"seed": cfg.seeds[0]}
    if args.which == "oracle":
        params["epochs"] = args.epochs
    elif args.which == "buckets":
        params["buckets"] = args.buckets
    else:
        try:
            injections = tuple(int(v) for v in args.injection_epochs.split(",") if v)
        except ValueError:
            raise ConfigError(f"bad --injection-epochs list: {args.injection_epochs!r}")
        params.update(epochs=args.epochs, injection_epochs=injections,
                      poison_fraction=args.poison_fraction)
    _emit(args, run_diagnostic(cfg, args.which, **params))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "pretrain": _cmd_pretrain,
    "adapt": _cmd_adapt,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "cp-sweep": _cmd_cp_sweep,
    "diagnose": _cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except PPPLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
