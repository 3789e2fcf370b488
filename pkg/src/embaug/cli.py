"""Command-line interface.

Subcommands: gen, split, train, eval, sweep, experiment, report.
Exit codes: 0 success, 2 configuration errors, 3 data/file errors,
4 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from .augment import AugmentConfig, METHODS
from .data import (
    EmbeddingDataset,
    FormatError,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    read_dataset,
    split,
    write_dataset,
)
from .metrics import (
    PredictionSet,
    accuracy_triplet,
    apply_threshold,
    confidence_accuracy_correlation,
    pr_auc_ovr,
    roc_auc_ovr,
)
from .model import forward, load_model, save_model
from .report import write_report
from .threshold import heuristic_intersection, heuristic_ratio, sweep
from .trainer import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def cmd_gen(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        n_per_class=args.per_class,
        d=args.dim,
        prototype_scale=args.prototype_scale,
        noise_scale=args.noise_scale,
        seed=args.seed,
    )
    ds = generate_synthetic(spec)
    write_dataset(ds, args.out, extra={"source": "synthetic", "seed": args.seed,
                                       "prototype_scale": args.prototype_scale,
                                       "noise_scale": args.noise_scale})
    print(f"wrote {args.out}: n={ds.n} d={ds.d} classes={ds.n_classes}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = read_dataset(args.data)
    spec = SplitSpec(args.train_fraction, frozenset(args.exclude or []), args.seed)
    parts = split(ds, spec)
    write_dataset(parts.train, args.out_train, extra={"source": str(args.data), "seed": args.seed,
                                                      "role": "train"})
    write_dataset(parts.val, args.out_val, extra={"source": str(args.data), "seed": args.seed,
                                                  "role": "val"})
    sidecar = Path(str(args.out_val) + ".none_labels.json")
    sidecar.write_text(json.dumps({str(k): v for k, v in sorted(parts.val_original_labels.items())},
                                  indent=2) + "\n")
    print(f"train: n={parts.train.n}  val: n={parts.val.n} "
          f"(none-labeled: {len(parts.val_original_labels)})")
    return EXIT_OK


def _augment_config(args, seed: int) -> AugmentConfig:
    return AugmentConfig(method=args.method, alpha=args.alpha,
                         label_softness=args.softness, seed=seed)


def cmd_train(args) -> int:
    train_ds = read_dataset(args.train)
    val_ds = read_dataset(args.val)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_min=args.lr_min,
        lr_max=args.lr_max,
        cycle_epochs=args.cycle_epochs,
        weight_decay=args.weight_decay,
        augment=_augment_config(args, args.seed),
        snapshot_every=args.snapshot_every,
        seed=args.seed,
    )
    model, history = train(train_ds, val_ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.embm",
               extra={"seed": args.seed, "method": args.method, "alpha": args.alpha,
                      "label_softness": args.softness, "epochs": args.epochs})
    history.to_csv(out / "history.csv")
    if history.snapshots:
        last = history.snapshots[-1]
        print(f"final: epoch={last.epoch} loss={last.train_loss:.4f} "
              f"acc={last.overall_acc:.4f} auroc={last.auroc:.4f}")
    print(f"wrote {out / 'model.embm'} and {out / 'history.csv'}")
    return EXIT_OK


def _predictions(model_path, data_path) -> PredictionSet:
    model = load_model(model_path)
    ds = read_dataset(data_path)
    probs, _ = forward(model, ds.embeddings.astype(float), "eval")
    return PredictionSet(probs, ds.labels)


def cmd_eval(args) -> int:
    pset = _predictions(args.model, args.data)
    triplet = accuracy_triplet(apply_threshold(pset, args.threshold), pset)
    metrics = {
        "threshold": args.threshold,
        "id_acc": triplet.id_acc,
        "none_acc": triplet.none_acc,
        "overall_acc": triplet.overall_acc,
        "auroc_weighted": roc_auc_ovr(pset).weighted_average,
        "aupr_weighted": pr_auc_ovr(pset).weighted_average,
        "confidence_accuracy_correlation": confidence_accuracy_correlation(pset),
    }
    text = json.dumps(exp._jsonable(metrics), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    pset = _predictions(args.model, args.data)
    sw = sweep(pset, args.grid_step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sw.to_csv(out / "sweep.csv")
    inter = heuristic_intersection(sw)
    selection = {
        "threshold_intersection": inter.threshold,
        "threshold_intersection_crossed": inter.crossed,
        "threshold_ratio": heuristic_ratio(sw),
    }
    exp.dump_json(selection, out / "thresholds.json")
    print(json.dumps(exp._jsonable(selection), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args) -> int:
    manifest = exp.load_manifest(args.manifest)
    out = Path(args.out) if args.out else None
    outcome = exp.run_experiment(manifest, out)
    n_err = len(outcome["aggregate"]["errors"])
    print(f"experiment done: {len(manifest.variants)} variants x {len(manifest.seeds)} seeds, "
          f"{n_err} failed trials")
    return EXIT_OK if n_err == 0 else EXIT_RUNTIME


def cmd_report(args) -> int:
    write_report(args.results, args.out)
    print(f"report written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embaug",
                                     description="Embedding augmentation training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic embedding dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--prototype-scale", type=float, default=1.0)
    p.add_argument("--noise-scale", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="split a dataset into train and validation parts")
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, default=0.1)
    p.add_argument("--exclude", type=int, nargs="*", help="class indices excluded from training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--epochs", type=int, default=576)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-min", type=float, default=0.0003)
    p.add_argument("--lr-max", type=float, default=0.003)
    p.add_argument("--cycle-epochs", type=int, default=12)
    p.add_argument("--weight-decay", type=float, default=0.0001)
    p.add_argument("--method", choices=METHODS, default="none")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--softness", type=float, default=0.1)
    p.add_argument("--snapshot-every", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="threshold sweep plus selection heuristics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("experiment", help="run a multi-trial experiment from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="override the manifest output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="emit plot-ready data and figures from results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())
