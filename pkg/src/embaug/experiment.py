"""Multi-trial experiment protocol driven by a JSON manifest.

A manifest names a dataset, a split recipe, shared training settings, a
list of augmentation variants, and the trial seeds. Every (variant,
seed) pair is trained and evaluated independently; per-trial results are
written under ``<out>/<variant>/trial_<seed>/`` and a deterministic
``aggregate.json`` collects means, sample standard deviations, and
paired deltas against the first (control) variant.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .data import EmbeddingDataset, SplitSpec, read_dataset, split
from .metrics import (
    PredictionSet,
    accuracy_triplet,
    apply_threshold,
    confidence_accuracy_correlation,
    confidence_accuracy_correlation_per_example,
    confidence_histogram,
    pr_auc_ovr,
    reliability,
    roc_auc_ovr,
)
from .model import forward, save_model
from .threshold import heuristic_intersection, heuristic_ratio, sweep
from .trainer import TrainConfig, train

REPORT_BINS = 10


@dataclass(frozen=True)
class VariantSpec:
    name: str
    method: str
    alpha: float = 0.4
    label_softness: float = 0.0


@dataclass(frozen=True)
class ExperimentManifest:
    dataset: Path
    train_fraction: float
    seeds: tuple[int, ...]
    variants: tuple[VariantSpec, ...]
    out_dir: Path
    excluded_classes: tuple[int, ...] | None = None
    n_excluded_classes: int | None = None
    epochs: int = 576
    batch_size: int = 128
    lr_min: float = 0.0003
    lr_max: float = 0.003
    cycle_epochs: int = 12
    weight_decay: float = 0.0001
    snapshot_every: int = 16
    grid_step: float = 0.01

    def __post_init__(self):
        if len(self.seeds) != len(set(self.seeds)):
            raise ValueError("trial seeds must be distinct")
        if not self.seeds:
            raise ValueError("manifest needs at least one trial seed")
        if not self.variants:
            raise ValueError("manifest needs at least one variant")
        names = [v.name for v in self.variants]
        if len(names) != len(set(names)):
            raise ValueError("variant names must be distinct")
        if self.excluded_classes is None and self.n_excluded_classes is None:
            raise ValueError("manifest must set excluded_classes or n_excluded_classes")


_REQUIRED_KEYS = ("dataset", "split", "train", "variants", "seeds", "out_dir")


def load_manifest(path: str | Path) -> ExperimentManifest:
    """Parse and validate a manifest JSON file."""
    path = Path(path)
    doc = json.loads(path.read_text())
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise ValueError(f"manifest missing keys: {missing}")
    sp = doc["split"]
    tr = doc["train"]
    variants = tuple(
        VariantSpec(
            name=v["name"],
            method=v["method"],
            alpha=float(v.get("alpha", 0.4)),
            label_softness=float(v.get("label_softness", 0.0)),
        )
        for v in doc["variants"]
    )
    dataset = Path(doc["dataset"])
    if not dataset.is_absolute():
        dataset = path.parent / dataset
    excluded = sp.get("excluded_classes")
    return ExperimentManifest(
        dataset=dataset,
        train_fraction=float(sp["train_fraction"]),
        seeds=tuple(int(s) for s in doc["seeds"]),
        variants=variants,
        out_dir=Path(doc["out_dir"]),
        excluded_classes=None if excluded is None else tuple(int(c) for c in excluded),
        n_excluded_classes=sp.get("n_excluded_classes"),
        epochs=int(tr.get("epochs", 576)),
        batch_size=int(tr.get("batch_size", 128)),
        lr_min=float(tr.get("lr_min", 0.0003)),
        lr_max=float(tr.get("lr_max", 0.003)),
        cycle_epochs=int(tr.get("cycle_epochs", 12)),
        weight_decay=float(tr.get("weight_decay", 0.0001)),
        snapshot_every=int(tr.get("snapshot_every", 16)),
        grid_step=float(doc.get("grid_step", 0.01)),
    )


def _jsonable(value):
    """Recursively convert to JSON-safe types; NaN becomes null."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) or math.isinf(v) else v
    return value


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def trial_excluded_classes(manifest: ExperimentManifest, n_classes: int, seed: int) -> frozenset[int]:
    """Excluded classes for one trial: the fixed manifest set, or a draw
    of n_excluded_classes distinct classes seeded by the trial."""
    if manifest.excluded_classes is not None:
        return frozenset(manifest.excluded_classes)
    rng = np.random.default_rng((seed, 101))
    return frozenset(int(c) for c in rng.choice(n_classes, size=manifest.n_excluded_classes, replace=False))


def _check_sweep_monotone(sw) -> None:
    none_ok = np.all(np.diff(sw.none_acc) >= -1e-12)
    id_ok = np.all(np.diff(sw.id_acc) <= 1e-12)
    if not (none_ok and id_ok):
        raise RuntimeError("threshold sweep violated accuracy monotonicity")


def run_trial(
    ds: EmbeddingDataset,
    manifest: ExperimentManifest,
    variant: VariantSpec,
    seed: int,
    out_dir: Path | None = None,
) -> dict:
    """Split, train, and evaluate one (variant, seed) trial."""
    excluded = trial_excluded_classes(manifest, ds.n_classes, seed)
    parts = split(ds, SplitSpec(manifest.train_fraction, excluded, seed))
    aug = AugmentConfig(variant.method, variant.alpha, variant.label_softness, seed)
    cfg = TrainConfig(
        epochs=manifest.epochs,
        batch_size=manifest.batch_size,
        lr_min=manifest.lr_min,
        lr_max=manifest.lr_max,
        cycle_epochs=manifest.cycle_epochs,
        weight_decay=manifest.weight_decay,
        augment=aug,
        snapshot_every=manifest.snapshot_every,
        seed=seed,
    )
    model, history = train(parts.train, parts.val, cfg)

    probs, _ = forward(model, parts.val.embeddings.astype(float), "eval")
    pset = PredictionSet(probs, parts.val.labels)
    sw = sweep(pset, manifest.grid_step)
    _check_sweep_monotone(sw)
    inter = heuristic_intersection(sw)
    t_ratio = heuristic_ratio(sw)
    auroc = roc_auc_ovr(pset)
    aupr = pr_auc_ovr(pset)
    diagram = reliability(pset, REPORT_BINS)
    hist = confidence_histogram(pset, REPORT_BINS)

    def triplet_at(t: float) -> dict:
        tri = accuracy_triplet(apply_threshold(pset, t), pset)
        return {"threshold": t, "id_acc": tri.id_acc, "none_acc": tri.none_acc,
                "overall_acc": tri.overall_acc}

    # epoch at which validation AUROC first reaches 95% of its final value
    convergence_epoch = None
    if history.snapshots:
        final_auroc = history.snapshots[-1].auroc
        for snap in history.snapshots:
            if snap.auroc >= 0.95 * final_auroc:
                convergence_epoch = snap.epoch
                break

    result = {
        "variant": variant.name,
        "seed": seed,
        "excluded_classes": sorted(excluded),
        "n_train": parts.train.n,
        "n_val": parts.val.n,
        "auroc_weighted": auroc.weighted_average,
        "aupr_weighted": aupr.weighted_average,
        "auroc_none": auroc.none_score,
        "aupr_none": aupr.none_score,
        "confidence_accuracy_correlation": confidence_accuracy_correlation(pset, REPORT_BINS),
        "confidence_accuracy_correlation_per_example": confidence_accuracy_correlation_per_example(pset),
        "threshold_intersection": inter.threshold,
        "threshold_intersection_crossed": inter.crossed,
        "threshold_ratio": t_ratio,
        "accuracy_at_intersection": triplet_at(inter.threshold),
        "accuracy_at_ratio": triplet_at(t_ratio),
        "accuracy_at_half": triplet_at(0.5),
        "histogram_counts": hist.tolist(),
        "histogram_top_bin_fraction": float(hist[-1] / hist.sum()) if hist.sum() else None,
        "reliability": {
            "edges": diagram.edges.tolist(),
            "mean_confidence": diagram.mean_confidence.tolist(),
            "accuracy": diagram.accuracy.tolist(),
            "count": diagram.count.tolist(),
        },
        "auroc_convergence_epoch": convergence_epoch,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_json(result, out_dir / "result.json")
        history.to_csv(out_dir / "history.csv")
        sw.to_csv(out_dir / "sweep.csv")
        save_model(model, out_dir / "model.embm", extra={"seed": seed, "variant": variant.name})
    return result


_AGGREGATED_SCALARS = (
    "auroc_weighted",
    "aupr_weighted",
    "auroc_none",
    "aupr_none",
    "confidence_accuracy_correlation",
    "threshold_intersection",
    "threshold_ratio",
    "histogram_top_bin_fraction",
)


def _mean_std(values: list[float | None]) -> dict:
    present = [v for v in values if v is not None]
    if not present:
        return {"mean": None, "std": None, "per_seed": values}
    mean = float(np.mean(present))
    std = float(np.std(present, ddof=1)) if len(present) >= 2 else None
    return {"mean": mean, "std": std, "per_seed": values}


def run_experiment(manifest: ExperimentManifest, out_dir: Path | None = None) -> dict:
    """Run every (variant, seed) trial and write per-trial plus aggregate
    results. A failed trial is recorded and does not stop the others."""
    out = Path(out_dir) if out_dir is not None else manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    ds = read_dataset(manifest.dataset)

    log_lines = []
    results: dict[str, dict[int, dict]] = {}
    errors = []
    for variant in manifest.variants:
        results[variant.name] = {}
        for seed in manifest.seeds:
            trial_dir = out / variant.name / f"trial_{seed}"
            start = time.time()
            try:
                results[variant.name][seed] = run_trial(ds, manifest, variant, seed, trial_dir)
                log_lines.append(f"{variant.name} seed={seed} ok ({time.time() - start:.1f}s)")
            except Exception as e:  # keep the other trials running
                errors.append({"variant": variant.name, "seed": seed, "error": str(e)})
                trial_dir.mkdir(parents=True, exist_ok=True)
                dump_json({"variant": variant.name, "seed": seed, "error": str(e)},
                          trial_dir / "error.json")
                log_lines.append(f"{variant.name} seed={seed} FAILED: {e}")

    aggregate: dict = {"variants": {}, "deltas_vs_control": {}, "errors": errors,
                       "seeds": list(manifest.seeds)}
    for variant in manifest.variants:
        per_seed = results[variant.name]
        summary = {}
        for key in _AGGREGATED_SCALARS:
            summary[key] = _mean_std([per_seed[s][key] if s in per_seed else None
                                      for s in manifest.seeds])
        summary["auroc_convergence_epoch"] = _mean_std(
            [per_seed[s]["auroc_convergence_epoch"] if s in per_seed else None
             for s in manifest.seeds])
        aggregate["variants"][variant.name] = summary

    control = manifest.variants[0].name
    for variant in manifest.variants[1:]:
        deltas = {}
        for key in _AGGREGATED_SCALARS:
            pairs = []
            for s in manifest.seeds:
                a = results[variant.name].get(s, {}).get(key)
                b = results[control].get(s, {}).get(key)
                pairs.append(a - b if a is not None and b is not None else None)
            deltas[key] = _mean_std(pairs)
        aggregate["deltas_vs_control"][variant.name] = deltas
    aggregate["control"] = control

    dump_json(aggregate, out / "aggregate.json")
    # timestamps live only here, keeping the metric JSON byte-reproducible
    (out / "run.log").write_text("".join(f"{line}\n" for line in log_lines))
    return {"results": results, "aggregate": aggregate}
