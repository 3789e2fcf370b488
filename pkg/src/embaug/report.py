"""Plot-ready report emission from an experiment results directory.

For every variant this produces delimited data files (threshold curves,
reliability bins, training curves, confidence histograms) aggregated
across trials, and renders matching PNG figures next to them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .threshold import SWEEP_COLUMNS
from .trainer import HISTORY_COLUMNS


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        cols[name] = np.array([float(r[i]) if r[i] else np.nan for r in body])
    return cols


def _write_csv(path: Path, header: tuple[str, ...], columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i in range(columns[0].size):
            writer.writerow([repr(float(c[i])) for c in columns])


def _trial_dirs(results_dir: Path, variant: str, seeds: list[int]) -> list[Path]:
    dirs = [results_dir / variant / f"trial_{s}" for s in seeds]
    return [d for d in dirs if (d / "result.json").exists()]


def _mean_curves(files: list[Path], columns: tuple[str, ...]) -> tuple[dict, dict]:
    stacks: dict[str, list[np.ndarray]] = {c: [] for c in columns}
    for f in files:
        cols = _read_csv(f)
        for c in columns:
            stacks[c].append(cols[c])
    mean = {c: np.nanmean(np.stack(v), axis=0) for c, v in stacks.items()}
    std = {c: np.nanstd(np.stack(v), axis=0, ddof=1) if len(v) >= 2 else np.full_like(mean[c], np.nan)
           for c, v in stacks.items()}
    return mean, std


def write_report(results_dir: str | Path, out_dir: str | Path) -> None:
    """Aggregate per-trial outputs into per-variant report files and figures."""
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    aggregate_path = results_dir / "aggregate.json"
    if not aggregate_path.exists():
        raise FileNotFoundError(f"no aggregate.json under {results_dir}")
    aggregate = json.loads(aggregate_path.read_text())
    variants = list(aggregate["variants"])
    seeds = [int(s) for s in aggregate["seeds"]]
    out_dir.mkdir(parents=True, exist_ok=True)
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(exist_ok=True)

    sweep_mean: dict[str, dict] = {}
    history_mean: dict[str, dict] = {}
    reliability_data: dict[str, dict] = {}
    histogram_data: dict[str, np.ndarray] = {}

    for variant in variants:
        dirs = _trial_dirs(results_dir, variant, seeds)
        if not dirs:
            continue

        mean, std = _mean_curves([d / "sweep.csv" for d in dirs], SWEEP_COLUMNS)
        sweep_mean[variant] = mean
        _write_csv(out_dir / f"{variant}_threshold_curve.csv", SWEEP_COLUMNS,
                   [mean[c] for c in SWEEP_COLUMNS])
        _write_csv(out_dir / f"{variant}_threshold_curve_std.csv", SWEEP_COLUMNS,
                   [mean["threshold"]] + [std[c] for c in SWEEP_COLUMNS[1:]])

        mean_h, _ = _mean_curves([d / "history.csv" for d in dirs], HISTORY_COLUMNS)
        history_mean[variant] = mean_h
        _write_csv(out_dir / f"{variant}_training_curve.csv", HISTORY_COLUMNS,
                   [mean_h[c] for c in HISTORY_COLUMNS])

        # pool reliability bins across trials, weighting by bin counts
        trials = [json.loads((d / "result.json").read_text()) for d in dirs]
        bins = len(trials[0]["reliability"]["count"])
        count = np.zeros(bins)
        conf_sum = np.zeros(bins)
        acc_sum = np.zeros(bins)
        for t in trials:
            rel = t["reliability"]
            c = np.array(rel["count"], dtype=float)
            mc = np.array([np.nan if v is None else v for v in rel["mean_confidence"]])
            ac = np.array([np.nan if v is None else v for v in rel["accuracy"]])
            nonempty = c > 0
            count += c
            conf_sum[nonempty] += mc[nonempty] * c[nonempty]
            acc_sum[nonempty] += ac[nonempty] * c[nonempty]
        with np.errstate(invalid="ignore"):
            pooled_conf = conf_sum / count
            pooled_acc = acc_sum / count
        edges = np.array(trials[0]["reliability"]["edges"])
        reliability_data[variant] = {"edges": edges, "mean_confidence": pooled_conf,
                                     "accuracy": pooled_acc, "count": count}
        _write_csv(out_dir / f"{variant}_reliability.csv",
                   ("bin_low", "bin_high", "mean_confidence", "accuracy", "count"),
                   [edges[:-1], edges[1:], pooled_conf, pooled_acc, count])

        hist = np.stack([np.array(t["histogram_counts"], dtype=float) for t in trials])
        mean_hist = hist.mean(axis=0)
        frac = mean_hist / mean_hist.sum() if mean_hist.sum() else mean_hist
        histogram_data[variant] = frac
        n_bins = mean_hist.size
        h_edges = np.linspace(0.0, 1.0, n_bins + 1)
        _write_csv(out_dir / f"{variant}_confidence_histogram.csv",
                   ("bin_low", "bin_high", "mean_count", "fraction"),
                   [h_edges[:-1], h_edges[1:], mean_hist, frac])

    _render_figures(figures_dir, sweep_mean, history_mean, reliability_data, histogram_data)
    meta = {
        "variants": variants,
        "seeds": seeds,
        "notes": [
            "reliability diagrams cover class predictions only (NONE-labeled examples excluded)",
            "reliability bins are pooled across trials weighted by bin counts",
        ],
    }
    (out_dir / "report.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _render_figures(figures_dir, sweep_mean, history_mean, reliability_data, histogram_data):
    variants = list(sweep_mean)
    if not variants:
        return

    fig, axes = plt.subplots(len(variants), 1, figsize=(7, 3 * len(variants)), squeeze=False)
    for ax, variant in zip(axes[:, 0], variants):
        m = sweep_mean[variant]
        ax.plot(m["threshold"], m["id_acc"], label="ID accuracy")
        ax.plot(m["threshold"], m["none_acc"], label='"none" accuracy')
        ax.plot(m["threshold"], m["overall_acc"], label="overall accuracy")
        ax.set_title(variant)
        ax.set_xlabel("confidence threshold")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(figures_dir / "threshold_curves.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in variants:
        h = history_mean[variant]
        ax.plot(h["epoch"], h["acc"], label=f"{variant} overall")
        ax.plot(h["epoch"], h["none_acc"], linestyle="--", label=f'{variant} "none"')
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(figures_dir / "training_curves.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "k--", alpha=0.6, label="perfect calibration")
    for variant in variants:
        r = reliability_data[variant]
        centers = (r["edges"][:-1] + r["edges"][1:]) / 2
        ax.plot(centers, r["accuracy"], marker="o", label=variant)
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(figures_dir / "reliability.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    n_bins = len(next(iter(histogram_data.values())))
    centers = (np.arange(n_bins) + 0.5) / n_bins
    width = 0.9 / (n_bins * len(variants))
    for k, variant in enumerate(variants):
        ax.bar(centers + (k - (len(variants) - 1) / 2) * width, histogram_data[variant],
               width=width, label=variant)
    ax.set_xlabel("prediction confidence")
    ax.set_ylabel("fraction of predictions")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(figures_dir / "confidence_histograms.png", dpi=150)
    plt.close(fig)
