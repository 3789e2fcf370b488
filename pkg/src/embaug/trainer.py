"""Training loop: mini-batches, per-batch augmentation, cyclic LR, SGD.

The learning rate follows a triangular wave between lr_min and lr_max
with a full period of ``cycle_epochs`` epochs, evaluated continuously
per batch. Updates are plain SGD with additive weight decay:
theta <- theta - lr * (grad + weight_decay * theta).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_batch
from .data import NONE_LABEL, EmbeddingDataset
from .metrics import PredictionSet, accuracy_triplet, apply_threshold, pr_auc_ovr, roc_auc_ovr
from .model import Gradients, MlpModel, backward, bce_loss, forward, init

HISTORY_COLUMNS = ("epoch", "loss", "acc", "none_acc", "auroc", "aupr")

# threshold used for the accuracy curves recorded during training;
# proper threshold selection happens separately after training
SNAPSHOT_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 576
    batch_size: int = 128
    lr_min: float = 0.0003
    lr_max: float = 0.003
    cycle_epochs: int = 12
    weight_decay: float = 0.0001
    augment: AugmentConfig = AugmentConfig()
    snapshot_every: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr_min < self.lr_max:
            raise ValueError(f"need lr_min < lr_max, got {self.lr_min} >= {self.lr_max}")
        if self.cycle_epochs < 1:
            raise ValueError(f"cycle_epochs must be >= 1, got {self.cycle_epochs}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.snapshot_every < 1:
            raise ValueError(f"snapshot_every must be >= 1, got {self.snapshot_every}")


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    train_loss: float
    overall_acc: float
    none_acc: float | None
    auroc: float
    aupr: float


@dataclass(frozen=True)
class TrainingHistory:
    snapshots: tuple[Snapshot, ...] = ()

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(HISTORY_COLUMNS)
            for s in self.snapshots:
                writer.writerow([
                    s.epoch,
                    repr(s.train_loss),
                    repr(s.overall_acc),
                    "" if s.none_acc is None else repr(s.none_acc),
                    repr(s.auroc),
                    repr(s.aupr),
                ])


def lr_at(epoch_fraction: float, cfg: TrainConfig) -> float:
    """Triangular learning-rate wave, starting at lr_min, peaking at the
    middle of each ``cycle_epochs`` period."""
    if epoch_fraction < 0:
        raise ValueError(f"epoch_fraction must be >= 0, got {epoch_fraction}")
    phase = (epoch_fraction % cfg.cycle_epochs) / cfg.cycle_epochs
    tri = 1.0 - abs(2.0 * phase - 1.0)
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * tri


def sgd_step(model: MlpModel, grads: Gradients, lr: float, weight_decay: float) -> None:
    """In-place SGD update with additive weight decay."""
    for p, g in zip(model.params(), grads.params()):
        p -= lr * (g + weight_decay * p)


def evaluate(model: MlpModel, ds: EmbeddingDataset, threshold: float = SNAPSHOT_THRESHOLD) -> dict:
    """Forward the dataset in eval mode and compute snapshot metrics."""
    probs, _ = forward(model, ds.embeddings.astype(float), "eval")
    pset = PredictionSet(probs, ds.labels)
    triplet = accuracy_triplet(apply_threshold(pset, threshold), pset)
    return {
        "overall_acc": triplet.overall_acc,
        "id_acc": triplet.id_acc,
        "none_acc": triplet.none_acc,
        "auroc": roc_auc_ovr(pset).weighted_average,
        "aupr": pr_auc_ovr(pset).weighted_average,
    }


def train(
    train_ds: EmbeddingDataset,
    val_ds: EmbeddingDataset,
    cfg: TrainConfig,
) -> tuple[MlpModel, TrainingHistory]:
    """Train a fresh model on ``train_ds``, snapshotting metrics on
    ``val_ds`` every ``cfg.snapshot_every`` epochs.

    Fully deterministic given the config seed.
    """
    if (train_ds.labels == NONE_LABEL).any():
        raise ValueError("training set must not contain NONE-labeled examples")
    if train_ds.d != val_ds.d:
        raise ValueError(f"dimension mismatch: train d={train_ds.d}, val d={val_ds.d}")
    if train_ds.class_names != val_ds.class_names:
        raise ValueError("train and val datasets use different class vocabularies")

    C = train_ds.n_classes
    model = init(train_ds.d, C, cfg.seed)
    loop_rng = np.random.default_rng((cfg.seed, 1))
    aug_rng = np.random.default_rng((cfg.seed, cfg.augment.seed, 2))

    X = train_ds.embeddings.astype(float)
    onehot = np.eye(C)[train_ds.labels]
    n = X.shape[0]
    n_batches = int(np.ceil(n / cfg.batch_size))
    if n_batches > 1 and n % cfg.batch_size == 1:
        # fold a trailing singleton into the previous batch so the
        # augmenter always sees at least two examples
        n_batches -= 1

    snapshots = []
    for epoch in range(cfg.epochs):
        order = loop_rng.permutation(n)
        epoch_loss = 0.0
        for b in range(n_batches):
            if b == n_batches - 1:
                idx = order[b * cfg.batch_size :]
            else:
                idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = augment_batch(X[idx], onehot[idx], cfg.augment, aug_rng)
            _, trace = forward(model, batch.embeddings, "train", loop_rng)
            epoch_loss += bce_loss(trace.logits, batch.targets)
            grads = backward(model, trace, batch.targets)
            lr = lr_at(epoch + b / n_batches, cfg)
            sgd_step(model, grads, lr, cfg.weight_decay)
        if (epoch + 1) % cfg.snapshot_every == 0:
            m = evaluate(model, val_ds)
            snapshots.append(Snapshot(
                epoch=epoch + 1,
                train_loss=epoch_loss / n_batches,
                overall_acc=m["overall_acc"],
                none_acc=m["none_acc"],
                auroc=m["auroc"],
                aupr=m["aupr"],
            ))
    return model, TrainingHistory(tuple(snapshots))
