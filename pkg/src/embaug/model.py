"""Fully-connected classifier with sigmoid outputs and manual backprop.

Architecture: input(d) -> 250 ReLU -> dropout(0.3) -> 250 ReLU ->
dropout(0.3) -> C sigmoid. The sigmoid output lets all classes receive
low probability at once, so rows are not normalized to sum to one.

All math runs in float64. The checkpoint format (``.embm``) is:
magic b"EMBM", uint32 version, uint64 d, uint32 C, then W1, b1, W2, b2,
W3, b3 as little-endian float64, plus a ``<path>.json`` sidecar.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIDDEN = 250
DROPOUT_P = 0.3

CHECKPOINT_MAGIC = b"EMBM"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIQI")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    dropout_p: float = DROPOUT_P

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.W3.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]


@dataclass(frozen=True)
class ForwardTrace:
    """Activations cached by one forward pass, consumed by backward.

    In train mode the dropout masks hold 0 or 1/(1-p); in eval mode they
    are all ones.
    """

    x: np.ndarray
    z1: np.ndarray
    mask1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    mask2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class Gradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]


def init(d: int, n_classes: int, seed: int) -> MlpModel:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if n_classes < 2:
        raise ValueError(f"need n_classes >= 2, got {n_classes}")
    rng = np.random.default_rng(seed)

    def uniform(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return MlpModel(
        W1=uniform(d, HIDDEN),
        b1=np.zeros(HIDDEN),
        W2=uniform(HIDDEN, HIDDEN),
        b2=np.zeros(HIDDEN),
        W3=uniform(HIDDEN, n_classes),
        b3=np.zeros(n_classes),
    )


def forward(
    model: MlpModel,
    batch: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on a batch, returning (probs, trace).

    ``mode`` is "train" (dropout active, needs rng) or "eval"
    (deterministic, no dropout).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise ValueError(f"batch shape {x.shape} does not match input width {model.d}")
    if not np.isfinite(x).all():
        raise ValueError("batch contains non-finite values")
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng for dropout masks")
        p = model.dropout_p
        mask1 = (rng.random((x.shape[0], HIDDEN)) >= p) / (1.0 - p)
        mask2 = (rng.random((x.shape[0], HIDDEN)) >= p) / (1.0 - p)
    else:
        mask1 = np.ones((x.shape[0], HIDDEN))
        mask2 = np.ones((x.shape[0], HIDDEN))

    z1 = x @ model.W1 + model.b1
    h1 = np.maximum(z1, 0.0) * mask1
    z2 = h1 @ model.W2 + model.b2
    h2 = np.maximum(z2, 0.0) * mask2
    logits = h2 @ model.W3 + model.b3
    probs = 1.0 / (1.0 + np.exp(-logits))
    return probs, ForwardTrace(x, z1, mask1, h1, z2, mask2, h2, logits, probs)


def bce_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over all n*C output entries.

    Computed from pre-sigmoid logits in the stable form
    max(z, 0) - z*t + log(1 + exp(-|z|)).
    """
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape}, targets {targets.shape}")
    if ((targets < 0) | (targets > 1)).any():
        raise ValueError("targets must lie in [0, 1]")
    per_entry = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return float(per_entry.mean())


def backward(model: MlpModel, trace: ForwardTrace, targets: np.ndarray) -> Gradients:
    """Analytic gradient of bce_loss wrt every parameter.

    Respects the dropout masks recorded in the trace.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.shape != trace.probs.shape:
        raise ValueError(f"targets shape {targets.shape} does not match trace {trace.probs.shape}")
    if trace.x.shape[1] != model.d or trace.probs.shape[1] != model.n_classes:
        raise ValueError("trace does not belong to this model")
    n, C = targets.shape
    # d(mean BCE)/d(logit) = (sigmoid(z) - t) / (n*C)
    dz3 = (trace.probs - targets) / (n * C)
    gW3 = trace.h2.T @ dz3
    gb3 = dz3.sum(axis=0)
    dh2 = dz3 @ model.W3.T
    dz2 = dh2 * trace.mask2 * (trace.z2 > 0)
    gW2 = trace.h1.T @ dz2
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ model.W2.T
    dz1 = dh1 * trace.mask1 * (trace.z1 > 0)
    gW1 = trace.x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return Gradients(gW1, gb1, gW2, gb2, gW3, gb3)


def save_model(model: MlpModel, path: str | Path, extra: dict | None = None) -> None:
    """Write a checkpoint plus a JSON sidecar with config metadata."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.d, model.n_classes))
        for p in model.params():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    sidecar = {
        "d": model.d,
        "n_classes": model.n_classes,
        "hidden": HIDDEN,
        "dropout_p": model.dropout_p,
    }
    if extra:
        sidecar.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> MlpModel:
    blob = Path(path).read_bytes()
    if len(blob) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: file shorter than checkpoint header")
    magic, version, d, C = _CKPT_HEADER.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    shapes = [(d, HIDDEN), (HIDDEN,), (HIDDEN, HIDDEN), (HIDDEN,), (HIDDEN, C), (C,)]
    off = _CKPT_HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if len(blob) < off + count * 8:
            raise ValueError(f"{path}: truncated checkpoint")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy())
        off += count * 8
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MlpModel(*arrays)
