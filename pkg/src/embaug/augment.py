"""Embedding-space augmentation: E-Mixup, E-Stitchup, and label softening.

E-Mixup blends two embeddings (and their targets) with a weight lambda
drawn fresh from Beta(alpha, alpha) for every pair. E-Stitchup instead
picks each embedding element from one of the two parents with
probability lambda, while still blending targets. Soft variants
additionally soften the mixed target vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

METHODS = ("none", "e_mixup", "e_stitchup")


@dataclass(frozen=True)
class AugmentConfig:
    method: str = "none"
    alpha: float = 0.4
    label_softness: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.label_softness < 1.0:
            raise ValueError(f"label_softness must be in [0, 1), got {self.label_softness}")


@dataclass(frozen=True)
class MixedPair:
    embedding: np.ndarray
    target: np.ndarray
    lam: float


class AugmentedBatch(NamedTuple):
    embeddings: np.ndarray
    targets: np.ndarray
    lams: np.ndarray


def sample_lambda(alpha: float, rng: np.random.Generator) -> float:
    """Draw lambda ~ Beta(alpha, alpha) via the Gamma-ratio construction.

    Works uniformly for alpha < 1 and alpha >= 1. If both Gamma draws
    underflow to zero (possible for tiny alpha), the draw degenerates to
    a fair coin over {0, 1}, matching the Beta endpoint limit.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    g1 = rng.gamma(alpha)
    g2 = rng.gamma(alpha)
    total = g1 + g2
    if total == 0.0:
        return float(rng.integers(0, 2))
    return float(g1 / total)


def _check_pair(e1, y1, e2, y2):
    if e1.shape != e2.shape:
        raise ValueError(f"embedding length mismatch: {e1.shape} vs {e2.shape}")
    if y1.shape != y2.shape:
        raise ValueError(f"target length mismatch: {y1.shape} vs {y2.shape}")


def _blend(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    # clip keeps the result inside the parent envelope; the bare weighted
    # sum can overshoot min/max by an ulp
    out = lam * a + (1.0 - lam) * b
    np.clip(out, np.minimum(a, b), np.maximum(a, b), out=out)
    return out


def e_mixup(e1, y1, e2, y2, lam: float) -> MixedPair:
    """Weighted average of two embeddings and their targets."""
    e1, y1 = np.asarray(e1, dtype=float), np.asarray(y1, dtype=float)
    e2, y2 = np.asarray(e2, dtype=float), np.asarray(y2, dtype=float)
    _check_pair(e1, y1, e2, y2)
    if lam == 1.0:
        return MixedPair(e1.copy(), y1.copy(), 1.0)
    return MixedPair(_blend(e1, e2, lam), _blend(y1, y2, lam), float(lam))


def e_stitchup(e1, y1, e2, y2, lam: float, rng: np.random.Generator) -> MixedPair:
    """Per-index selection from two embeddings; targets blended as in E-Mixup.

    Each output index takes e1's value with probability lambda, else e2's.
    """
    e1, y1 = np.asarray(e1, dtype=float), np.asarray(y1, dtype=float)
    e2, y2 = np.asarray(e2, dtype=float), np.asarray(y2, dtype=float)
    _check_pair(e1, y1, e2, y2)
    if lam == 1.0:
        return MixedPair(e1.copy(), y1.copy(), 1.0)
    take_first = rng.random(e1.shape) < lam
    return MixedPair(np.where(take_first, e1, e2), _blend(y1, y2, lam), float(lam))


def soften(y, softness: float) -> np.ndarray:
    """Soften a target vector.

    Classes with nonzero probability lose ``softness`` (clamped at zero);
    a total probability of one is spread evenly over the classes that had
    exactly zero probability. With no zero classes, no mass is added.
    """
    if not 0.0 <= softness < 1.0:
        raise ValueError(f"softness must be in [0, 1), got {softness}")
    y = np.asarray(y, dtype=float)
    zero = y == 0.0
    out = np.maximum(y - softness, 0.0)
    n_zero = int(zero.sum())
    if n_zero:
        out[zero] = 1.0 / n_zero
    return out


def augment_batch(
    embeddings: np.ndarray,
    targets: np.ndarray,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> AugmentedBatch:
    """Apply the configured augmentation to a mini-batch.

    Every example is paired with a partner drawn by a uniform random
    permutation of the batch (self-pairing only at permutation fixed
    points), with a fresh lambda per pair. Softening, when enabled, is
    applied to the mixed target; with method "none" it softens the raw
    targets instead.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = embeddings.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if targets.shape[0] != n:
        raise ValueError(f"batch size mismatch: {n} embeddings, {targets.shape[0]} targets")
    if cfg.method == "none":
        tgt = targets.copy()
        if cfg.label_softness > 0:
            tgt = np.stack([soften(t, cfg.label_softness) for t in tgt])
        return AugmentedBatch(embeddings.copy(), tgt, np.ones(n))
    if n < 2:
        raise ValueError(f"method {cfg.method!r} needs a batch of at least 2 examples")
    partners = rng.permutation(n)
    out_e = np.empty_like(embeddings)
    out_t = np.empty_like(targets)
    lams = np.empty(n)
    for i in range(n):
        lam = sample_lambda(cfg.alpha, rng)
        j = partners[i]
        if cfg.method == "e_mixup":
            pair = e_mixup(embeddings[i], targets[i], embeddings[j], targets[j], lam)
        else:
            pair = e_stitchup(embeddings[i], targets[i], embeddings[j], targets[j], lam, rng)
        tgt = pair.target
        if cfg.label_softness > 0:
            tgt = soften(tgt, cfg.label_softness)
        out_e[i] = pair.embedding
        out_t[i] = tgt
        lams[i] = pair.lam
    return AugmentedBatch(out_e, out_t, lams)
