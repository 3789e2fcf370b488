"""Embedding dataset container, binary file format, splitting, and synthetic data.

Datasets live on disk as ``.embd`` files, a little-endian binary layout:

    magic    4 bytes    b"EMBD"
    version  uint32     currently 1
    n        uint64     number of examples
    d        uint64     embedding dimensionality
    C        uint32     number of classes
    matrix   n*d float32, row-major
    labels   n int32, -1 encodes the reserved "none" label
    names    C entries of (uint32 byte length + UTF-8 bytes)

Every write also produces a JSON manifest next to the data file
(``<path>.json``) recording shape, class names, and caller-supplied
provenance such as the generator seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Reserved label for out-of-distribution ("none" category) examples.
# Never a valid class index; serialized as -1 on disk as well.
NONE_LABEL = -1

MAGIC = b"EMBD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQI")


class FormatError(Exception):
    """A dataset file violates the binary layout."""


class BadMagicError(FormatError):
    """File does not start with the EMBD magic bytes."""


class UnsupportedVersionError(FormatError):
    """File uses a format version this reader does not understand."""


class TruncatedFileError(FormatError):
    """File ends before the payload promised by its header."""


class NonFiniteValueError(FormatError):
    """Embedding matrix contains NaN or infinite entries."""


@dataclass(frozen=True)
class EmbeddingDataset:
    """n embedding vectors of dimension d with integer class labels.

    Labels are either a class index in [0, C) or NONE_LABEL. Arrays are
    stored read-only so instances can be shared across threads.
    """

    embeddings: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        lab = np.ascontiguousarray(self.labels, dtype=np.int32)
        names = tuple(str(s) for s in self.class_names)
        if emb.ndim != 2:
            raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
        n, d = emb.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if len(names) < 2:
            raise ValueError("need at least 2 classes")
        if lab.shape != (n,):
            raise ValueError(f"labels shape {lab.shape} does not match n={n}")
        if not np.isfinite(emb).all():
            raise ValueError("embeddings contain non-finite values")
        bad = (lab != NONE_LABEL) & ((lab < 0) | (lab >= len(names)))
        if bad.any():
            raise ValueError(f"labels out of range [0, {len(names)}): {lab[bad][:5]}")
        emb.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "class_names", names)

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class SplitSpec:
    """How to divide a dataset into train and validation parts.

    Classes listed in ``excluded_classes`` are removed from training
    entirely; their examples land in validation relabeled as NONE_LABEL.
    """

    train_fraction: float
    excluded_classes: frozenset[int] = frozenset()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        object.__setattr__(self, "excluded_classes", frozenset(int(c) for c in self.excluded_classes))


@dataclass(frozen=True)
class Split:
    train: EmbeddingDataset
    val: EmbeddingDataset
    # val row index -> original class, for rows rewritten to NONE_LABEL
    val_original_labels: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class prototypes plus per-example Gaussian noise."""

    n_classes: int
    n_per_class: int
    d: int
    prototype_scale: float = 1.0
    noise_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need n_classes >= 2, got {self.n_classes}")
        if self.n_per_class < 1:
            raise ValueError(f"need n_per_class >= 1, got {self.n_per_class}")
        if self.d < 1:
            raise ValueError(f"need d >= 1, got {self.d}")
        if self.noise_scale <= 0:
            raise ValueError(f"need noise_scale > 0, got {self.noise_scale}")


def write_dataset(ds: EmbeddingDataset, path: str | Path, extra: dict | None = None) -> None:
    """Write ``ds`` to ``path`` plus a ``<path>.json`` manifest.

    ``extra`` entries (e.g. seed, source) are merged into the manifest.
    """
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, ds.n, ds.d, ds.n_classes))
        f.write(ds.embeddings.astype("<f4", copy=False).tobytes())
        f.write(ds.labels.astype("<i4", copy=False).tobytes())
        for name in ds.class_names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
    manifest = {
        "n": ds.n,
        "d": ds.d,
        "n_classes": ds.n_classes,
        "class_names": list(ds.class_names),
    }
    if extra:
        manifest.update(extra)
    manifest_path = Path(str(path) + ".json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> EmbeddingDataset:
    """Read an ``.embd`` file, validating layout and content."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than header")
    magic, version, n, d, n_classes = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported format version {version}")
    off = _HEADER.size
    mat_bytes = n * d * 4
    if len(blob) < off + mat_bytes:
        raise TruncatedFileError(f"{path}: truncated embedding matrix")
    emb = np.frombuffer(blob, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += mat_bytes
    if not np.isfinite(emb).all():
        raise NonFiniteValueError(f"{path}: non-finite embedding values")
    if len(blob) < off + n * 4:
        raise TruncatedFileError(f"{path}: truncated label block")
    labels = np.frombuffer(blob, dtype="<i4", count=n, offset=off)
    off += n * 4
    names = []
    for _ in range(n_classes):
        if len(blob) < off + 4:
            raise TruncatedFileError(f"{path}: truncated class-name block")
        (ln,) = struct.unpack_from("<I", blob, off)
        off += 4
        if len(blob) < off + ln:
            raise TruncatedFileError(f"{path}: truncated class-name block")
        names.append(blob[off : off + ln].decode("utf-8"))
        off += ln
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes after payload")
    try:
        return EmbeddingDataset(emb, labels, tuple(names))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def split(ds: EmbeddingDataset, spec: SplitSpec) -> Split:
    """Split ``ds`` into train/val per ``spec``.

    Examples of excluded classes all go to validation with labels
    rewritten to NONE_LABEL (originals retained in the sidecar map).
    Rows that are already NONE-labeled also go to validation. The rest
    is shuffled by the seed and divided by ``train_fraction``.
    """
    C = ds.n_classes
    bad = [c for c in spec.excluded_classes if not 0 <= c < C]
    if bad:
        raise ValueError(f"excluded classes out of range [0, {C}): {sorted(bad)}")
    rng = np.random.default_rng(spec.seed)
    excluded_mask = np.isin(ds.labels, np.array(sorted(spec.excluded_classes), dtype=np.int32))
    none_mask = ds.labels == NONE_LABEL
    pool = np.flatnonzero(~excluded_mask & ~none_mask)
    shuffled = pool[rng.permutation(pool.size)]
    n_train = int(spec.train_fraction * pool.size)
    if n_train == 0:
        raise ValueError("training split would be empty; too much data excluded")
    train_idx = shuffled[:n_train]
    val_idx = np.concatenate([shuffled[n_train:], np.flatnonzero(excluded_mask), np.flatnonzero(none_mask)])
    if val_idx.size == 0:
        raise ValueError("validation split would be empty")
    val_labels = ds.labels[val_idx].copy()
    sidecar = {}
    for pos in range(shuffled.size - n_train, shuffled.size - n_train + int(excluded_mask.sum())):
        sidecar[pos] = int(val_labels[pos])
        val_labels[pos] = NONE_LABEL
    train = EmbeddingDataset(ds.embeddings[train_idx], ds.labels[train_idx], ds.class_names)
    val = EmbeddingDataset(ds.embeddings[val_idx], val_labels, ds.class_names)
    return Split(train, val, sidecar)


def generate_synthetic(spec: SyntheticSpec) -> EmbeddingDataset:
    """Sample a synthetic dataset of noisy class prototypes.

    Each class gets a prototype with iid N(0, prototype_scale^2) entries;
    examples are the prototype plus iid N(0, noise_scale^2) noise.
    """
    rng = np.random.default_rng(spec.seed)
    prototypes = rng.normal(0.0, spec.prototype_scale, size=(spec.n_classes, spec.d))
    rows = []
    for c in range(spec.n_classes):
        noise = rng.normal(0.0, spec.noise_scale, size=(spec.n_per_class, spec.d))
        rows.append(prototypes[c] + noise)
    emb = np.concatenate(rows).astype(np.float32)
    labels = np.repeat(np.arange(spec.n_classes, dtype=np.int32), spec.n_per_class)
    names = tuple(f"class_{c:02d}" for c in range(spec.n_classes))
    return EmbeddingDataset(emb, labels, names)
