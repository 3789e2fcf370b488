import numpy as np
import pytest

from embaug.data import (
    NONE_LABEL,
    BadMagicError,
    EmbeddingDataset,
    FormatError,
    NonFiniteValueError,
    SplitSpec,
    SyntheticSpec,
    TruncatedFileError,
    UnsupportedVersionError,
    generate_synthetic,
    read_dataset,
    split,
    write_dataset,
)


def random_dataset(rng, n=None, d=None, C=None, with_none=False):
    n = n or int(rng.integers(1, 40))
    d = d or int(rng.integers(1, 12))
    C = C or int(rng.integers(2, 7))
    emb = rng.standard_normal((n, d)).astype(np.float32)
    labels = rng.integers(0, C, size=n).astype(np.int32)
    if with_none and n > 1:
        labels[rng.integers(0, n)] = NONE_LABEL
    names = tuple(f"c{i}" for i in range(C))
    return EmbeddingDataset(emb, labels, names)


class TestDatasetInvariants:
    def test_rejects_bad_label(self):
        with pytest.raises(ValueError, match="out of range"):
            EmbeddingDataset(np.zeros((2, 3), np.float32), np.array([0, 5]), ("a", "b"))

    def test_rejects_non_finite(self):
        emb = np.array([[0.0, np.inf]], np.float32)
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingDataset(emb, np.array([0]), ("a", "b"))

    def test_rejects_single_class(self):
        with pytest.raises(ValueError, match="2 classes"):
            EmbeddingDataset(np.zeros((1, 1), np.float32), np.array([0]), ("a",))

    def test_none_label_allowed(self):
        ds = EmbeddingDataset(np.zeros((2, 1), np.float32),
                              np.array([NONE_LABEL, 1]), ("a", "b"))
        assert ds.labels[0] == NONE_LABEL


class TestFormat:
    def test_round_trip_random_datasets(self, tmp_path):
        rng = np.random.default_rng(7)
        for i in range(25):
            ds = random_dataset(rng, with_none=i % 3 == 0)
            path = tmp_path / f"ds{i}.embd"
            write_dataset(ds, path)
            back = read_dataset(path)
            assert np.array_equal(ds.embeddings, back.embeddings)
            assert np.array_equal(ds.labels, back.labels)
            assert ds.class_names == back.class_names

    def test_byte_layout_size(self, tmp_path):
        ds = EmbeddingDataset(np.array([[0.5, -1.0]], np.float32), np.array([1]), ("a", "bb"))
        path = tmp_path / "tiny.embd"
        write_dataset(ds, path)
        # header 4+4+8+8+4, matrix 1*2*4, labels 1*4, names (4+1)+(4+2)
        assert path.stat().st_size == 28 + 8 + 4 + 5 + 6

    def test_none_label_round_trips_as_minus_one(self, tmp_path):
        ds = EmbeddingDataset(np.zeros((2, 1), np.float32),
                              np.array([NONE_LABEL, 0]), ("a", "b"))
        path = tmp_path / "none.embd"
        write_dataset(ds, path)
        raw = path.read_bytes()
        labels = np.frombuffer(raw, dtype="<i4", count=2, offset=28 + 2 * 4)
        assert labels[0] == -1
        assert read_dataset(path).labels[0] == NONE_LABEL

    def test_manifest_written(self, tmp_path):
        ds = random_dataset(np.random.default_rng(0))
        path = tmp_path / "m.embd"
        write_dataset(ds, path, extra={"seed": 5, "source": "synthetic"})
        manifest = (tmp_path / "m.embd.json").read_text()
        assert '"seed": 5' in manifest and '"class_names"' in manifest

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.embd"
        ds = random_dataset(np.random.default_rng(1))
        write_dataset(ds, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            read_dataset(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.embd"
        write_dataset(random_dataset(np.random.default_rng(2)), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersionError):
            read_dataset(path)

    def test_truncated_matrix(self, tmp_path):
        path = tmp_path / "t.embd"
        write_dataset(random_dataset(np.random.default_rng(3), n=10, d=8), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: 28 + 11])
        with pytest.raises(TruncatedFileError):
            read_dataset(path)

    def test_truncated_names(self, tmp_path):
        path = tmp_path / "tn.embd"
        write_dataset(random_dataset(np.random.default_rng(4), n=2, d=2, C=3), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(TruncatedFileError):
            read_dataset(path)

    def test_non_finite_payload(self, tmp_path):
        path = tmp_path / "nf.embd"
        ds = EmbeddingDataset(np.zeros((1, 2), np.float32), np.array([0]), ("a", "b"))
        write_dataset(ds, path)
        blob = bytearray(path.read_bytes())
        blob[28:32] = np.array([np.nan], "<f4").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(NonFiniteValueError):
            read_dataset(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "tg.embd"
        write_dataset(random_dataset(np.random.default_rng(5)), path)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(FormatError):
            read_dataset(path)


class TestSplit:
    def test_half_split_counts(self):
        ds = random_dataset(np.random.default_rng(11), n=10, d=3, C=2)
        parts = split(ds, SplitSpec(0.5, seed=1))
        assert parts.train.n == 5 and parts.val.n == 5

    def test_partition_is_exact(self):
        ds = random_dataset(np.random.default_rng(12), n=37, d=4, C=5)
        parts = split(ds, SplitSpec(0.3, frozenset({1}), seed=9))
        assert parts.train.n + parts.val.n == ds.n
        # every original row appears exactly once across the two parts
        all_rows = np.vstack([parts.train.embeddings, parts.val.embeddings])
        assert (np.sort(all_rows.view("<f4").reshape(ds.n, -1), axis=0)
                == np.sort(ds.embeddings, axis=0)).all()

    def test_excluded_class_goes_to_val_as_none(self):
        ds = random_dataset(np.random.default_rng(13), n=60, d=3, C=5)
        parts = split(ds, SplitSpec(0.5, frozenset({3}), seed=2))
        assert not (parts.train.labels == 3).any()
        assert not (parts.val.labels == 3).any()
        n_excluded = int((ds.labels == 3).sum())
        assert (parts.val.labels == NONE_LABEL).sum() == n_excluded
        assert len(parts.val_original_labels) == n_excluded
        for pos, orig in parts.val_original_labels.items():
            assert orig == 3
            assert parts.val.labels[pos] == NONE_LABEL

    def test_deterministic(self):
        ds = random_dataset(np.random.default_rng(14), n=50, d=4, C=4)
        a = split(ds, SplitSpec(0.4, frozenset({0}), seed=77))
        b = split(ds, SplitSpec(0.4, frozenset({0}), seed=77))
        assert np.array_equal(a.train.embeddings, b.train.embeddings)
        assert np.array_equal(a.val.labels, b.val.labels)
        assert a.val_original_labels == b.val_original_labels

    def test_excluding_everything_fails(self):
        ds = random_dataset(np.random.default_rng(15), n=20, d=2, C=2)
        with pytest.raises(ValueError, match="empty"):
            split(ds, SplitSpec(0.5, frozenset({0, 1}), seed=1))

    def test_out_of_range_exclusion(self):
        ds = random_dataset(np.random.default_rng(16), n=20, d=2, C=3)
        with pytest.raises(ValueError, match="out of range"):
            split(ds, SplitSpec(0.5, frozenset({7}), seed=1))


class TestSynthetic:
    def test_counts_and_label_balance(self):
        ds = generate_synthetic(SyntheticSpec(20, 100, 64, seed=1))
        assert ds.n == 2000 and ds.d == 64 and ds.n_classes == 20
        counts = np.bincount(ds.labels, minlength=20)
        assert (counts == 100).all()

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(5, 10, 8, seed=42))
        b = generate_synthetic(SyntheticSpec(5, 10, 8, seed=42))
        assert np.array_equal(a.embeddings, b.embeddings)
        assert np.array_equal(a.labels, b.labels)

    def test_tiny_noise_collapses_to_prototypes(self):
        ds = generate_synthetic(SyntheticSpec(4, 20, 16, noise_scale=1e-9, seed=5))
        for c in range(4):
            rows = ds.embeddings[ds.labels == c].astype(float)
            spread = np.linalg.norm(rows - rows[0], axis=1).max()
            assert spread < 1e-6 * ds.d

    def test_nearest_prototype_oracle_separability(self):
        # the reference config must be cleanly separable before it backs
        # any training expectations
        ds = generate_synthetic(SyntheticSpec(20, 100, 64, prototype_scale=1.0,
                                              noise_scale=0.3, seed=3))
        emb = ds.embeddings.astype(float)
        rng = np.random.default_rng(0)
        order = rng.permutation(ds.n)
        fit, held = order[: ds.n // 2], order[ds.n // 2 :]
        prototypes = np.stack([emb[fit][ds.labels[fit] == c].mean(axis=0) for c in range(20)])
        dists = ((emb[held][:, None, :] - prototypes[None]) ** 2).sum(axis=2)
        acc = (dists.argmin(axis=1) == ds.labels[held]).mean()
        assert acc > 0.95

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            SyntheticSpec(1, 10, 4)
        with pytest.raises(ValueError):
            SyntheticSpec(3, 10, 4, noise_scale=0.0)
