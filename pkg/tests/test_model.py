import numpy as np
import pytest

from embaug.model import (
    HIDDEN,
    MlpModel,
    backward,
    bce_loss,
    forward,
    init,
    load_model,
    save_model,
)


def scalar_bce(logits, targets):
    """Direct per-entry formula, the oracle for the vectorized loss."""
    total = 0.0
    n, C = logits.shape
    for i in range(n):
        for j in range(C):
            p = 1.0 / (1.0 + np.exp(-logits[i, j]))
            t = targets[i, j]
            total += -(t * np.log(p) + (1 - t) * np.log(1 - p))
    return total / (n * C)


def eval_loss(model, x, targets):
    _, trace = forward(model, x, "eval")
    return bce_loss(trace.logits, targets)


class TestInit:
    def test_deterministic(self):
        a, b = init(5, 3, seed=11), init(5, 3, seed=11)
        for pa, pb in zip(a.params(), b.params()):
            assert pa.tobytes() == pb.tobytes()

    def test_biases_zero(self):
        m = init(9, 4, seed=0)
        assert (m.b1 == 0).all() and (m.b2 == 0).all() and (m.b3 == 0).all()

    def test_w1_mean_near_zero(self):
        d = 12
        m = init(d, 3, seed=2024)
        bound = np.sqrt(6.0 / (d + HIDDEN))
        # standard error of the mean of U(-bound, bound) over d*HIDDEN draws
        assert abs(m.W1.mean()) < 3 * bound / np.sqrt(12 * d * HIDDEN)

    def test_bounds_respected(self):
        m = init(6, 3, seed=7)
        bound = np.sqrt(6.0 / (6 + HIDDEN))
        assert np.abs(m.W1).max() <= bound
        assert np.abs(m.W3).max() <= np.sqrt(6.0 / (HIDDEN + 3))

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            init(0, 3, seed=0)
        with pytest.raises(ValueError):
            init(4, 1, seed=0)


class TestForward:
    def test_zero_model_outputs_half(self):
        m = init(4, 3, seed=0)
        for p in m.params():
            p[:] = 0.0
        probs, _ = forward(m, np.random.default_rng(0).standard_normal((6, 4)), "eval")
        assert (probs == 0.5).all()

    def test_eval_deterministic(self):
        m = init(5, 2, seed=1)
        x = np.random.default_rng(1).standard_normal((4, 5))
        p1, _ = forward(m, x, "eval")
        p2, _ = forward(m, x, "eval")
        assert np.array_equal(p1, p2)

    def test_probs_in_open_interval(self):
        m = init(8, 5, seed=3)
        x = np.random.default_rng(3).standard_normal((50, 8))
        probs, _ = forward(m, x, "eval")
        assert ((probs > 0) & (probs < 1)).all()

    def test_dropout_keep_frequency(self):
        m = init(3, 2, seed=4)
        rng = np.random.default_rng(4)
        _, trace = forward(m, np.zeros((10_000, 3)), "train", rng)
        keep = (trace.mask1 > 0).mean(axis=0)
        assert (np.abs(keep - 0.7) < 0.02).all()

    def test_dropout_mask_values(self):
        m = init(3, 2, seed=5)
        _, trace = forward(m, np.zeros((8, 3)), "train", np.random.default_rng(5))
        vals = np.unique(trace.mask2)
        assert set(np.round(vals, 12)) <= {0.0, round(1 / 0.7, 12)}

    def test_shape_and_finite_checks(self):
        m = init(4, 2, seed=6)
        with pytest.raises(ValueError, match="width"):
            forward(m, np.zeros((2, 5)), "eval")
        with pytest.raises(ValueError, match="non-finite"):
            forward(m, np.array([[np.nan, 0, 0, 0]]), "eval")
        with pytest.raises(ValueError, match="rng"):
            forward(m, np.zeros((2, 4)), "train")


class TestLoss:
    def test_perfect_prediction_limit(self):
        logits = np.where(np.eye(3, dtype=bool), 20.0, -20.0)[None].repeat(2, axis=0).reshape(2, -1)[:, :3]
        targets = (logits > 0).astype(float)
        assert bce_loss(logits, targets) < 1e-6

    def test_half_probability_is_ln2(self):
        logits = np.zeros((4, 5))
        targets = np.eye(5)[np.arange(4)]
        assert bce_loss(logits, targets) == pytest.approx(np.log(2.0), rel=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(8)
        logits = rng.standard_normal((2, 3)) * 3
        targets = rng.random((2, 3))
        assert bce_loss(logits, targets) == pytest.approx(scalar_bce(logits, targets), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_extreme_logits_finite(self):
        logits = np.array([[800.0, -800.0]])
        assert np.isfinite(bce_loss(logits, np.array([[0.0, 1.0]])))


class TestBackward:
    def test_finite_differences_full_sweep(self):
        # the keystone check: analytic gradients vs central differences
        # over every parameter of a small instance
        rng = np.random.default_rng(42)
        d, C, n = 7, 4, 5
        m = init(d, C, seed=1)
        x = rng.standard_normal((n, d))
        targets = rng.random((n, C))
        _, trace = forward(m, x, "eval")
        grads = backward(m, trace, targets)
        h = 1e-5
        worst = 0.0
        for p, g in zip(m.params(), grads.params()):
            flat_p, flat_g = p.reshape(-1), g.reshape(-1)
            for k in range(flat_p.size):
                orig = flat_p[k]
                flat_p[k] = orig + h
                hi = eval_loss(m, x, targets)
                flat_p[k] = orig - h
                lo = eval_loss(m, x, targets)
                flat_p[k] = orig
                num = (hi - lo) / (2 * h)
                # the 1e-6 floor keeps FD cancellation noise (~1e-11 absolute
                # at this loss scale) from dominating vanishing gradients
                rel = abs(num - flat_g[k]) / max(1e-6, abs(num) + abs(flat_g[k]))
                worst = max(worst, rel)
        assert worst < 1e-4

    def test_finite_differences_with_dropout_masks(self):
        # gradients must respect the sampled masks; reuse the recorded
        # masks to recompute the perturbed losses
        rng = np.random.default_rng(11)
        d, C, n = 5, 3, 4
        m = init(d, C, seed=2)
        x = rng.standard_normal((n, d))
        targets = rng.random((n, C))
        _, trace = forward(m, x, "train", np.random.default_rng(7))
        grads = backward(m, trace, targets)

        def masked_loss():
            z1 = x @ m.W1 + m.b1
            h1 = np.maximum(z1, 0.0) * trace.mask1
            z2 = h1 @ m.W2 + m.b2
            h2 = np.maximum(z2, 0.0) * trace.mask2
            return bce_loss(h2 @ m.W3 + m.b3, targets)

        h = 1e-5
        check_rng = np.random.default_rng(0)
        for p, g in zip(m.params(), grads.params()):
            flat_p, flat_g = p.reshape(-1), g.reshape(-1)
            for k in check_rng.choice(flat_p.size, size=min(40, flat_p.size), replace=False):
                orig = flat_p[k]
                flat_p[k] = orig + h
                hi = masked_loss()
                flat_p[k] = orig - h
                lo = masked_loss()
                flat_p[k] = orig
                num = (hi - lo) / (2 * h)
                rel = abs(num - flat_g[k]) / max(1e-6, abs(num) + abs(flat_g[k]))
                assert rel < 1e-4

    def test_zero_input_bias_gradient(self):
        # zero weights and zero inputs leave only b3 in play:
        # d(mean bce)/d(b3) = sigmoid(b3) / C for all-zero targets
        m = init(3, 4, seed=3)
        for p in (m.W1, m.b1, m.W2, m.b2, m.W3):
            p[:] = 0.0
        m.b3[:] = np.array([0.5, -1.0, 2.0, 0.0])
        x = np.zeros((6, 3))
        _, trace = forward(m, x, "eval")
        grads = backward(m, trace, np.zeros((6, 4)))
        expect = 1.0 / (1.0 + np.exp(-m.b3)) / 4
        assert np.allclose(grads.b3, expect, atol=1e-12)

    def test_duplicating_batch_leaves_gradients_unchanged(self):
        rng = np.random.default_rng(13)
        m = init(4, 3, seed=5)
        x = rng.standard_normal((3, 4))
        targets = rng.random((3, 3))
        _, t1 = forward(m, x, "eval")
        g1 = backward(m, t1, targets)
        _, t2 = forward(m, np.vstack([x, x]), "eval")
        g2 = backward(m, t2, np.vstack([targets, targets]))
        for a, b in zip(g1.params(), g2.params()):
            assert np.allclose(a, b, atol=1e-14)

    def test_mismatched_trace_rejected(self):
        m = init(4, 3, seed=6)
        _, trace = forward(m, np.zeros((2, 4)), "eval")
        with pytest.raises(ValueError):
            backward(m, trace, np.zeros((3, 3)))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = init(6, 3, seed=9)
        path = tmp_path / "model.embm"
        save_model(m, path, extra={"seed": 9})
        back = load_model(path)
        for a, b in zip(m.params(), back.params()):
            assert a.tobytes() == b.tobytes()
        assert '"seed": 9' in (tmp_path / "model.embm.json").read_text()

    def test_rejects_corrupt_header(self, tmp_path):
        m = init(3, 2, seed=1)
        path = tmp_path / "m.embm"
        save_model(m, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_rejects_truncated(self, tmp_path):
        m = init(3, 2, seed=1)
        path = tmp_path / "m.embm"
        save_model(m, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ValueError, match="truncated"):
            load_model(path)
