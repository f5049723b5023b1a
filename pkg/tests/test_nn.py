"""Unit tests for the dense GCN kernel: forward, heads, gradients, Adam."""

import numpy as np
import pytest

from cplgraph.graph import FeatureMatrix, SparseGraph, normalize_adjacency
from cplgraph.nn import (
    AdamState,
    Confidence,
    ForwardCache,
    GcnGrads,
    GcnModel,
    GcnParams,
    adam_step,
    classify,
    cross_entropy,
    decode_links,
    gcn_backward,
    gcn_forward,
    glorot_init,
    init_gcn_params,
    link_score_grads_to_output,
    load_checkpoint,
    save_checkpoint,
    stable_sigmoid,
)
from cplgraph.util import DataError, NumericalError

SIGMOID_ONE = 0.7310585786300049


def ring_graph(n):
    pairs = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return SparseGraph.from_pairs(n, pairs)


def fake_cache(out):
    """Cache with prescribed output; inner intermediates unused by the heads."""
    out = np.asarray(out, dtype=np.float64)
    z = np.zeros((out.shape[0], 1))
    return ForwardCache(None, z, z, z, z, z, out)


class TestGlorotInit:
    def test_bound(self):
        m = glorot_init((2, 2), 0)
        assert np.abs(m).max() <= np.sqrt(6.0 / 4.0)

    def test_same_seed_identical(self):
        assert np.array_equal(glorot_init((7, 3), 42), glorot_init((7, 3), 42))

    def test_different_seed_differs(self):
        assert not np.array_equal(glorot_init((7, 3), 1), glorot_init((7, 3), 2))

    def test_mean_within_three_sigma(self):
        m = glorot_init((100, 100), 5)
        limit = np.sqrt(6.0 / 200.0)
        sigma_mean = limit / np.sqrt(3.0 * m.size)
        assert abs(m.mean()) <= 3.0 * sigma_mean


class TestForward:
    def test_identity_graph_identity_weights(self):
        # edgeless graph normalizes to the identity, so out = relu(X) = X
        g = SparseGraph.from_pairs(3, np.empty((0, 2), dtype=np.int64))
        x = np.array([[1.0, 2.0, 0.0], [0.5, 0.0, 3.0], [4.0, 1.0, 2.0]])
        p = GcnParams(np.eye(3), np.eye(3), 0)
        cache = gcn_forward(normalize_adjacency(g), x, p)
        np.testing.assert_allclose(cache.out, x, rtol=0, atol=1e-12)

    def test_matches_dense_oracle(self):
        g = ring_graph(9)
        adj = normalize_adjacency(g)
        x = np.random.default_rng(1).normal(size=(9, 4))
        p = init_gcn_params(4, 6, 3, 11)
        cache = gcn_forward(adj, x, p)
        a = adj.to_dense()
        expected = a @ np.maximum(a @ x @ p.w1, 0.0) @ p.w2
        np.testing.assert_allclose(cache.out, expected, rtol=1e-10)

    def test_zero_features_zero_output(self):
        g = ring_graph(5)
        p = init_gcn_params(3, 4, 2, 0)
        cache = gcn_forward(normalize_adjacency(g), np.zeros((5, 3)), p)
        assert np.array_equal(cache.out, np.zeros((5, 2)))

    def test_accepts_feature_matrix_wrapper(self):
        g = ring_graph(4)
        x = FeatureMatrix.from_array(np.random.default_rng(2).normal(size=(4, 3)))
        p = init_gcn_params(3, 4, 2, 0)
        a = gcn_forward(normalize_adjacency(g), x, p).out
        b = gcn_forward(normalize_adjacency(g), x.data, p).out
        assert np.array_equal(a, b)

    def test_row_count_mismatch_rejected(self):
        g = ring_graph(4)
        p = init_gcn_params(3, 4, 2, 0)
        with pytest.raises(ValueError, match="feature rows"):
            gcn_forward(normalize_adjacency(g), np.zeros((5, 3)), p)

    def test_feature_dim_mismatch_rejected(self):
        g = ring_graph(4)
        p = init_gcn_params(3, 4, 2, 0)
        with pytest.raises(ValueError, match="feature cols"):
            gcn_forward(normalize_adjacency(g), np.zeros((4, 7)), p)


class TestClassify:
    def test_equal_logits_split_evenly(self):
        conf = classify(fake_cache([[0.0, 0.0]]))
        np.testing.assert_allclose(conf.values, [[0.5, 0.5]])
        assert conf.kind == "class-distribution"

    def test_huge_logit_gap_no_overflow(self):
        conf = classify(fake_cache([[1000.0, 0.0]]))
        np.testing.assert_allclose(conf.values, [[1.0, 0.0]])
        assert np.isfinite(conf.values).all()

    def test_rows_sum_to_one(self):
        logits = np.random.default_rng(3).normal(size=(40, 5)) * 10
        conf = classify(fake_cache(logits))
        np.testing.assert_allclose(conf.values.sum(axis=1), np.ones(40), atol=1e-9)
        assert (conf.values >= 0).all() and (conf.values <= 1).all()


class TestDecodeLinks:
    def test_orthogonal_embeddings_score_half(self):
        conf = decode_links(fake_cache(np.eye(3)), [[0, 1], [1, 2]])
        np.testing.assert_allclose(conf.values, [0.5, 0.5])
        assert conf.kind == "edge-score"

    def test_aligned_unit_embeddings(self):
        e = np.array([[1.0, 0.0], [1.0, 0.0]])
        conf = decode_links(fake_cache(e), [[0, 1]])
        np.testing.assert_allclose(conf.values, [SIGMOID_ONE], rtol=0, atol=1e-15)

    def test_matches_per_pair_oracle(self):
        rng = np.random.default_rng(7)
        e = rng.normal(size=(30, 6))
        pairs = np.stack([rng.integers(0, 30, 50), rng.integers(0, 30, 50)], axis=1)
        conf = decode_links(fake_cache(e), pairs)
        expected = np.array(
            [1.0 / (1.0 + np.exp(-float(e[i] @ e[j]))) for i, j in pairs]
        )
        np.testing.assert_allclose(conf.values, expected, rtol=0, atol=1e-12)

    def test_empty_pairs(self):
        assert decode_links(fake_cache(np.eye(3)), np.empty((0, 2))).values.size == 0

    def test_out_of_range_pair_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            decode_links(fake_cache(np.eye(3)), [[0, 3]])


class TestStableSigmoid:
    def test_extremes_stay_finite(self):
        v = stable_sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(v, [0.0, 0.5, 1.0], atol=1e-12)

    def test_matches_naive_in_safe_range(self):
        z = np.linspace(-30, 30, 101)
        np.testing.assert_allclose(stable_sigmoid(z), 1 / (1 + np.exp(-z)), rtol=1e-14)


class TestCrossEntropy:
    def test_perfect_class_prediction_near_zero(self):
        p = np.array([[1.0 - 1e-12, 1e-12], [1e-12, 1.0 - 1e-12]])
        loss, _ = cross_entropy(Confidence(p, "class-distribution"), [0, 1])
        assert loss == pytest.approx(0.0, abs=1e-11)

    def test_uniform_binary_is_ln_two(self):
        conf = Confidence(np.array([0.5, 0.5, 0.5]), "edge-score")
        loss, _ = cross_entropy(conf, [1.0, 0.0, 1.0])
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_uniform_class_rows_are_ln_two(self):
        conf = Confidence(np.full((4, 2), 0.5), "class-distribution")
        loss, _ = cross_entropy(conf, [0, 1, 0, 1])
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_class_head_matches_scalar_oracle(self):
        rng = np.random.default_rng(11)
        logits = rng.normal(size=(12, 4))
        conf = classify(fake_cache(logits))
        y = rng.integers(0, 4, 12)
        idx = np.array([0, 2, 3, 7, 11])
        loss, grad = cross_entropy(conf, y, idx)
        expected = sum(-np.log(conf.values[i, y[i]]) for i in idx) / len(idx)
        assert loss == pytest.approx(expected, abs=1e-10)
        # rows outside the index set never contribute gradient
        outside = np.setdiff1d(np.arange(12), idx)
        assert np.array_equal(grad[outside], np.zeros((len(outside), 4)))
        for i in idx:
            row = conf.values[i].copy()
            row[y[i]] -= 1.0
            np.testing.assert_allclose(grad[i], row / len(idx), atol=1e-12)

    def test_edge_head_matches_scalar_oracle(self):
        rng = np.random.default_rng(13)
        p = rng.uniform(0.01, 0.99, 20)
        t = rng.integers(0, 2, 20).astype(float)
        idx = np.arange(0, 20, 2)
        loss, grad = cross_entropy(Confidence(p, "edge-score"), t, idx)
        expected = sum(
            -(t[i] * np.log(p[i]) + (1 - t[i]) * np.log(1 - p[i])) for i in idx
        ) / len(idx)
        assert loss == pytest.approx(expected, abs=1e-10)
        np.testing.assert_allclose(grad[idx], (p[idx] - t[idx]) / len(idx), atol=1e-12)
        assert np.array_equal(grad[1::2], np.zeros(10))

    def test_empty_index_set_rejected(self):
        conf = Confidence(np.full((3, 2), 0.5), "class-distribution")
        with pytest.raises(ValueError, match="empty index set"):
            cross_entropy(conf, [0, 1, 0], np.array([], dtype=np.int64))
        with pytest.raises(ValueError, match="empty index set"):
            cross_entropy(Confidence(np.array([0.5]), "edge-score"), [1.0], [])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown confidence kind"):
            cross_entropy(Confidence(np.array([0.5]), "banana"), [1.0])


def node_loss(adj, x, params, y, idx):
    cache = gcn_forward(adj, x, params)
    return cross_entropy(classify(cache), y, idx)


def link_loss(adj, x, params, pairs, t):
    cache = gcn_forward(adj, x, params)
    loss, sg = cross_entropy(decode_links(cache, pairs), t)
    return loss, link_score_grads_to_output(cache, pairs, sg), cache


def fd_grads(loss_fn, params, step=1e-5):
    """Central finite differences over every weight entry."""
    out = GcnGrads(np.zeros_like(params.w1), np.zeros_like(params.w2))
    for w, g in ((params.w1, out.w1), (params.w2, out.w2)):
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            ij = it.multi_index
            orig = w[ij]
            w[ij] = orig + step
            up = loss_fn()
            w[ij] = orig - step
            down = loss_fn()
            w[ij] = orig
            g[ij] = (up - down) / (2 * step)
    return out


class TestBackward:
    def setup_method(self):
        pairs = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [0, 5], [1, 4]])
        self.g6 = SparseGraph.from_pairs(6, pairs)
        self.adj6 = normalize_adjacency(self.g6)
        self.x6 = np.random.default_rng(0).normal(size=(6, 5))

    def test_zero_grad_out_zero_grads(self):
        p = init_gcn_params(5, 4, 3, 0)
        cache = gcn_forward(self.adj6, self.x6, p)
        grads = gcn_backward(cache, self.adj6, np.zeros_like(cache.out))
        assert np.array_equal(grads.w1, np.zeros_like(p.w1))
        assert np.array_equal(grads.w2, np.zeros_like(p.w2))

    def test_linearity_in_grad_out(self):
        p = init_gcn_params(5, 4, 3, 0)
        cache = gcn_forward(self.adj6, self.x6, p)
        go = np.random.default_rng(4).normal(size=cache.out.shape)
        g1 = gcn_backward(cache, self.adj6, go)
        g2 = gcn_backward(cache, self.adj6, 2.0 * go)
        np.testing.assert_allclose(g2.w1, 2.0 * g1.w1, rtol=1e-12)
        np.testing.assert_allclose(g2.w2, 2.0 * g1.w2, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        p = init_gcn_params(5, 4, 3, 0)
        cache = gcn_forward(self.adj6, self.x6, p)
        with pytest.raises(ValueError, match="does not match output shape"):
            gcn_backward(cache, self.adj6, np.zeros((6, 7)))

    def test_node_head_matches_finite_differences(self):
        p = init_gcn_params(5, 4, 3, 0)
        y = np.array([0, 1, 2, 0, 1, 2])
        idx = np.array([0, 1, 3, 5])
        cache = gcn_forward(self.adj6, self.x6, p)
        assert np.abs(cache.z1).min() > 1e-3  # FD step stays clear of ReLU kinks
        _, gout = cross_entropy(classify(cache), y, idx)
        analytic = gcn_backward(cache, self.adj6, gout)
        fd = fd_grads(lambda: node_loss(self.adj6, self.x6, p, y, idx)[0], p)
        np.testing.assert_allclose(analytic.w1, fd.w1, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(analytic.w2, fd.w2, rtol=1e-4, atol=1e-8)

    def test_link_head_matches_finite_differences(self):
        pairs8 = np.array(
            [[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [0, 7], [2, 6], [1, 5]]
        )
        adj = normalize_adjacency(SparseGraph.from_pairs(8, pairs8))
        x = np.random.default_rng(3).normal(size=(8, 5))
        p = init_gcn_params(5, 4, 3, 0)
        train_pairs = np.array([[0, 1], [2, 3], [4, 5], [0, 4], [3, 7], [1, 6]])
        t = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        _, gout, cache = link_loss(adj, x, p, train_pairs, t)
        assert np.abs(cache.z1).min() > 1e-3
        analytic = gcn_backward(cache, adj, gout)
        fd = fd_grads(lambda: link_loss(adj, x, p, train_pairs, t)[0], p)
        np.testing.assert_allclose(analytic.w1, fd.w1, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(analytic.w2, fd.w2, rtol=1e-4, atol=1e-8)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = init_gcn_params(3, 4, 2, 0)
        st = AdamState.fresh(p)
        grads = GcnGrads(np.zeros_like(p.w1), np.zeros_like(p.w2))
        p2, st2 = adam_step(p, grads, st)
        assert np.array_equal(p2.w1, p.w1) and np.array_equal(p2.w2, p.w2)
        assert st2.step == 1

    def test_single_step_hand_formula(self):
        p = init_gcn_params(3, 4, 2, 1)
        st = AdamState.fresh(p, lr=0.05)
        rng = np.random.default_rng(9)
        grads = GcnGrads(rng.normal(size=p.w1.shape), rng.normal(size=p.w2.shape))
        p2, _ = adam_step(p, grads, st)
        # fresh state: m-hat = g and v-hat = g^2, so the step is lr * g / (|g| + eps)
        for old, new, g in ((p.w1, p2.w1, grads.w1), (p.w2, p2.w2, grads.w2)):
            expected = old - st.lr * g / (np.abs(g) + st.eps)
            np.testing.assert_allclose(new, expected, rtol=0, atol=1e-14)

    def test_constant_gradient_approaches_sign_step(self):
        p = init_gcn_params(2, 3, 2, 2)
        st = AdamState.fresh(p, lr=0.01)
        g = GcnGrads(np.full_like(p.w1, 0.7), np.full_like(p.w2, -1.3))
        for _ in range(50):
            prev = p
            p, st = adam_step(p, g, st)
        np.testing.assert_allclose(prev.w1 - p.w1, 0.01 * np.sign(g.w1), rtol=1e-6)
        np.testing.assert_allclose(prev.w2 - p.w2, 0.01 * np.sign(g.w2), rtol=1e-6)

    def test_non_finite_gradient_aborts(self):
        p = init_gcn_params(2, 3, 2, 0)
        st = AdamState.fresh(p)
        g = GcnGrads(np.full_like(p.w1, np.nan), np.zeros_like(p.w2))
        with pytest.raises(NumericalError, match="non-finite gradient"):
            adam_step(p, g, st)


def train_steps(seed, steps, lr=0.01):
    """Tiny fixed-batch training loop; returns the per-step loss list."""
    pairs = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [0, 5], [1, 4]])
    adj = normalize_adjacency(SparseGraph.from_pairs(6, pairs))
    x = np.random.default_rng(0).normal(size=(6, 5))
    y = np.array([0, 0, 0, 1, 1, 1])
    idx = np.arange(6)
    p = init_gcn_params(5, 4, 2, seed)
    st = AdamState.fresh(p, lr=lr)
    losses = []
    for _ in range(steps):
        cache = gcn_forward(adj, x, p)
        loss, gout = cross_entropy(classify(cache), y, idx)
        losses.append(loss)
        p, st = adam_step(p, gcn_backward(cache, adj, gout), st)
    return losses, p


class TestTrainingProperties:
    def test_small_step_never_increases_loss(self):
        for seed in range(20):
            losses, _ = train_steps(seed, 2, lr=1e-3)
            assert losses[1] <= losses[0] + 1e-12, f"seed {seed}"

    def test_hundred_steps_bit_deterministic(self):
        a, pa = train_steps(7, 100)
        b, pb = train_steps(7, 100)
        assert a == b
        assert np.array_equal(pa.w1, pb.w1) and np.array_equal(pa.w2, pb.w2)

    def test_loss_drops_substantially(self):
        losses, _ = train_steps(7, 200)
        assert losses[-1] < 0.25 * losses[0]


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = GcnModel("node", init_gcn_params(5, 4, 3, 123))
        path = str(tmp_path / "model.json")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.task == "node"
        assert loaded.params.init_seed == 123
        assert np.array_equal(loaded.params.w1, model.params.w1)
        assert np.array_equal(loaded.params.w2, model.params.w2)

    def test_link_round_trip(self, tmp_path):
        model = GcnModel("link", init_gcn_params(3, 4, 2, 9))
        path = str(tmp_path / "model.json")
        save_checkpoint(model, path)
        assert load_checkpoint(path).task == "link"

    def test_unsupported_version_rejected(self, tmp_path):
        import json

        path = str(tmp_path / "model.json")
        model = GcnModel("node", init_gcn_params(2, 2, 2, 0))
        save_checkpoint(model, path)
        payload = json.load(open(path))
        payload["format_version"] = 99
        json.dump(payload, open(path, "w"))
        with pytest.raises(DataError, match="unsupported checkpoint version"):
            load_checkpoint(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = str(tmp_path / "model.json")
        with open(path, "w") as fh:
            fh.write("{not json")
        with pytest.raises(DataError, match="invalid checkpoint JSON"):
            load_checkpoint(path)

    def test_unknown_task_rejected(self, tmp_path):
        import json

        path = str(tmp_path / "model.json")
        save_checkpoint(GcnModel("node", init_gcn_params(2, 2, 2, 0)), path)
        payload = json.load(open(path))
        payload["task"] = "audio"
        json.dump(payload, open(path, "w"))
        with pytest.raises(DataError, match="unknown task tag"):
            load_checkpoint(path)

    def test_missing_field_rejected(self, tmp_path):
        import json

        path = str(tmp_path / "model.json")
        save_checkpoint(GcnModel("node", init_gcn_params(2, 2, 2, 0)), path)
        payload = json.load(open(path))
        del payload["w1"]
        json.dump(payload, open(path, "w"))
        with pytest.raises(DataError, match="malformed checkpoint"):
            load_checkpoint(path)


class TestPredictConfidence:
    def test_node_rows_for_requested_targets(self):
        g = ring_graph(6)
        x = np.random.default_rng(5).normal(size=(6, 3))
        model = GcnModel("node", init_gcn_params(3, 4, 2, 0))
        conf = model.predict_confidence(g, x, np.array([1, 4]))
        full = classify(model.forward(g, x)).values
        assert np.array_equal(conf, full[[1, 4]])

    def test_link_scores_for_requested_pairs(self):
        g = ring_graph(6)
        x = np.random.default_rng(5).normal(size=(6, 3))
        model = GcnModel("link", init_gcn_params(3, 4, 2, 0))
        conf = model.predict_confidence(g, x, np.array([[0, 2], [1, 5]]))
        assert conf.shape == (2,)
        assert (conf >= 0).all() and (conf <= 1).all()
