import numpy as np
import pytest

import flowcast.tensor as T
from flowcast import graph as G
from flowcast.config import ModelConfig


def rand_f4(rng, b=2, c=8, n=5, l=2, dtype=np.float32):
    return T.Tensor(rng.normal(size=(b, c, n, l)).astype(dtype))


def build_edge_graph(attention_op="max", representative="last", c=8, seed=0):
    cfg = ModelConfig(channels=(c, c, c, c), head_hidden=c,
                      attention_op=attention_op, representative=representative)
    store = {}
    return G.EdgeGraph(cfg, np.random.default_rng(seed), store), store


class TestRepresentative:
    @pytest.mark.parametrize("position,index", [("last", 1), ("middle", 1), ("first", 0)])
    def test_position_indexing_l2(self, position, index):
        x = T.Tensor(np.arange(12, dtype=np.float32).reshape(1, 2, 3, 2))
        out = G.representative(x, position)
        assert np.array_equal(out.data, x.data[..., index])

    def test_middle_of_longer_axis(self):
        x = T.Tensor(np.random.default_rng(0).normal(size=(1, 2, 3, 5)).astype(np.float32))
        assert np.array_equal(G.representative(x, "middle").data, x.data[..., 2])


class TestReduceChannels:
    def test_quarter_channels(self):
        eg, _ = build_edge_graph(c=64)
        f4 = T.Tensor(np.zeros((1, 64, 3, 2), dtype=np.float32))
        assert eg.reduce_channels(f4).shape == (1, 16, 3, 2)

    def test_indivisible_channels_rejected(self):
        eg, _ = build_edge_graph(c=8)
        with pytest.raises(T.ShapeError):
            eg.reduce_channels(T.Tensor(np.zeros((1, 6, 3, 2), dtype=np.float32)))

    def test_permuted_identity_selects_channels(self):
        eg, _ = build_edge_graph(c=16)
        eg.reduce_w.data[:] = 0
        eg.reduce_b.data[:] = 0
        picks = [5, 1, 7, 2]  # rows of a permuted identity
        for row, col in enumerate(picks):
            eg.reduce_w.data[row, col] = 1.0
        f4 = T.Tensor(np.random.default_rng(1).normal(size=(2, 16, 4, 2)).astype(np.float32))
        out = eg.reduce_channels(f4)
        assert np.array_equal(out.data, f4.data[:, picks])

    def test_zero_input_yields_bias(self):
        eg, _ = build_edge_graph(c=8)
        eg.reduce_b.data[:] = 3.0
        out = eg.reduce_channels(T.Tensor(np.zeros((1, 8, 3, 2), dtype=np.float32)))
        assert np.allclose(out.data, 3.0)


class TestCorrelations:
    def test_self_similarity_diagonal(self):
        eg, _ = build_edge_graph()
        rng = np.random.default_rng(2)
        f4 = rand_f4(rng)
        f_c = eg.reduce_channels(f4)
        f_l = G.representative(f_c, "last")
        s = G.correlate(f_l, f_c)
        l = f_c.shape[-1]
        diag = s.data[:, np.arange(5), np.arange(5), l - 1]
        assert np.allclose(diag, 1.0, atol=1e-5)

    def test_bounds(self):
        eg, _ = build_edge_graph()
        f4 = rand_f4(np.random.default_rng(3))
        f_c = eg.reduce_channels(f4)
        s = G.correlate(G.representative(f_c, "last"), f_c)
        assert s.data.min() >= -1.0 and s.data.max() <= 1.0

    def test_orthogonal_nodes_uncorrelated(self):
        # two nodes with orthogonal constant features
        f_c = np.zeros((1, 2, 2, 2), dtype=np.float32)
        f_c[0, 0, 0] = 1.0   # node 0 lives on channel 0
        f_c[0, 1, 1] = 1.0   # node 1 lives on channel 1
        rep = T.Tensor(f_c[..., -1])
        s = G.correlate(rep, T.Tensor(f_c))
        assert np.allclose(s.data[0, 0, 1], 0.0)
        assert np.allclose(s.data[0, 1, 0], 0.0)


class TestRelationalFeatures:
    def test_all_ones_correlations_sum_time(self):
        rng = np.random.default_rng(4)
        f4 = rand_f4(rng, b=1, c=3, n=4, l=2)
        s = T.Tensor(np.ones((1, 4, 4, 2), dtype=np.float32))
        r = G.relational_features(s, f4)
        expected = f4.data.sum(axis=3)  # [1, c, n]
        for k in range(4):
            assert np.allclose(r.data[0, :, :, k], expected[0], atol=1e-6)

    def test_zero_correlations_zero_features(self):
        f4 = rand_f4(np.random.default_rng(5), b=1, c=3, n=4, l=2)
        s = T.Tensor(np.zeros((1, 4, 4, 2), dtype=np.float32))
        assert np.allclose(G.relational_features(s, f4).data, 0.0)

    def test_single_step_is_weighted_slice(self):
        rng = np.random.default_rng(6)
        f4 = rand_f4(rng, b=1, c=3, n=4, l=1)
        s = T.Tensor(rng.normal(size=(1, 4, 4, 1)).astype(np.float32))
        r = G.relational_features(s, f4)
        for k in range(4):
            expected = s.data[0, k, :, 0][None, :] * f4.data[0, :, :, 0]
            assert np.allclose(r.data[0, :, :, k], expected, atol=1e-6)

    def test_time_extent_mismatch_rejected(self):
        f4 = rand_f4(np.random.default_rng(7), l=2)
        s = T.Tensor(np.zeros((2, 5, 5, 3), dtype=np.float32))
        with pytest.raises(T.ShapeError):
            G.relational_features(s, f4)


class TestSqueezeAttention:
    def rel_with_channel_max(self, value):
        # single channel so the channel max is exactly `value`; float64 is the
        # verification precision for analytic values
        r = np.full((1, 1, 1, 1), value, dtype=np.float64)
        return T.Tensor(r)

    @pytest.mark.parametrize("value,a,ar", [
        (0.0, 0.0, 0.0),
        (-2.0, 0.0, np.tanh(2.0)),
        (1.0, np.tanh(1.0), 0.0),
    ])
    def test_analytic_entries(self, value, a, ar):
        rel = self.rel_with_channel_max(value)
        assert G.squeeze_attention(rel, "max").data.item() == pytest.approx(a, abs=1e-9)
        assert G.squeeze_attention(rel, "max", reversed=True).data.item() == pytest.approx(ar, abs=1e-9)

    def test_avg_reduces_mean(self):
        r = np.zeros((1, 2, 1, 1), dtype=np.float64)
        r[0, 0] = 3.0
        r[0, 1] = -1.0
        out = G.squeeze_attention(T.Tensor(r), "avg")
        assert out.data.item() == pytest.approx(np.tanh(1.0), abs=1e-9)

    def test_max_learned_identity_at_init(self):
        eg, _ = build_edge_graph(attention_op="max_learned")
        rel = T.Tensor(np.random.default_rng(8).normal(size=(2, 8, 4, 4)).astype(np.float32))
        plain = G.squeeze_attention(rel, "max")
        learned = G.squeeze_attention(rel, "max_learned",
                                      affine_w=eg.affine_w, affine_b=eg.affine_b)
        assert np.allclose(plain.data, learned.data)

    def test_unknown_op_rejected(self):
        with pytest.raises(ValueError):
            G.squeeze_attention(self.rel_with_channel_max(0.0), "softmax")

    def test_scalar_case_uses_item(self):
        rel = self.rel_with_channel_max(3.0)
        out = G.squeeze_attention(rel, "max")
        assert out.shape == (1, 1, 1)


class TestGraphConv:
    def test_one_hot_row_selects_source(self):
        rng = np.random.default_rng(9)
        c, n = 4, 5
        rel = T.Tensor(rng.normal(size=(1, c, n, n)).astype(np.float32))
        adj = np.zeros((1, n, n), dtype=np.float32)
        j0 = 3
        adj[0, :, j0] = 1.0  # every target attends only to source j0
        w = T.Tensor(np.eye(c, dtype=np.float32))
        b = T.Tensor(np.zeros(c, dtype=np.float32))
        out = G.gcn(rel, T.Tensor(adj), w, b)
        for k in range(n):
            assert np.allclose(out.data[0, :, k], rel.data[0, :, j0, k], atol=1e-6)

    def test_zero_adjacency_yields_bias(self):
        rng = np.random.default_rng(10)
        rel = T.Tensor(rng.normal(size=(1, 4, 5, 5)).astype(np.float32))
        adj = T.Tensor(np.zeros((1, 5, 5), dtype=np.float32))
        w = T.Tensor(rng.normal(size=(4, 4)).astype(np.float32))
        b = T.Tensor(np.arange(4, dtype=np.float32))
        out = G.gcn(rel, adj, w, b)
        assert np.allclose(out.data, np.arange(4, dtype=np.float32).reshape(1, 4, 1))

    def test_scalar_case(self):
        rel = T.Tensor(np.full((1, 1, 1, 1), 3.0, dtype=np.float32))
        adj = T.Tensor(np.full((1, 1, 1), 0.5, dtype=np.float32))
        w = T.Tensor(np.full((1, 1), 2.0, dtype=np.float32))
        b = T.Tensor(np.zeros(1, dtype=np.float32))
        assert G.gcn(rel, adj, w, b).data.item() == pytest.approx(3.0)


class TestAdjacencyInvariants:
    @pytest.mark.parametrize("attention_op", ["max", "avg", "max_learned"])
    def test_disjoint_and_bounded(self, attention_op):
        eg, _ = build_edge_graph(attention_op=attention_op)
        rng = np.random.default_rng(11)
        for _ in range(20):
            state = eg.forward(rand_f4(rng))
            a, ar = state.adj.data, state.adj_reversed.data
            assert np.all(a * ar == 0.0)
            assert a.min() >= 0.0 and a.max() < 1.0
            assert ar.min() >= 0.0 and ar.max() < 1.0

    def test_permutation_equivariance(self):
        eg, _ = build_edge_graph()
        rng = np.random.default_rng(12)
        f4 = rand_f4(rng, b=1, n=6)
        perm = rng.permutation(6)
        base = eg.forward(f4)
        permuted = eg.forward(T.Tensor(f4.data[:, :, perm, :]))
        atol = 1e-6
        assert np.allclose(base.s.data[:, perm][:, :, perm], permuted.s.data, atol=atol)
        assert np.allclose(base.adj.data[:, perm][:, :, perm], permuted.adj.data, atol=atol)
        assert np.allclose(base.f_g.data[:, :, perm], permuted.f_g.data, atol=1e-5)

    def test_batched_matches_unbatched_bitwise(self):
        eg, _ = build_edge_graph()
        rng = np.random.default_rng(13)
        f4 = rand_f4(rng, b=4)
        batch = eg.forward(f4)
        for i in range(4):
            single = eg.forward(T.Tensor(f4.data[i:i + 1]))
            for attr in ("s", "rel", "adj", "adj_reversed", "f_g", "f_gr"):
                got = getattr(batch, attr).data[i]
                alone = getattr(single, attr).data[0]
                assert np.array_equal(got, alone), f"{attr} differs between batch sizes"
