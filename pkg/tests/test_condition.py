import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphcontrol.condition import (
    condition_embedding,
    cosine_kernel,
    deepwalk_embed,
    discretize,
    soft_condition_embedding,
)
from graphcontrol.errors import DataError
from graphcontrol.graphs import build_graph
from graphcontrol.spectral import positional_embedding

from conftest import random_graph


class TestCosineKernel:
    def test_parallel_rows(self):
        k = cosine_kernel(np.array([[1.0, 0.0], [2.0, 0.0]]))
        assert np.allclose(k.matrix, np.ones((2, 2)), atol=1e-15)

    def test_orthogonal_rows(self):
        k = cosine_kernel(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert k.matrix[0, 1] == 0.0

    def test_matches_double_loop_oracle(self, rng):
        x = rng.normal(size=(5, 3))
        k = cosine_kernel(x).matrix
        for i in range(5):
            for j in range(5):
                expected = float(x[i] @ x[j] / (np.linalg.norm(x[i]) * np.linalg.norm(x[j])))
                assert abs(k[i, j] - min(1.0, max(-1.0, expected))) <= 1e-12

    def test_zero_rows_get_zero_kernel(self):
        x = np.array([[0.0, 0.0], [1.0, 2.0]])
        k = cosine_kernel(x).matrix
        assert k[0, 0] == 0.0
        assert k[0, 1] == 0.0
        assert k[1, 1] == 1.0

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            cosine_kernel(np.array([[1.0, np.nan]]))

    @given(st.integers(0, 1000))
    @settings(max_examples=30)
    def test_symmetric_bounded(self, seed):
        x = np.random.Generator(np.random.PCG64(seed)).normal(size=(6, 4))
        k = cosine_kernel(x).matrix
        assert np.array_equal(k, k.T)
        assert k.min() >= -1.0 and k.max() <= 1.0


class TestDiscretize:
    def test_paper_threshold_example(self):
        k = cosine_kernel(np.array([[1.0, 0.0], [2.0, 0.0]]))
        k.matrix.flags.writeable = True
        k.matrix[0, 1] = k.matrix[1, 0] = 0.5
        fa = discretize(k, 0.17)
        assert np.array_equal(fa.dense(), np.ones((2, 2)))

    def test_threshold_one_gives_identity(self, rng):
        x = rng.normal(size=(4, 3))
        fa = discretize(cosine_kernel(x), 1.0)
        assert np.array_equal(fa.dense(), np.eye(4))

    def test_strict_inequality_at_threshold(self):
        k = cosine_kernel(np.array([[1.0, 0.0], [1.0, 0.0]]))
        fa = discretize(k, 1.0)  # K_01 == 1.0 -> not > v -> 0
        assert fa.dense()[0, 1] == 0.0

    def test_elementwise_oracle(self, rng):
        x = rng.normal(size=(8, 5))
        k = cosine_kernel(x)
        fa = discretize(k, 0.2).dense()
        expected = (k.matrix > 0.2).astype(float)
        np.fill_diagonal(expected, 1.0)
        assert np.array_equal(fa, expected)

    @given(st.integers(0, 500))
    @settings(max_examples=25)
    def test_scale_invariance(self, seed):
        g = np.random.Generator(np.random.PCG64(seed))
        x = g.normal(size=(6, 4))
        scaled = x * g.uniform(0.1, 10.0, size=(6, 1))
        a = discretize(cosine_kernel(x), 0.3).dense()
        b = discretize(cosine_kernel(scaled), 0.3).dense()
        assert np.array_equal(a, b)

    @given(v1=st.floats(-0.5, 0.9), v2=st.floats(-0.5, 0.9))
    @settings(max_examples=30)
    def test_monotone_in_threshold(self, v1, v2):
        if v1 > v2:
            v1, v2 = v2, v1
        x = np.random.Generator(np.random.PCG64(3)).normal(size=(7, 4))
        k = cosine_kernel(x)
        low = discretize(k, v1).dense()
        high = discretize(k, v2).dense()
        off = ~np.eye(7, dtype=bool)
        assert np.all(high[off] <= low[off])


class TestConditionEmbedding:
    def test_identity_adjacency_zero_spectrum(self, rng):
        fa = discretize(cosine_kernel(rng.normal(size=(5, 3))), 1.0)
        ce = condition_embedding(fa, k=5)
        assert np.allclose(ce.eigenvalues, np.zeros(5), atol=1e-12)

    def test_two_identical_nodes_spectrum(self):
        fa = discretize(cosine_kernel(np.array([[1.0, 0.0], [2.0, 0.0]])), 0.5)
        ce = condition_embedding(fa, k=2)
        assert np.allclose(sorted(ce.eigenvalues), [0.0, 1.0], atol=1e-12)

    def test_shape_padding(self, rng):
        fa = discretize(cosine_kernel(rng.normal(size=(3, 4))), 0.0)
        ce = condition_embedding(fa, k=32)
        assert ce.matrix.shape == (3, 32)

    def test_shares_positional_embedding_code_path(self, rng):
        fa = discretize(cosine_kernel(rng.normal(size=(9, 4))), 0.1)
        ce = condition_embedding(fa, k=9)
        pe = positional_embedding(fa.graph, k=9)
        assert np.array_equal(ce.matrix, pe.matrix)
        assert np.array_equal(ce.eigenvalues, pe.eigenvalues)

    def test_soft_condition_clamps_and_embeds(self, rng):
        x = rng.normal(size=(6, 4))
        ce = soft_condition_embedding(cosine_kernel(x), k=6)
        assert ce.matrix.shape == (6, 6)
        assert ce.source_threshold is None
        assert np.isfinite(ce.matrix).all()


class TestDeepwalkEmbed:
    def test_two_node_edge_high_cosine(self):
        g = build_graph(2, np.array([[0, 1]]))
        emb = deepwalk_embed(g, dim=8, walks_per_node=8, walk_length=20,
                             window=4, negatives=3, epochs=4, seed=0)
        cos = float(emb[0] @ emb[1])
        assert cos > 0.9

    def test_two_cliques_cluster(self):
        edges = [(i, j) for i in range(6) for j in range(i + 1, 6)]
        edges += [(i, j) for i in range(6, 12) for j in range(i + 1, 12)]
        edges.append((0, 6))  # bridge keeps it one component
        g = build_graph(12, np.array(edges))
        emb = deepwalk_embed(g, dim=16, walks_per_node=10, walk_length=20,
                             window=3, negatives=4, epochs=4, seed=1)
        sims = emb @ emb.T
        intra, inter = [], []
        for i in range(12):
            for j in range(i + 1, 12):
                (intra if (i < 6) == (j < 6) else inter).append(sims[i, j])
        assert np.mean(intra) > np.mean(inter)

    def test_unit_norm_rows(self, rng):
        g = random_graph(rng, 20, edge_prob=0.2)
        emb = deepwalk_embed(g, dim=12, walks_per_node=4, walk_length=10,
                             window=3, negatives=2, epochs=1, seed=2)
        assert emb.shape == (20, 12)
        assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-9)

    def test_deterministic(self, rng):
        g = random_graph(rng, 15, edge_prob=0.3)
        kwargs = dict(dim=8, walks_per_node=3, walk_length=10, window=2,
                      negatives=2, epochs=1, seed=5)
        assert np.array_equal(deepwalk_embed(g, **kwargs), deepwalk_embed(g, **kwargs))

    def test_no_edges_rejected(self):
        g = build_graph(4, np.empty((0, 2)))
        with pytest.raises(DataError, match="at least one edge"):
            deepwalk_embed(g, dim=4)
