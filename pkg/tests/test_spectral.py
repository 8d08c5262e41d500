import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphcontrol.graphs import build_graph
from graphcontrol.spectral import (
    embedding_from_laplacian,
    laplacian_from_dense,
    load_embedding,
    normalized_laplacian,
    positional_embedding,
    save_embedding,
)

from conftest import random_graph


def jacobi_eigh(a, sweeps=100, tol=1e-13):
    """Independent dense symmetric eigensolver: cyclic Jacobi rotations.

    Used as the oracle against the production LAPACK path.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt((a**2).sum() - (np.diag(a) ** 2).sum())
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:  # theta**2 would overflow; t ~ 1/(2 theta)
                    t = 1.0 / (2.0 * theta)
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1.0))
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def path_graph(n):
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    return build_graph(n, edges)


class TestNormalizedLaplacian:
    def test_two_node_edge(self):
        g = build_graph(2, np.array([[0, 1]]))
        assert np.array_equal(normalized_laplacian(g), [[1.0, -1.0], [-1.0, 1.0]])

    def test_single_isolated_node(self):
        g = build_graph(1, np.empty((0, 2)))
        assert np.array_equal(normalized_laplacian(g), [[1.0]])

    def test_matches_double_loop_oracle(self, rng):
        # L_ij = 1{i=j} - A_ij / sqrt(d_i d_j); zero-degree convention gives
        # an identity row for isolated nodes
        g = random_graph(rng, 8, edge_prob=0.4)
        lap = normalized_laplacian(g)
        adj = np.zeros((8, 8))
        for u in range(8):
            adj[u, g.neighbors(u)] = 1.0
        deg = adj.sum(axis=1)
        expected = np.eye(8)
        for i in range(8):
            for j in range(8):
                if deg[i] > 0 and deg[j] > 0 and adj[i, j]:
                    expected[i, j] -= adj[i, j] / np.sqrt(deg[i] * deg[j])
        assert np.allclose(lap, expected, atol=1e-12, rtol=0)


class TestPositionalEmbedding:
    def test_path3_spectrum_and_ground_vector(self):
        pe = positional_embedding(path_graph(3), k=3)
        assert np.allclose(sorted(pe.eigenvalues), [0.0, 1.0, 2.0], atol=1e-10)
        ground = pe.matrix[:, 0]
        expected = np.array([1.0, np.sqrt(2.0), 1.0])
        expected /= np.linalg.norm(expected)
        assert np.allclose(ground, expected, atol=1e-10)

    def test_padding_when_small(self):
        pe = positional_embedding(path_graph(3), k=32)
        assert pe.matrix.shape == (3, 32)
        assert np.array_equal(pe.matrix[:, 3:], np.zeros((3, 29)))
        assert pe.eigenvalues.shape == (3,)

    def test_residuals_on_random_graphs(self, rng):
        for _ in range(5):
            g = random_graph(rng, 20, edge_prob=0.2)
            lap = normalized_laplacian(g)
            pe = positional_embedding(g, k=20)
            for j in range(20):
                r = lap @ pe.matrix[:, j] - pe.eigenvalues[j] * pe.matrix[:, j]
                assert np.abs(r).max() <= 1e-8

    def test_matches_jacobi_oracle(self, rng):
        g = random_graph(rng, 12, edge_prob=0.3)
        lap = normalized_laplacian(g)
        w_oracle, _ = jacobi_eigh(lap)
        pe = positional_embedding(g, k=12)
        assert np.allclose(pe.eigenvalues, w_oracle, atol=1e-9)

    def test_eigenvalues_in_bound(self, rng):
        for _ in range(10):
            g = random_graph(rng, 15, edge_prob=0.25)
            pe = positional_embedding(g, k=15)
            assert pe.eigenvalues.min() >= -1e-10
            assert pe.eigenvalues.max() <= 2.0 + 1e-10

    def test_ground_vector_proportional_to_sqrt_degree(self, rng):
        # connected graph: lambda_0 = 0 with eigenvector ~ D^{1/2} 1
        g = path_graph(9)
        pe = positional_embedding(g, k=9)
        assert abs(pe.eigenvalues[0]) <= 1e-8
        expected = np.sqrt(g.degrees.astype(float))
        expected /= np.linalg.norm(expected)
        assert np.allclose(pe.matrix[:, 0], expected, atol=1e-8)

    def test_bitwise_pure_function(self, rng):
        g = random_graph(rng, 17, edge_prob=0.3)
        a = positional_embedding(g, k=10)
        b = positional_embedding(g, k=10)
        assert np.array_equal(a.matrix, b.matrix)
        assert np.array_equal(a.eigenvalues, b.eigenvalues)

    def test_sign_convention(self, rng):
        for _ in range(10):
            g = random_graph(rng, 11, edge_prob=0.35)
            pe = positional_embedding(g, k=11)
            for j in range(11):
                col = pe.matrix[:, j]
                assert col[np.argmax(np.abs(col))] >= 0

    @given(n=st.integers(2, 24))
    @settings(max_examples=20)
    def test_column_norms_and_orthogonality(self, n):
        g = path_graph(n)
        pe = positional_embedding(g, k=32)
        m = min(n, 32)
        gram = pe.matrix[:, :m].T @ pe.matrix[:, :m]
        assert np.allclose(gram, np.eye(m), atol=1e-8)


class TestWeightedLaplacian:
    def test_self_loop_only_gives_zero(self):
        lap = laplacian_from_dense(np.eye(3))
        assert np.allclose(lap, np.zeros((3, 3)), atol=0)

    def test_two_identical_nodes_with_self_loops(self):
        pe = embedding_from_laplacian(laplacian_from_dense(np.ones((2, 2))), k=2)
        assert np.allclose(sorted(pe.eigenvalues), [0.0, 1.0], atol=1e-12)


class TestEmbeddingCodec:
    def test_round_trip(self, tmp_path, rng):
        mat = rng.normal(size=(7, 32))
        path = tmp_path / "emb.bin"
        save_embedding(path, mat)
        assert path.stat().st_size == 16 + 7 * 32 * 8
        back = load_embedding(path)
        assert np.array_equal(back, mat)
