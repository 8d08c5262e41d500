"""Condition generation from node attributes.

Attributes are turned into the structural input format in three steps:
cosine kernel over attribute rows, threshold discretization into a
binary feature adjacency (unit diagonal forced), and the usual
positional embedding of that adjacency. Non-attributed graphs first get
synthetic attributes from uniform-walk skip-gram embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graphs import Graph
from .spectral import (
    DEFAULT_K,
    PositionalEmbedding,
    embedding_from_laplacian,
    laplacian_from_dense,
    positional_embedding,
)


@dataclass(frozen=True)
class KernelMatrix:
    """Dense symmetric cosine-similarity matrix, entries in [-1, 1].

    Rows with zero attribute norm have kernel value 0 against everything
    (including themselves).
    """

    matrix: np.ndarray


@dataclass(frozen=True)
class FeatureAdjacency:
    """Binary symmetric adjacency from thresholding a kernel matrix.

    Stored as a Graph so the downstream Laplacian/eigenvector pipeline
    is byte-for-byte the structural one. Diagonal is all ones.
    """

    graph: Graph
    threshold: float

    def dense(self) -> np.ndarray:
        from .spectral import dense_adjacency

        return dense_adjacency(self.graph)


@dataclass(frozen=True)
class ConditionEmbedding:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    source_threshold: float | None


def cosine_kernel(attributes: np.ndarray) -> KernelMatrix:
    x = np.asarray(attributes, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DataError(f"attributes must be a non-empty 2-D matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("non-finite attribute values")
    norms = np.linalg.norm(x, axis=1)
    nonzero = norms > 0
    xn = np.zeros_like(x)
    xn[nonzero] = x[nonzero] / norms[nonzero, None]
    k = xn @ xn.T
    k = (k + k.T) / 2.0
    np.clip(k, -1.0, 1.0, out=k)
    np.fill_diagonal(k, np.where(nonzero, 1.0, 0.0))
    return KernelMatrix(matrix=k)


def discretize(kernel: KernelMatrix, v: float) -> FeatureAdjacency:
    """A'_ij = 1 iff K_ij > v (strict), then the diagonal is forced to 1."""
    if not np.isfinite(v):
        raise DataError(f"threshold must be finite, got {v}")
    k = kernel.matrix
    adj = k > v
    np.fill_diagonal(adj, True)
    n = adj.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(adj.sum(axis=1))
    indices = np.nonzero(adj)[1].astype(np.int64)
    graph = Graph(num_nodes=n, indptr=indptr, indices=indices)
    return FeatureAdjacency(graph=graph, threshold=float(v))


def condition_embedding(feature_adjacency: FeatureAdjacency, k: int = DEFAULT_K) -> ConditionEmbedding:
    pe = positional_embedding(feature_adjacency.graph, k=k)
    return ConditionEmbedding(
        matrix=pe.matrix,
        eigenvalues=pe.eigenvalues,
        source_threshold=feature_adjacency.threshold,
    )


def soft_condition_embedding(kernel: KernelMatrix, k: int = DEFAULT_K) -> ConditionEmbedding:
    """Embedding of the soft kernel itself (ablation path).

    Negative entries are zeroed and the clamped matrix feeds the weighted
    normalized Laplacian directly, skipping discretization.
    """
    w = np.clip(kernel.matrix, 0.0, 1.0)
    pe = embedding_from_laplacian(laplacian_from_dense(w), k=k)
    return ConditionEmbedding(matrix=pe.matrix, eigenvalues=pe.eigenvalues, source_threshold=None)


def attribute_condition(
    attributes: np.ndarray,
    v: float,
    k: int = DEFAULT_K,
    soft: bool = False,
) -> ConditionEmbedding:
    """Kernel -> (discretize ->) embedding in one call."""
    kern = cosine_kernel(attributes)
    if soft:
        return soft_condition_embedding(kern, k=k)
    return condition_embedding(discretize(kern, v), k=k)


# ---------------------------------------------------------------------------
# skip-gram attribute synthesis for non-attributed graphs


def _uniform_walks(
    graph: Graph, walks_per_node: int, walk_length: int, rng: np.random.Generator
) -> list[np.ndarray]:
    walks = []
    for _ in range(walks_per_node):
        for start in rng.permutation(graph.num_nodes):
            walk = np.empty(walk_length, dtype=np.int64)
            walk[0] = start
            cur = int(start)
            length = 1
            for t in range(1, walk_length):
                nbrs = graph.neighbors(cur)
                if nbrs.size == 0:
                    break
                cur = int(nbrs[rng.integers(nbrs.size)])
                walk[t] = cur
                length = t + 1
            walks.append(walk[:length])
    return walks


def _walk_pairs(walks: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for walk in walks:
        for off in range(1, window + 1):
            if walk.size <= off:
                continue
            a, b = walk[:-off], walk[off:]
            centers.append(a)
            contexts.append(b)
            centers.append(b)
            contexts.append(a)
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def deepwalk_embed(
    graph: Graph,
    dim: int = 64,
    walks_per_node: int = 10,
    walk_length: int = 40,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 3,
    seed: int = 0,
    learning_rate: float = 0.025,
) -> np.ndarray:
    """Skip-gram-with-negative-sampling node embeddings from uniform walks.

    Single-threaded and fully deterministic given the seed. Returns an
    N x dim matrix with unit-norm rows.
    """
    if dim < 2:
        raise DataError("embedding dim must be >= 2")
    if graph.num_stored_edges == 0:
        raise DataError("deepwalk_embed requires a graph with at least one edge")

    rng = np.random.Generator(np.random.PCG64(seed))
    walks = _uniform_walks(graph, walks_per_node, walk_length, rng)
    centers, contexts = _walk_pairs(walks, window)
    n = graph.num_nodes

    counts = np.bincount(np.concatenate(walks), minlength=n).astype(np.float64)
    weights = counts**0.75
    if weights.sum() == 0:
        raise DataError("no walk visits recorded")
    cdf = np.cumsum(weights / weights.sum())

    w_in = (rng.random((n, dim)) - 0.5) / dim
    w_out = np.zeros((n, dim))

    batch = 2048
    total_steps = max(1, epochs * ((centers.size + batch - 1) // batch))
    step = 0
    lr_min = 1e-4
    for _ in range(epochs):
        order = rng.permutation(centers.size)
        for lo in range(0, centers.size, batch):
            idx = order[lo : lo + batch]
            c, o = centers[idx], contexts[idx]
            neg = np.searchsorted(cdf, rng.random((idx.size, negatives)))

            lr = learning_rate + (lr_min - learning_rate) * (step / total_steps)
            step += 1

            vc = w_in[c]
            uo = w_out[o]
            un = w_out[neg]
            # overflow-safe sigmoid via tanh
            g_pos = 0.5 * (1.0 + np.tanh(0.5 * np.einsum("bd,bd->b", vc, uo))) - 1.0
            g_neg = 0.5 * (1.0 + np.tanh(0.5 * np.einsum("bkd,bd->bk", un, vc)))

            grad_vc = g_pos[:, None] * uo + np.einsum("bk,bkd->bd", g_neg, un)
            np.add.at(w_in, c, -lr * grad_vc)
            np.add.at(w_out, o, -lr * (g_pos[:, None] * vc))
            np.add.at(
                w_out,
                neg.ravel(),
                (-lr * (g_neg[..., None] * vc[:, None, :])).reshape(-1, dim),
            )

    norms = np.linalg.norm(w_in, axis=1)
    norms[norms == 0] = 1.0
    return w_in / norms[:, None]
