"""Normalized Laplacian and eigenvector positional embeddings.

Node inputs for the encoder are the eigenvectors of the k smallest
eigenvalues of the symmetric normalized Laplacian, sign-normalized and
zero-padded to a fixed width. Dense symmetric eigendecomposition is used
throughout; callers operate on sampled subgraphs (a few hundred nodes at
most), where O(N^3) is cheap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .graphs import Graph

DEFAULT_K = 32

_EMB_MAGIC = b"GCEMB\x00\x00\x01"  # 8 bytes; header is exactly 16 bytes


@dataclass(frozen=True)
class PositionalEmbedding:
    """N x k eigenvector matrix plus the min(k, N) smallest eigenvalues.

    Columns beyond N (when N < k) are exact zero padding. Within each
    column the entry of largest magnitude is non-negative, which makes
    the embedding a pure function of the input matrix.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray


def dense_adjacency(graph: Graph) -> np.ndarray:
    a = np.zeros((graph.num_nodes, graph.num_nodes), dtype=np.float64)
    for u in range(graph.num_nodes):
        a[u, graph.neighbors(u)] = 1.0
    return a


def laplacian_from_dense(adj: np.ndarray) -> np.ndarray:
    """I - D^{-1/2} A D^{-1/2} for a dense symmetric weight matrix.

    Zero-degree rows use the convention D^{-1/2} = 0, which leaves a
    unit diagonal entry and zero off-diagonals for that node.
    """
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DataError(f"adjacency must be square, got {adj.shape}")
    deg = adj.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    lap = -(inv_sqrt[:, None] * adj) * inv_sqrt[None, :]
    np.fill_diagonal(lap, 1.0 + np.diag(lap))
    return lap


def normalized_laplacian(graph: Graph) -> np.ndarray:
    """Dense symmetric normalized Laplacian of an undirected graph."""
    return laplacian_from_dense(dense_adjacency(graph))


def _sign_normalize(col: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(col)))  # argmax breaks ties at the lowest index
    if col[i] < 0:
        return -col
    return col


def embedding_from_laplacian(lap: np.ndarray, k: int = DEFAULT_K) -> PositionalEmbedding:
    """Eigenvectors of the k smallest eigenvalues, eigenvalue-ascending.

    Sign-normalized per column; ties in eigenvalue (within 1e-12) are
    ordered by lexicographic comparison of the sign-normalized columns.
    Zero-padded on the right when the matrix is smaller than k.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    n = lap.shape[0]
    try:
        eigvals, eigvecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as e:
        raise NumericalError(
            f"eigendecomposition failed on {n}x{n} matrix "
            f"(fro-norm {np.linalg.norm(lap):.3e}): {e}"
        ) from None

    m = min(k, n)
    eigvals = eigvals[:m].copy()
    cols = [_sign_normalize(eigvecs[:, j].copy()) for j in range(m)]

    # pin ordering inside degenerate eigenspaces
    order = list(range(m))
    start = 0
    while start < m:
        stop = start + 1
        while stop < m and eigvals[stop] - eigvals[start] <= 1e-12:
            stop += 1
        if stop - start > 1:
            order[start:stop] = sorted(order[start:stop], key=lambda j: tuple(cols[j]))
        start = stop

    matrix = np.zeros((n, k), dtype=np.float64)
    for out_j, j in enumerate(order):
        matrix[:, out_j] = cols[j]
    return PositionalEmbedding(matrix=matrix, eigenvalues=eigvals[order])


def positional_embedding(graph: Graph, k: int = DEFAULT_K) -> PositionalEmbedding:
    """Positional embedding of a graph's normalized Laplacian."""
    return embedding_from_laplacian(normalized_laplacian(graph), k=k)


# ---------------------------------------------------------------------------
# binary cache codec: 16-byte header (magic, N, k), float64 little-endian


def save_embedding(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    n, k = matrix.shape
    with open(path, "wb") as f:
        f.write(_EMB_MAGIC)
        f.write(struct.pack("<II", n, k))
        f.write(matrix.astype("<f8").tobytes())


def load_embedding(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != _EMB_MAGIC:
        raise DataError(f"{path}: not an embedding cache file")
    n, k = struct.unpack("<II", raw[8:16])
    body = np.frombuffer(raw[16:], dtype="<f8")
    if body.size != n * k:
        raise DataError(f"{path}: truncated embedding payload")
    return body.reshape(n, k).astype(np.float64)
