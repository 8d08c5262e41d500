"""Random-walk-with-restart subgraph extraction.

The walk chain: at each step draw two uniforms from the walker's
generator, in order (restart decision, neighbor choice). If the first
draw is below the restart rate the walker jumps back to the center and
the second draw is ignored; otherwise it moves to the neighbor indexed
by ``floor(u * degree)``. A degree-0 position forces the jump (the
neighbor draw is ignored there too). Consuming exactly two draws per
step pins the stream layout so results are portable across
implementations of PCG64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graphs import Graph, StructureView

DEFAULT_WALK_STEPS = 256
DEFAULT_RESTART_RATE = 0.8


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from a tuple of integers (SeedSequence hash)."""
    state = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(state.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Subgraph:
    """Induced local graph around a center node.

    ``node_ids`` are the sorted global ids (center included); the CSR
    arrays use local ids in [0, len(node_ids)).
    """

    center_local_id: int
    node_ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    local_attributes: np.ndarray | None = None
    label: int | None = None

    @property
    def num_nodes(self) -> int:
        return int(self.node_ids.shape[0])

    @property
    def num_stored_edges(self) -> int:
        return int(self.indices.shape[0])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def edge_array(self) -> np.ndarray:
        """(E, 2) array of stored directed edges (both directions present)."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        return np.stack([src, self.indices], axis=1)

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=np.float64)
        e = self.edge_array()
        a[e[:, 0], e[:, 1]] = 1.0
        return a


def rwr_sample(
    graph: Graph | StructureView,
    center: int,
    walk_steps: int = DEFAULT_WALK_STEPS,
    restart_rate: float = DEFAULT_RESTART_RATE,
    rng_seed: int = 0,
) -> np.ndarray:
    """Visited-node set of a random walk with restart; sorted global ids."""
    if not 0 <= center < graph.num_nodes:
        raise DataError(f"center {center} out of range for {graph.num_nodes} nodes")
    if walk_steps < 1:
        raise DataError("walk_steps must be >= 1")
    if not 0.0 <= restart_rate <= 1.0:
        raise DataError(f"restart_rate must be in [0, 1], got {restart_rate}")

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    draws = rng.random((walk_steps, 2))
    indptr, indices = graph.indptr, graph.indices

    visited = {center}
    cur = center
    for t in range(walk_steps):
        if draws[t, 0] < restart_rate:
            cur = center
        else:
            lo, hi = indptr[cur], indptr[cur + 1]
            deg = hi - lo
            if deg == 0:
                cur = center
            else:
                cur = int(indices[lo + int(draws[t, 1] * deg)])
        visited.add(cur)
    return np.fromiter(sorted(visited), dtype=np.int64)


def rwr_sample_batch(
    graph: Graph | StructureView,
    centers: np.ndarray,
    walk_steps: int,
    restart_rate: float,
    rng_seeds: np.ndarray,
) -> list[np.ndarray]:
    """Lockstep-vectorized restart walks, one per (center, seed) pair.

    Each walker consumes its own PCG64 stream with the exact layout of
    :func:`rwr_sample`, so the returned node sets are identical to the
    single-walk path; only the stepping is batched.
    """
    centers = np.asarray(centers, dtype=np.int64)
    rng_seeds = np.asarray(rng_seeds)
    if centers.shape != rng_seeds.shape:
        raise DataError("centers and rng_seeds must align")
    if centers.size and (centers.min() < 0 or centers.max() >= graph.num_nodes):
        raise DataError("center out of range")
    if walk_steps < 1:
        raise DataError("walk_steps must be >= 1")
    if not 0.0 <= restart_rate <= 1.0:
        raise DataError(f"restart_rate must be in [0, 1], got {restart_rate}")

    w = centers.size
    draws = np.empty((w, walk_steps, 2))
    for i in range(w):
        draws[i] = np.random.Generator(np.random.PCG64(int(rng_seeds[i]))).random(
            (walk_steps, 2)
        )

    indptr, indices = graph.indptr, graph.indices
    positions = np.empty((walk_steps + 1, w), dtype=np.int64)
    positions[0] = centers
    cur = centers.copy()
    for t in range(walk_steps):
        lo = indptr[cur]
        deg = indptr[cur + 1] - lo
        stay = (draws[:, t, 0] < restart_rate) | (deg == 0)
        offset = (draws[:, t, 1] * deg).astype(np.int64)
        nxt = indices[np.minimum(lo + offset, len(indices) - 1)] if len(indices) else cur
        cur = np.where(stay, centers, nxt)
        positions[t + 1] = cur
    return [np.unique(positions[:, i]) for i in range(w)]


def induce_subgraph(
    graph: Graph | StructureView,
    nodes: np.ndarray,
    center: int,
) -> Subgraph:
    """Subgraph induced on ``nodes`` with attribute rows gathered when present."""
    node_ids = np.unique(np.asarray(nodes, dtype=np.int64))
    pos = np.searchsorted(node_ids, center)
    if pos >= node_ids.size or node_ids[pos] != center:
        raise DataError(f"center {center} not contained in the node set")

    n = node_ids.size
    indptr = np.zeros(n + 1, dtype=np.int64)
    parts = []
    for local_u, u in enumerate(node_ids):
        nbrs = graph.neighbors(int(u))
        loc = np.searchsorted(node_ids, nbrs)
        inside = loc < n
        loc = loc[inside]
        keep = node_ids[loc] == nbrs[inside]
        local_nbrs = loc[keep]
        parts.append(local_nbrs.astype(np.int64))
        indptr[local_u + 1] = indptr[local_u] + local_nbrs.size
    indices = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    attrs = graph.attributes[node_ids] if graph.has_attributes else None
    label = None
    if graph.labels is not None:
        label = int(graph.labels[center])
    return Subgraph(
        center_local_id=int(pos),
        node_ids=node_ids,
        indptr=indptr,
        indices=indices,
        local_attributes=attrs,
        label=label,
    )


def sample_subgraph(
    graph: Graph | StructureView,
    center: int,
    walk_steps: int = DEFAULT_WALK_STEPS,
    restart_rate: float = DEFAULT_RESTART_RATE,
    rng_seed: int = 0,
) -> Subgraph:
    nodes = rwr_sample(graph, center, walk_steps, restart_rate, rng_seed)
    return induce_subgraph(graph, nodes, center)


def drop_edges(subgraph: Subgraph, drop_prob: float, rng: np.random.Generator) -> Subgraph:
    """Independently drop each undirected edge with probability ``drop_prob``."""
    if not 0.0 <= drop_prob < 1.0:
        raise DataError(f"drop_prob must be in [0, 1), got {drop_prob}")
    edges = subgraph.edge_array()
    upper = edges[edges[:, 0] <= edges[:, 1]]
    keep = rng.random(upper.shape[0]) >= drop_prob
    kept = upper[keep]

    n = subgraph.num_nodes
    sym = np.concatenate([kept, kept[:, ::-1]], axis=0)
    if sym.size:
        keys = np.unique(sym[:, 0] * n + sym[:, 1])
        src, dst = keys // n, keys % n
    else:
        src = np.empty(0, dtype=np.int64)
        dst = np.empty(0, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return Subgraph(
        center_local_id=subgraph.center_local_id,
        node_ids=subgraph.node_ids,
        indptr=indptr,
        indices=dst,
        local_attributes=subgraph.local_attributes,
        label=subgraph.label,
    )
