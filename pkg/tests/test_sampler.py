import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphcontrol.errors import DataError
from graphcontrol.graphs import build_graph
from graphcontrol.sampler import (
    derive_seed,
    drop_edges,
    induce_subgraph,
    rwr_sample,
    rwr_sample_batch,
    sample_subgraph,
)

from conftest import random_graph


def star_graph(leaves=5):
    edges = np.array([[0, i] for i in range(1, leaves + 1)])
    return build_graph(leaves + 1, edges)


class TestRwrSample:
    def test_full_restart_returns_center(self, rng):
        g = random_graph(rng, 20, edge_prob=0.3)
        assert rwr_sample(g, 4, walk_steps=100, restart_rate=1.0, rng_seed=0).tolist() == [4]

    def test_isolated_center(self):
        g = build_graph(3, np.array([[1, 2]]))
        assert rwr_sample(g, 0, walk_steps=50, restart_rate=0.0, rng_seed=1).tolist() == [0]

    def test_center_out_of_range(self, rng):
        g = random_graph(rng, 5)
        with pytest.raises(DataError, match="out of range"):
            rwr_sample(g, 9, walk_steps=5, restart_rate=0.5, rng_seed=0)

    def test_deterministic(self, rng):
        g = random_graph(rng, 30, edge_prob=0.2)
        a = rwr_sample(g, 3, 64, 0.5, rng_seed=77)
        b = rwr_sample(g, 3, 64, 0.5, rng_seed=77)
        assert np.array_equal(a, b)

    def test_star_leaf_frequencies_uniform(self):
        # Monte Carlo oracle over the explicit chain: on a 5-leaf star with
        # the hub as center, each non-restart step picks a leaf uniformly,
        # so leaf visit counts over many steps are equal within 3 SE.
        leaves = 5
        g = star_graph(leaves)
        counts = np.zeros(leaves + 1)
        n_steps = 100_000
        rng = np.random.Generator(np.random.PCG64(5))
        draws = rng.random((n_steps, 2))
        cur = 0
        for t in range(n_steps):
            if draws[t, 0] < 0.5:
                cur = 0
            else:
                nbrs = g.neighbors(cur)
                cur = int(nbrs[int(draws[t, 1] * len(nbrs))])
            counts[cur] += 1
        leaf_counts = counts[1:]
        # each step visits a specific leaf w.p. p = 0.5/5 (non-restart from hub x uniform);
        # hub->leaf transitions only happen from the hub, leaf->hub otherwise
        p_hat = leaf_counts / leaf_counts.sum()
        se = np.sqrt(p_hat * (1 - p_hat) / leaf_counts.sum())
        assert np.all(np.abs(p_hat - 1.0 / leaves) <= 3 * se + 1e-12)

    def test_visited_reachable_from_center(self, rng):
        g = random_graph(rng, 40, edge_prob=0.08)
        nodes = rwr_sample(g, 7, 128, 0.3, rng_seed=3)
        # BFS from center in the parent graph
        seen = {7}
        frontier = [7]
        while frontier:
            nxt = []
            for u in frontier:
                for v in g.neighbors(u):
                    if int(v) not in seen:
                        seen.add(int(v))
                        nxt.append(int(v))
            frontier = nxt
        assert set(nodes.tolist()) <= seen

    def test_size_bound(self, rng):
        g = random_graph(rng, 50, edge_prob=0.3)
        nodes = rwr_sample(g, 0, walk_steps=16, restart_rate=0.1, rng_seed=0)
        assert len(nodes) <= 17

    def test_expected_growth_in_steps(self):
        # |nodes| is not monotone per realization; compare Monte Carlo means
        g = random_graph(np.random.Generator(np.random.PCG64(8)), 60, edge_prob=0.15)
        sizes = {steps: [] for steps in (32, 256)}
        for seed in range(500):
            for steps in (32, 256):
                sizes[steps].append(len(rwr_sample(g, 11, steps, 0.5, rng_seed=seed)))
        assert np.mean(sizes[256]) > np.mean(sizes[32])

    def test_batch_equals_single(self, rng):
        g = random_graph(rng, 35, edge_prob=0.15)
        centers = rng.integers(0, 35, size=40)
        seeds = np.array([derive_seed(3, int(c), i) for i, c in enumerate(centers)],
                         dtype=np.uint64)
        batch = rwr_sample_batch(g, centers, 48, 0.6, seeds)
        for i in range(40):
            single = rwr_sample(g, int(centers[i]), 48, 0.6, int(seeds[i]))
            assert np.array_equal(batch[i], single)


class TestInduceSubgraph:
    def test_singleton(self, rng):
        g = random_graph(rng, 10, edge_prob=0.3)
        sub = induce_subgraph(g, np.array([4]), 4)
        assert sub.num_nodes == 1
        assert sub.num_stored_edges == 0
        assert sub.center_local_id == 0

    def test_identity_induction(self, rng):
        g = random_graph(rng, 12, edge_prob=0.3)
        sub = induce_subgraph(g, np.arange(12), 5)
        assert np.array_equal(sub.indptr, g.indptr)
        assert np.array_equal(sub.indices, g.indices)

    def test_center_must_be_member(self, rng):
        g = random_graph(rng, 10, edge_prob=0.3)
        with pytest.raises(DataError, match="not contained"):
            induce_subgraph(g, np.array([1, 2, 3]), 7)

    def test_matches_bruteforce_edge_filter(self, rng):
        g = random_graph(rng, 30, edge_prob=0.2)
        nodes = np.unique(rng.integers(0, 30, size=12))
        center = int(nodes[0])
        sub = induce_subgraph(g, nodes, center)
        expected = set()
        for u in range(30):
            for v in g.neighbors(u):
                if u in nodes and v in nodes:
                    lu = int(np.searchsorted(nodes, u))
                    lv = int(np.searchsorted(nodes, v))
                    expected.add((lu, lv))
        got = {(int(a), int(b)) for a, b in sub.edge_array()}
        assert got == expected

    def test_gathers_attributes_and_label(self, rng):
        g = random_graph(rng, 15, edge_prob=0.3, attrs_dim=4, num_classes=3)
        nodes = np.array([2, 5, 9])
        sub = induce_subgraph(g, nodes, 5)
        assert np.array_equal(sub.local_attributes, g.attributes[nodes])
        assert sub.label == g.labels[5]

    @given(seed=st.integers(0, 500))
    @settings(max_examples=25)
    def test_subgraph_bound_property(self, seed):
        g = random_graph(np.random.Generator(np.random.PCG64(21)), 25, edge_prob=0.2)
        sub = sample_subgraph(g, 3, walk_steps=20, restart_rate=0.4, rng_seed=seed)
        assert sub.num_nodes <= 21
        assert 3 in sub.node_ids.tolist()


class TestDropEdges:
    def test_zero_drop_is_identity(self, rng):
        g = random_graph(rng, 20, edge_prob=0.3)
        sub = sample_subgraph(g, 0, 32, 0.3, rng_seed=0)
        kept = drop_edges(sub, 0.0, np.random.Generator(np.random.PCG64(0)))
        assert np.array_equal(kept.indices, sub.indices)

    def test_drop_keeps_symmetry(self, rng):
        g = random_graph(rng, 20, edge_prob=0.4)
        sub = sample_subgraph(g, 1, 64, 0.2, rng_seed=4)
        dropped = drop_edges(sub, 0.5, np.random.Generator(np.random.PCG64(9)))
        edges = {(int(a), int(b)) for a, b in dropped.edge_array()}
        assert all((b, a) in edges for a, b in edges)
        assert edges <= {(int(a), int(b)) for a, b in sub.edge_array()}
