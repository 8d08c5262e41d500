import hypothesis
import numpy as np
import pytest
import torch

hypothesis.settings.register_profile(
    "ci", max_examples=50, deadline=None, derandomize=True,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("ci")

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_bundle():
    from graphcontrol.synth import make_tiny_fixture

    return make_tiny_fixture(num_nodes=40, seed=3)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def random_graph(rng, n, edge_prob=0.2, attrs_dim=None, num_classes=None, seed_attrs=0):
    """Erdos-Renyi helper used across test modules."""
    from graphcontrol.graphs import build_graph

    mask = rng.random((n, n)) < edge_prob
    mask = np.triu(mask, 1)
    edges = np.argwhere(mask)
    attrs = None
    if attrs_dim is not None:
        attrs = np.random.Generator(np.random.PCG64(seed_attrs)).normal(size=(n, attrs_dim))
    labels = None
    if num_classes is not None:
        labels = rng.integers(num_classes, size=n)
    return build_graph(n, edges, attributes=attrs, labels=labels, num_classes=num_classes)
