import numpy as np
import pytest
from hypothesis import strategies as st

from mfpm.network import SocialNetwork, build_multi_level


@pytest.fixture
def one_edge():
    """a -> b, q=1, p=0.5, unit cost and profit."""
    net = SocialNetwork.from_edges([(0, 1)], n=2, q=1, prob=0.5, cost=1.0, profit=1.0)
    return net, build_multi_level(net)


@pytest.fixture
def two_feature():
    """a -> b, q=2, p=(0.5, 1.0), w_b=(0.3, 0.7), unit profit."""
    net = SocialNetwork.from_edges([(0, 1)], n=2, q=2, prob=[0.5, 1.0], cost=1.0, profit=1.0,
                                   weights=[[0.5, 0.5], [0.3, 0.7]])
    return net, build_multi_level(net)


@pytest.fixture
def chain():
    """a -> b -> c, q=1, all edges certain."""
    net = SocialNetwork.from_edges([(0, 1), (1, 2)], n=3, q=1, prob=1.0, cost=1.0, profit=1.0)
    return net, build_multi_level(net)


def random_instance(rng, n, q, max_edges, cost_range=(0.2, 1.0)):
    """Random small network with at most ``max_edges`` multi-level edges."""
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    m = int(rng.integers(0, min(len(pairs), max_edges // q) + 1))
    chosen = rng.choice(len(pairs), size=m, replace=False) if m else []
    edges = [pairs[i] for i in sorted(chosen)]
    expo = rng.standard_exponential((n, q)) + 1e-3
    weights = expo / expo.sum(axis=1, keepdims=True)
    return SocialNetwork.from_edges(
        edges, n=n, q=q, prob=rng.uniform(0.1, 1.0, size=(m, q)),
        cost=rng.uniform(*cost_range, size=n), profit=rng.uniform(0.05, 1.0, size=n),
        weights=weights)


@st.composite
def small_networks(draw, max_n=4, max_q=2, max_edges=10):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_n))
    q = draw(st.integers(1, max_q))
    net = random_instance(np.random.default_rng(seed), n, q, max_edges)
    return net, build_multi_level(net)
