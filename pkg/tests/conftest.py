import numpy as np
import pytest

from utils.graph_core import bipartite_sbm, from_named_edges


def complete(na, nb, prefix_a="a", prefix_b="b"):
    return from_named_edges((f"{prefix_a}{i}", f"{prefix_b}{j}") for i in range(na) for j in range(nb))


def random_bipartite(rng, na, nb, p):
    """Random graph with every node kept by giving node i at least one edge"""
    pairs = {(i, int(rng.integers(nb))) for i in range(na)}
    pairs |= {(int(rng.integers(na)), j) for j in range(nb)}
    pairs |= {(i, j) for i in range(na) for j in range(nb) if rng.random() < p}
    return from_named_edges((f"a{i}", f"b{j}") for i, j in sorted(pairs))


@pytest.fixture
def k2():
    return from_named_edges([("a1", "b1")])


@pytest.fixture
def path3():
    """alpha1 - beta1 - alpha2"""
    return from_named_edges([("a1", "b1"), ("a2", "b1")])


@pytest.fixture
def k22():
    return complete(2, 2)


@pytest.fixture
def k33():
    return complete(3, 3)


@pytest.fixture
def tree():
    return from_named_edges([("a1", "b1"), ("a2", "b1"), ("a2", "b2"), ("a3", "b2"), ("a3", "b3")])


@pytest.fixture
def two_blocks():
    """Two K_{5,5} blocks joined by a single bridge edge"""
    pairs = [(f"a0_{i}", f"b0_{j}") for i in range(5) for j in range(5)]
    pairs += [(f"a1_{i}", f"b1_{j}") for i in range(5) for j in range(5)]
    pairs.append(("a0_0", "b1_0"))
    return from_named_edges(pairs)


@pytest.fixture
def sbm():
    def build(block_size=30, p_in=0.3, p_out=0.02, seed=0):
        return bipartite_sbm(block_size, block_size, p_in, p_out, seed)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
