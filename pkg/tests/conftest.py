from pathlib import Path

import pytest

from delaycent import WeightedGraph, build_matrices, is_connected, parse_edge_list

FIXTURES = Path(__file__).parent / "fixtures"


def graph_from_edges(n, pairs, weight=1.0):
    return WeightedGraph(n=n, edges=tuple((i, j, weight) for i, j in pairs))


def path_graph(n, weight=1.0):
    return graph_from_edges(n, [(k, k + 1) for k in range(n - 1)], weight)


def cycle_graph(n, weight=1.0):
    pairs = [(k, k + 1) for k in range(n - 1)] + [(0, n - 1)]
    return graph_from_edges(n, pairs, weight)


def complete_graph(n, weight=1.0):
    return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], weight)


def star_graph(n, weight=1.0):
    return graph_from_edges(n, [(0, k) for k in range(1, n)], weight)


def random_connected_graph(rng, n, p=0.45, weight_range=(0.5, 2.0)):
    """Erdos-Renyi-style connected graph with random weights; retries until connected."""
    while True:
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    edges.append((i, j, float(rng.uniform(*weight_range))))
        if not edges:
            continue
        g = WeightedGraph(n=n, edges=tuple(edges))
        if is_connected(g):
            return g


@pytest.fixture
def k2():
    return build_matrices(parse_edge_list("0 1"))


@pytest.fixture
def p3():
    return build_matrices(path_graph(3))


@pytest.fixture
def triangle():
    return build_matrices(complete_graph(3))


@pytest.fixture
def triangle_123():
    return build_matrices(
        WeightedGraph(n=3, edges=((0, 1, 1.0), (0, 2, 2.0), (1, 2, 3.0)))
    )


@pytest.fixture
def c4():
    return build_matrices(cycle_graph(4))


@pytest.fixture
def star5():
    return build_matrices(star_graph(5))


@pytest.fixture
def path8():
    return build_matrices(path_graph(8))


@pytest.fixture
def shared_neighbors():
    """Nodes 0 and 1 share the neighbor set {2, 3} and are not adjacent,
    so the swap (0 1) is a graph automorphism."""
    return build_matrices(graph_from_edges(4, [(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]))


@pytest.fixture
def ex1_graph():
    return build_matrices(parse_edge_list((FIXTURES / "ex1_8n20e.edges").read_text()))
