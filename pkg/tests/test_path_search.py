import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
import pytest

from src.causality.path_search import best_maximal_path, break_cycles, prefer


@dataclass(frozen=True)
class Edge:
    gamma: float
    p_adj: float = 0.01


def brute_force(edges: dict) -> tuple[tuple[int, ...], float]:
    """枚举 DAG 上全部极大路径，按同一并列规则取最优"""
    graph = nx.DiGraph()
    graph.add_edges_from(edges)
    sources = [n for n in graph.nodes if graph.in_degree(n) == 0]
    sinks = [n for n in graph.nodes if graph.out_degree(n) == 0]
    best = None
    for source, sink in itertools.product(sources, sinks):
        for path in nx.all_simple_paths(graph, source, sink):
            score = sum(math.log(edges[pair].gamma) for pair in zip(path, path[1:]))
            candidate = (score, tuple(path))
            if best is None or prefer(candidate, best):
                best = candidate
    return best[1], best[0]


def random_dag(rng: np.random.Generator, n_nodes: int) -> dict:
    order = rng.permutation(n_nodes)
    edges = {}
    for a, b in itertools.combinations(range(n_nodes), 2):
        if rng.random() < 0.4:
            edges[(int(order[a]), int(order[b]))] = Edge(float(rng.choice([0.5, 0.6, 0.8, 1.0])))
    return edges


class TestBestMaximalPath:
    def test_three_node_example(self):
        edges = {(0, 1): Edge(0.9), (1, 2): Edge(0.8), (0, 2): Edge(0.5)}
        nodes, score = best_maximal_path(edges)
        assert nodes == (0, 1, 2)
        assert math.exp(score) == pytest.approx(0.72)

    def test_single_edge(self):
        nodes, score = best_maximal_path({(3, 1): Edge(0.7)})
        assert nodes == (3, 1)
        assert score == pytest.approx(math.log(0.7))

    def test_empty_graph(self):
        assert best_maximal_path({}) == ((), -math.inf)

    def test_tie_prefers_longer_path(self):
        edges = {(0, 1): Edge(1.0), (1, 2): Edge(0.5), (0, 2): Edge(0.5)}
        nodes, _ = best_maximal_path(edges)
        assert nodes == (0, 1, 2)

    def test_tie_prefers_lexicographically_smaller(self):
        edges = {(0, 2): Edge(0.6), (1, 3): Edge(0.6)}
        nodes, _ = best_maximal_path(edges)
        assert nodes == (0, 2)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(1000):
            edges = random_dag(rng, int(rng.integers(2, 9)))
            if not edges:
                continue
            nodes, score = best_maximal_path(edges)
            expected_nodes, expected_score = brute_force(edges)
            assert nodes == expected_nodes
            assert score == pytest.approx(expected_score, abs=1e-9)
            checked += 1
        assert checked > 800


class TestBreakCycles:
    def test_weakest_edge_removed(self):
        edges = {(0, 1): Edge(0.9), (1, 2): Edge(0.8), (2, 0): Edge(0.5)}
        assert set(break_cycles(edges)) == {(0, 1), (1, 2)}

    def test_gamma_tie_drops_larger_p_adj(self):
        edges = {(0, 1): Edge(0.7, 0.001), (1, 0): Edge(0.7, 0.02)}
        assert set(break_cycles(edges)) == {(0, 1)}

    def test_result_is_acyclic(self):
        rng = np.random.default_rng(8)
        edges = {
            (i, j): Edge(float(rng.uniform(0.4, 1.0)), float(rng.uniform(0, 0.05)))
            for i in range(6)
            for j in range(6)
            if i != j and rng.random() < 0.5
        }
        kept = break_cycles(edges)
        assert nx.is_directed_acyclic_graph(nx.DiGraph(list(kept)))

    def test_cyclic_graph_still_yields_path(self):
        edges = {(0, 1): Edge(0.9), (1, 0): Edge(0.6)}
        nodes, _ = best_maximal_path(edges)
        assert nodes == (0, 1)
