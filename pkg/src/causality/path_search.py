"""
攻击路径搜索
破环后在 DAG 上按拓扑序做动态规划，求 log Γ 之和最大的极大路径
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from typing import Protocol

import networkx as nx

from astrbot.api import logger

# 路径得分（log Γ 之和）差值在此范围内视为并列
SCORE_TOLERANCE = 1e-9


class WeightedEdge(Protocol):
    gamma: float
    p_adj: float


def _edge_rank(pair: tuple[int, int], edge: WeightedEdge) -> tuple[float, float, tuple[int, int]]:
    # 强边优先：Γ 大者在前；Γ 相同则 p_adj 小者在前；再按 (i, j) 字典序
    return (-edge.gamma, edge.p_adj, pair)


def break_cycles(edges: Mapping[tuple[int, int], WeightedEdge]) -> dict[tuple[int, int], WeightedEdge]:
    """
    删除环中最弱的边，使图无环

    按 (Γ 降序, p_adj 升序, (i,j) 升序) 依次加入边，若加入会成环则丢弃。
    被丢弃的边在其所闭合的环中是排序最靠后的一条。

    Returns:
        保留下来的边
    """
    dag = nx.DiGraph()
    kept: dict[tuple[int, int], WeightedEdge] = {}
    dropped = 0
    for pair, edge in sorted(edges.items(), key=lambda item: _edge_rank(*item)):
        source, target = pair
        if dag.has_node(target) and dag.has_node(source) and nx.has_path(dag, target, source):
            dropped += 1
            continue
        dag.add_edge(source, target)
        kept[pair] = edge
    if dropped:
        logger.debug(f"破环删除 {dropped} 条边")
    return kept


def prefer(candidate: tuple[float, tuple[int, ...]], incumbent: tuple[float, tuple[int, ...]]) -> bool:
    """候选路径是否优于现有路径：得分高 > 路径长 > 节点序列字典序小"""
    score_c, nodes_c = candidate
    score_i, nodes_i = incumbent
    if abs(score_c - score_i) > SCORE_TOLERANCE:
        return score_c > score_i
    if len(nodes_c) != len(nodes_i):
        return len(nodes_c) > len(nodes_i)
    return nodes_c < nodes_i


def best_maximal_path(
    edges: Mapping[tuple[int, int], WeightedEdge],
) -> tuple[tuple[int, ...], float]:
    """
    在任意有向图上求最优极大路径

    Args:
        edges: (i, j) → 带 gamma / p_adj 的边

    Returns:
        (节点序列, log Γ 之和)；无边时返回 ((), -inf)
    """
    if not edges:
        return (), -math.inf
    dag_edges = break_cycles(edges)
    graph = nx.DiGraph()
    graph.add_edges_from(dag_edges)

    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    for node in nx.lexicographical_topological_sort(graph):
        predecessors = sorted(graph.predecessors(node))
        if not predecessors:
            best[node] = (0.0, (node,))
            continue
        chosen = None
        for pred in predecessors:
            score, nodes = best[pred]
            candidate = (score + math.log(dag_edges[(pred, node)].gamma), nodes + (node,))
            if chosen is None or prefer(candidate, chosen):
                chosen = candidate
        best[node] = chosen

    # 极大路径: 起于无入边节点、止于无出边节点
    winner = None
    for node in sorted(graph.nodes):
        if graph.out_degree(node) == 0 and graph.in_degree(node) > 0:
            if winner is None or prefer(best[node], winner):
                winner = best[node]
    score, nodes = winner
    return nodes, score
