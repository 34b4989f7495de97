"""
攻击溯源主流程
成对增强 Granger 检验 → 资源争用 → 证据融合 → BH 校正 → 阈值建图 → 最优路径 → 逐跳置信度
"""

from __future__ import annotations

import math
import time
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

import networkx as nx
import numpy as np

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..learning.theta import ThetaParams
from ..stats.linreg import bh_adjust
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow, analysis_window
from .contention import ContentionParams, contention_matrix
from .fusion import MixingWeights, f_range, integrated_strength, phi_from_range
from .granger import pairwise_granger
from .hop_confidence import hop_confidence, onset_time
from .path_search import best_maximal_path

# 计时分段，按执行顺序
PHASES = ("validate", "pairwise", "contention", "fusion", "correction", "graph", "path", "confidence")


@dataclass(frozen=True)
class PairTestResult:
    """一个有序切片对 (source → target) 的全部证据"""

    source: int
    target: int
    f_stat: float
    p_value: float
    p_adj: float
    rho: float
    phi: float
    gamma: float
    lag_estimate: int
    onset: float  # 目标切片被波及的时间（秒）
    source_onset: float  # 源切片的活动起点（秒）

    @property
    def pair(self) -> tuple[int, int]:
        return (self.source, self.target)

    def passes(self, tau_causal: float, alpha: float) -> bool:
        return self.gamma > tau_causal and self.p_adj < alpha

    def to_dict(self, slice_ids: tuple[str, ...] | None = None) -> dict[str, Any]:
        data = {
            "source": self.source,
            "target": self.target,
            "f_stat": self.f_stat,
            "p_value": self.p_value,
            "p_adj": self.p_adj,
            "rho": self.rho,
            "phi": self.phi,
            "gamma": self.gamma,
            "lag_estimate": self.lag_estimate,
            "onset": self.onset,
        }
        if slice_ids is not None:
            data["source_id"] = slice_ids[self.source]
            data["target_id"] = slice_ids[self.target]
        return data


@dataclass(frozen=True)
class CausalGraph:
    """阈值化后的因果图，节点为切片标识，边以 (i, j) 下标为键"""

    nodes: tuple[str, ...]
    edges: Mapping[tuple[int, int], PairTestResult] = field(default_factory=dict)

    def __post_init__(self):
        for source, target in self.edges:
            if source == target:
                raise InputValidationError(f"因果图不允许自环: {source}")
            if not (0 <= source < len(self.nodes) and 0 <= target < len(self.nodes)):
                raise InputValidationError(f"边 ({source}, {target}) 的端点超出节点范围")

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from((i, {"slice_id": sid}) for i, sid in enumerate(self.nodes))
        for (source, target), edge in self.edges.items():
            graph.add_edge(source, target, gamma=edge.gamma, p_adj=edge.p_adj, lag=edge.lag_estimate)
        return graph

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": list(self.nodes),
            "edges": [self.edges[pair].to_dict(self.nodes) for pair in sorted(self.edges)],
        }


@dataclass(frozen=True)
class Hop:
    """攻击路径上的一跳"""

    slice_index: int
    slice_id: str
    timestamp: float
    confidence: float  # 1 − p_adj
    interval: tuple[float, float]  # Γ 的自助区间

    def to_dict(self) -> dict[str, Any]:
        return {
            "slice": self.slice_id,
            "index": self.slice_index,
            "time": self.timestamp,
            "confidence": self.confidence,
            "interval": list(self.interval),
        }


@dataclass(frozen=True)
class AttackPath:
    """最优攻击路径 C*"""

    hops: tuple[Hop, ...] = ()
    path_score: float = 0.0  # 沿路径各边 Γ 之积，空路径为 0

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(h.slice_index for h in self.hops)

    @property
    def length(self) -> int:
        return len(self.hops)

    @property
    def empty(self) -> bool:
        return not self.hops

    def pairs(self) -> list[tuple[int, int]]:
        nodes = self.nodes
        return list(zip(nodes, nodes[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "hops": [h.to_dict() for h in self.hops],
            "length": self.length,
            "path_score": self.path_score,
        }


@dataclass(frozen=True, eq=False)
class PairEvidence:
    """全部有序对的原始检验证据，按 (i, j) 行优先排列"""

    pairs: tuple[tuple[int, int], ...]
    f_stats: np.ndarray
    p_values: np.ndarray
    lags: np.ndarray

    @property
    def n_tests(self) -> int:
        return len(self.pairs)

    @property
    def f_bounds(self) -> tuple[float, float]:
        return f_range(self.f_stats)


@dataclass(frozen=True)
class WindowSpan:
    """分析窗口在输入序列中的位置"""

    start_tick: int
    stop_tick: int  # 不含
    start_time: float  # 秒
    tick_duration: float

    @classmethod
    def of(cls, window: TelemetryWindow, config: ModelConfig) -> WindowSpan:
        start = config.window_start_tick
        return cls(start, start + window.n_ticks, window.window_start, window.tick_duration)

    def to_dict(self) -> dict[str, Any]:
        return {
            "start_tick": self.start_tick,
            "stop_tick": self.stop_tick,
            "start_time": self.start_time,
            "tick_duration": self.tick_duration,
        }


@dataclass(frozen=True, eq=False)
class AttributionResult:
    """一次溯源运行的完整输出"""

    graph: CausalGraph
    path: AttackPath
    pairs: tuple[PairTestResult, ...]
    theta: ThetaParams
    f_bounds: tuple[float, float]
    timings: dict[str, float] = field(default_factory=dict)
    span: WindowSpan | None = None

    def to_dict(self, config: ModelConfig | None = None) -> dict[str, Any]:
        """结构化报告；timing 段不参与确定性比对"""
        report = {
            **self.graph.to_dict(),
            "path": self.path.to_dict(),
            "pairs": [p.to_dict(self.graph.nodes) for p in self.pairs],
            "theta": self.theta.to_dict(),
            "f_range": list(self.f_bounds),
            "window": None if self.span is None else self.span.to_dict(),
            "timing": dict(self.timings),
        }
        if config is not None:
            report["config"] = config.to_dict()
        return report


def compute_pairwise_evidence(window: TelemetryWindow, config: ModelConfig) -> PairEvidence:
    """对全部 N(N−1) 个有序对执行增强 Granger 检验"""
    results = pairwise_granger(window, config)
    pairs = tuple(results)
    return PairEvidence(
        pairs=pairs,
        f_stats=np.array([results[k].f_stat for k in pairs], dtype=float),
        p_values=np.array([results[k].p_value for k in pairs], dtype=float),
        lags=np.array([results[k].lag_estimate for k in pairs], dtype=int),
    )


def assemble_pairs(
    window: TelemetryWindow,
    evidence: PairEvidence,
    rho: np.ndarray,
    config: ModelConfig,
    theta: ThetaParams,
    timings: dict[str, float] | None = None,
) -> list[PairTestResult]:
    """融合证据并做多重检验校正，返回全部有序对的结果"""
    timings = {} if timings is None else timings
    started = time.perf_counter()
    phi = phi_from_range(evidence.f_stats, evidence.f_bounds)
    rho_pairs = np.array([rho[i, j] for i, j in evidence.pairs], dtype=float)
    gamma = integrated_strength(phi, rho_pairs, MixingWeights(theta.omega1))
    timings["fusion"] = time.perf_counter() - started

    started = time.perf_counter()
    p_adj = bh_adjust(evidence.p_values, evidence.n_tests, step_up=config.bh_step_up)
    timings["correction"] = time.perf_counter() - started

    onsets = [onset_time(window, i, config.onset_z) for i in range(window.n_slices)]
    results = []
    for k, (i, j) in enumerate(evidence.pairs):
        lag = int(evidence.lags[k])
        results.append(
            PairTestResult(
                source=i,
                target=j,
                f_stat=float(evidence.f_stats[k]),
                p_value=float(evidence.p_values[k]),
                p_adj=float(p_adj[k]),
                rho=float(rho_pairs[k]),
                phi=float(phi[k]),
                gamma=float(gamma[k]),
                lag_estimate=lag,
                onset=onsets[i] + lag * window.tick_duration,
                source_onset=onsets[i],
            )
        )
    return results


def build_graph(
    slice_ids: tuple[str, ...], pairs: list[PairTestResult], tau_causal: float, alpha: float
) -> CausalGraph:
    """只保留同时满足 Γ > τ_causal 与 p_adj < α 的边"""
    edges = {r.pair: r for r in pairs if r.passes(tau_causal, alpha)}
    return CausalGraph(nodes=tuple(slice_ids), edges=edges)


def extract_path(graph: CausalGraph) -> AttackPath:
    """
    在因果图上求 ΠΓ 最大的极大路径

    图中可以有环，破环与并列规则见 path_search。逐跳时间戳沿路径取累计最大值，
    置信度暂取 1 − p_adj，区间为 [Γ, Γ]，由 attach_confidence 替换为自助区间。
    """
    nodes, _ = best_maximal_path(graph.edges)
    if not nodes:
        return AttackPath()
    edges = [graph.edges[pair] for pair in zip(nodes, nodes[1:])]
    first = edges[0]
    timestamp = first.source_onset
    hops = [
        Hop(nodes[0], graph.nodes[nodes[0]], timestamp, _point(first), (first.gamma, first.gamma))
    ]
    for edge in edges:
        timestamp = max(timestamp, edge.onset)
        hops.append(Hop(edge.target, graph.nodes[edge.target], timestamp, _point(edge), (edge.gamma, edge.gamma)))
    return AttackPath(hops=tuple(hops), path_score=math.prod(e.gamma for e in edges))


def _point(edge: PairTestResult) -> float:
    return min(max(1.0 - edge.p_adj, 0.0), 1.0)


def attach_confidence(
    path: AttackPath,
    graph: CausalGraph,
    window: TelemetryWindow,
    config: ModelConfig,
    f_bounds: tuple[float, float],
) -> AttackPath:
    """为路径上每一跳计算置信区间；首跳沿用第一条边的结果"""
    if path.empty:
        return path
    intervals = {}
    for pair in path.pairs():
        intervals[pair] = hop_confidence(graph.edges[pair], window, config, f_bounds)
    pairs = path.pairs()
    hops = []
    for k, hop in enumerate(path.hops):
        pair = pairs[0] if k == 0 else pairs[k - 1]
        point, interval = intervals[pair]
        hops.append(replace(hop, confidence=point, interval=interval))
    return replace(path, hops=tuple(hops))


def attribute(
    window: TelemetryWindow,
    config: ModelConfig,
    theta: ThetaParams | None = None,
) -> AttributionResult:
    """
    执行完整的溯源流程

    Args:
        window: 遥测序列，按 config.window_start_tick 与 W 截取分析窗口
        config: 分析配置
        theta: 覆盖 config 中的 θ

    Returns:
        AttributionResult，含因果图、最优路径、全部有序对结果与分段耗时

    Raises:
        InputValidationError: 窗口不满足回归需求
        NumericalFailure: 回归秩亏
    """
    timings: dict[str, float] = {}
    started = time.perf_counter()
    if theta is not None:
        config = replace(config, theta=theta)
    window = analysis_window(window, config)
    config.validate_window(window)
    theta = config.theta_for(window.k_resources)
    timings["validate"] = time.perf_counter() - started

    started = time.perf_counter()
    evidence = compute_pairwise_evidence(window, config)
    timings["pairwise"] = time.perf_counter() - started

    started = time.perf_counter()
    rho = contention_matrix(window, ContentionParams.from_theta(theta))
    timings["contention"] = time.perf_counter() - started

    pairs = assemble_pairs(window, evidence, rho, config, theta, timings)

    started = time.perf_counter()
    graph = build_graph(window.slice_ids, pairs, config.tau_causal, config.alpha)
    timings["graph"] = time.perf_counter() - started

    started = time.perf_counter()
    path = extract_path(graph)
    timings["path"] = time.perf_counter() - started

    started = time.perf_counter()
    path = attach_confidence(path, graph, window, config, evidence.f_bounds)
    timings["confidence"] = time.perf_counter() - started

    logger.info(
        f"溯源完成: N={window.n_slices}, 边数={len(graph.edges)}, 路径长度={path.length}, "
        f"总耗时={sum(timings.values()):.3f}s"
    )
    return AttributionResult(
        graph=graph,
        path=path,
        pairs=tuple(pairs),
        theta=theta,
        f_bounds=evidence.f_bounds,
        timings={phase: timings[phase] for phase in PHASES},
        span=WindowSpan.of(window, config),
    )
