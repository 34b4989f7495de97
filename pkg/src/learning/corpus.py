"""
训练语料
每个场景 = 遥测窗口 + 真实因果边集；与 θ 无关的统计证据（φ、p_adj）按场景缓存
"""

from __future__ import annotations

import concurrent.futures
import threading
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow, analysis_window


@dataclass(frozen=True, eq=False)
class Scenario:
    """单个带标注的场景"""

    scenario_id: str
    window: TelemetryWindow
    truth: frozenset[tuple[int, int]]  # 真实直接因果边 (i, j)
    truth_path: tuple[int, ...] = ()  # 真实攻击链，按跳序
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "truth", frozenset((int(i), int(j)) for i, j in self.truth))
        object.__setattr__(self, "truth_path", tuple(int(i) for i in self.truth_path))
        n = self.window.n_slices
        for i, j in self.truth:
            if i == j:
                raise InputValidationError(f"场景 {self.scenario_id} 的真实边含自环: {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InputValidationError(f"场景 {self.scenario_id} 的真实边 ({i}, {j}) 超出切片范围 N={n}")

    def label_matrix(self) -> np.ndarray:
        labels = np.zeros((self.window.n_slices, self.window.n_slices))
        for i, j in self.truth:
            labels[i, j] = 1.0
        return labels


@dataclass(frozen=True, eq=False)
class ScenarioEvidence:
    """与 θ 无关的逐对证据，N × N 矩阵，对角线无意义"""

    phi: np.ndarray
    p_adj: np.ndarray
    f_stats: np.ndarray
    lags: np.ndarray
    window: TelemetryWindow  # 实际分析的窗口


def _evidence_for(window: TelemetryWindow, config: ModelConfig) -> ScenarioEvidence:
    # 延迟导入: causality 依赖 learning.theta
    from ..causality.attribution import compute_pairwise_evidence
    from ..causality.fusion import phi_from_range
    from ..stats.linreg import bh_adjust

    window = analysis_window(window, config)
    evidence = compute_pairwise_evidence(window, config)
    n = window.n_slices
    phi = np.zeros((n, n))
    p_adj = np.ones((n, n))
    f_stats = np.zeros((n, n))
    lags = np.zeros((n, n), dtype=int)
    rows, cols = np.array(evidence.pairs).T
    phi[rows, cols] = phi_from_range(evidence.f_stats, evidence.f_bounds)
    p_adj[rows, cols] = bh_adjust(evidence.p_values, evidence.n_tests, step_up=config.bh_step_up)
    f_stats[rows, cols] = evidence.f_stats
    lags[rows, cols] = evidence.lags
    return ScenarioEvidence(phi=phi, p_adj=p_adj, f_stats=f_stats, lags=lags, window=window)


@dataclass(eq=False)
class TrainingCorpus:
    """
    场景集合

    证据在首次访问时计算并缓存；同一语料上的多次似然求值只付一次回归代价。
    """

    scenarios: list[Scenario]
    config: ModelConfig = field(default_factory=ModelConfig)
    _cache: dict[int, ScenarioEvidence] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.scenarios = list(self.scenarios)
        ids = [s.scenario_id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise InputValidationError("语料中存在重复的场景编号")
        resource_counts = {s.window.k_resources for s in self.scenarios}
        if len(resource_counts) > 1:
            raise InputValidationError(f"语料中各场景的资源数不一致: {sorted(resource_counts)}")

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self) -> Iterator[Scenario]:
        return iter(self.scenarios)

    def __getitem__(self, index: int) -> Scenario:
        return self.scenarios[index]

    @property
    def k_resources(self) -> int:
        if not self.scenarios:
            raise InputValidationError("语料为空")
        return self.scenarios[0].window.k_resources

    @property
    def n_pairs(self) -> int:
        return sum(s.window.n_slices * (s.window.n_slices - 1) for s in self.scenarios)

    def evidence(self, index: int) -> ScenarioEvidence:
        with self._lock:
            cached = self._cache.get(index)
        if cached is not None:
            return cached
        computed = _evidence_for(self.scenarios[index].window, self.config)
        with self._lock:
            return self._cache.setdefault(index, computed)

    def warm(self, jobs: int = 1) -> None:
        """预先计算全部场景的证据"""
        indices = [i for i in range(len(self.scenarios)) if i not in self._cache]
        if not indices:
            return
        if jobs > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="Evidence-") as executor:
                list(executor.map(self.evidence, indices))
        else:
            for i in indices:
                self.evidence(i)
        logger.debug(f"语料证据缓存完成: {len(self.scenarios)} 个场景")

    def subset(self, indices: Iterable[int]) -> TrainingCorpus:
        """取子语料，已缓存的证据随之带过去"""
        indices = list(indices)
        sub = TrainingCorpus([self.scenarios[i] for i in indices], self.config)
        for new_index, old_index in enumerate(indices):
            if old_index in self._cache:
                sub._cache[new_index] = self._cache[old_index]
        return sub

    def relabeled(self, truths: Sequence[frozenset[tuple[int, int]]]) -> TrainingCorpus:
        """替换真实边集，保留证据缓存"""
        if len(truths) != len(self.scenarios):
            raise InputValidationError("标注数量与场景数量不一致")
        sub = TrainingCorpus(
            [replace(s, truth=frozenset(t)) for s, t in zip(self.scenarios, truths)], self.config
        )
        sub._cache.update(self._cache)
        return sub
