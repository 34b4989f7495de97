"""
合成遥测生成器
逐切片 AR(1) 基线 + 经由资源通路的攻击链耦合 + 资源驱动的混杂 + 噪声与可观测性控制
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import signal, special

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..learning.corpus import Scenario, TrainingCorpus
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow, zscore_normalize
from .scenario_spec import (
    ChainSpec,
    ConfounderSpec,
    ScenarioSpec,
    TemplateBounds,
)

# 各业务类别的 (基准, 尺度)
LATENCY_PROFILE = {"eMBB": (20.0, 3.0), "URLLC": (5.0, 0.5), "mMTC": (50.0, 8.0), "hybrid": (15.0, 2.0)}
THROUGHPUT_PROFILE = {"eMBB": (500.0, 40.0), "URLLC": (50.0, 5.0), "mMTC": (5.0, 0.6), "hybrid": (120.0, 15.0)}
EXTRA_METRIC = "throughput_mbps"

BACKGROUND_AR = 0.9
BACKGROUND_UTIL_SCALE = 0.05
ALLOC_NOISE_SD = 0.01
GAIN_THRESHOLD = 0.5


@dataclass(frozen=True)
class GroundTruth:
    """真实因果结构"""

    edges: frozenset[tuple[int, int]]
    path: tuple[int, ...]
    hop_times: tuple[float, ...]
    events: list[dict[str, Any]] = field(default_factory=list)
    sophistication: str | None = None

    def to_dict(self, slice_ids: tuple[str, ...]) -> dict[str, Any]:
        return {
            "edges": [[i, j] for i, j in sorted(self.edges)],
            "edge_ids": [[slice_ids[i], slice_ids[j]] for i, j in sorted(self.edges)],
            "path": list(self.path),
            "path_ids": [slice_ids[i] for i in self.path],
            "hop_times": list(self.hop_times),
            "events": self.events,
            "sophistication": self.sophistication,
        }


@dataclass(frozen=True, eq=False)
class GeneratedScenario:
    """generate 的输出：遥测窗口、真实结构与附带信息"""

    spec: ScenarioSpec
    window: TelemetryWindow
    truth: GroundTruth
    extra_metrics: dict[str, np.ndarray]
    saturated: bool

    @property
    def truth_edges(self) -> frozenset[tuple[int, int]]:
        return self.truth.edges

    @property
    def truth_path(self) -> tuple[int, ...]:
        return self.truth.path

    def to_corpus_scenario(self, scenario_id: str | None = None) -> Scenario:
        return Scenario(
            scenario_id=scenario_id or self.spec.name,
            window=self.window,
            truth=self.truth.edges,
            truth_path=self.truth.path,
            seed=self.spec.seed,
        )


def _ar_rows(rng: np.random.Generator, rows: int, ticks: int, coefficient: float) -> np.ndarray:
    """逐行标准化的 AR(1) 序列"""
    innovations = rng.standard_normal((rows, ticks))
    series = signal.lfilter([1.0], [1.0, -coefficient], innovations, axis=1)
    return np.vstack([zscore_normalize(row) for row in series])


def _interp_profile(times: np.ndarray, points: list[tuple[float, float]]) -> np.ndarray:
    xs, ys = zip(*sorted(points))
    return np.interp(times, xs, ys)


def _bridge_gaps(values: np.ndarray, dropped: np.ndarray, kept: np.ndarray) -> np.ndarray:
    """沿最后一维对丢弃的 tick 做线性插值"""
    flat = values.reshape(-1, values.shape[-1]).copy()
    for row in flat:
        row[dropped] = np.interp(dropped, kept, row[kept])
    return flat.reshape(values.shape)


def _ground_truth(spec: ScenarioSpec) -> GroundTruth:
    chain = spec.chain
    events = [e.model_dump() for e in spec.events]
    if chain is None:
        return GroundTruth(frozenset(), (), (), events, None)
    start = chain.start_tick * spec.tick_duration
    hop_times = [start]
    for lag in chain.lags:
        hop_times.append(hop_times[-1] + lag * spec.tick_duration)
    if not events:
        events = [{"name": "injection", "time": start}, {"name": "peak", "time": hop_times[-1]}]
    return GroundTruth(
        edges=frozenset(chain.edges()),
        path=tuple(chain.slices),
        hop_times=tuple(hop_times),
        events=events,
        sophistication=chain.sophistication,
    )


def generate(spec: ScenarioSpec) -> GeneratedScenario:
    """
    按场景描述生成一个窗口

    每一跳 (a → b, 滞后 ℓ, 强度 c, 资源 r) 拉高 a、b 在 r 上的分配与 r 的利用率，
    b 的新息在 ℓ 个 tick 后叠加 c·g(t)·ε̃_a(t−ℓ)，其中 g 为按窗口均值归一化的
    A_a,r·A_b,r·σ(U_r − 0.5)。同一种子两次生成结果逐位相同。
    """
    rng = np.random.default_rng(spec.seed)
    n, k, ticks, dt = spec.n_slices, spec.k_resources, spec.ticks, spec.tick_duration
    times = np.arange(ticks) * dt
    chain = spec.chain

    alloc_level = rng.uniform(0.1, 0.4, size=(n, k))
    util_level = rng.uniform(0.3, 0.5, size=k)
    if chain is not None:
        for (a, b), r in zip(chain.edges(), chain.resources):
            alloc_level[a, r] = rng.uniform(0.7, 0.9)
            alloc_level[b, r] = rng.uniform(0.7, 0.9)
            util_level[r] = rng.uniform(0.7, 0.8)
    allocations = alloc_level[:, :, np.newaxis] + rng.normal(0.0, ALLOC_NOISE_SD, size=(n, k, ticks))
    utilization = util_level[:, np.newaxis] + BACKGROUND_UTIL_SCALE * _ar_rows(rng, k, ticks, BACKGROUND_AR)
    for profile in spec.utilization_profiles:
        trace = _interp_profile(times, profile.points)
        if profile.noise_sd > 0:
            trace = trace + rng.normal(0.0, profile.noise_sd, size=ticks)
        utilization[profile.resource] = trace

    saturated = bool(
        allocations.min() < 0 or allocations.max() > 1 or utilization.min() < 0 or utilization.max() > 1
    )
    if saturated:
        logger.warning(f"场景 {spec.name}: 分配或利用率超出 [0, 1]，已截断")
    allocations = np.clip(allocations, 0.0, 1.0)
    utilization = np.clip(utilization, 0.0, 1.0)

    innovations = rng.standard_normal((n, ticks))
    for injection in spec.injections:
        innovations[injection.slice, injection.start_tick : injection.start_tick + injection.length] += (
            injection.magnitude
        )
    if chain is not None:
        # 链按跳序即为拓扑序
        for (a, b), lag, strength, r in zip(
            chain.edges(), chain.lags, chain.effective_strengths(), chain.resources
        ):
            if lag >= ticks:
                continue
            driver = innovations[a] / np.std(innovations[a])
            gain = allocations[a, r] * allocations[b, r] * special.expit(utilization[r] - GAIN_THRESHOLD)
            gain = gain / gain.mean() if gain.mean() > 0 else np.ones(ticks)
            innovations[b, lag:] += strength * gain[lag:] * driver[:-lag]

    latent = signal.lfilter([1.0], [1.0, -spec.ar_coefficient], innovations, axis=1)
    for confounder in spec.confounders:
        driver = zscore_normalize(utilization[confounder.resource])
        for s, strength in zip(confounder.slices, confounder.slice_strengths()):
            latent[s] += strength * driver

    standardized = np.vstack([zscore_normalize(row) for row in latent])
    noise_sd = float(np.sqrt(10.0 ** (-spec.snr_db / 10.0)))
    observed = standardized + rng.normal(0.0, noise_sd, size=(n, ticks))

    classes = spec.classes()
    latency = np.empty((n, ticks))
    throughput = np.empty((n, ticks))
    for i, cls in enumerate(classes):
        offset, scale = LATENCY_PROFILE[cls]
        latency[i] = offset + scale * observed[i]
        tp_base, tp_scale = THROUGHPUT_PROFILE[cls]
        throughput[i] = tp_base - tp_scale * observed[i]
    for profile in spec.signal_profiles:
        latency[profile.slice] = profile.offset + profile.scale * observed[profile.slice]
        if profile.points:
            latency[profile.slice] += _interp_profile(times, profile.points)

    gap_mask = None
    if spec.observability < 1.0 and ticks > 2:
        interior = np.arange(1, ticks - 1)
        n_drop = int(round((1.0 - spec.observability) * interior.size))
        if n_drop:
            dropped = np.sort(rng.choice(interior, size=n_drop, replace=False))
            kept = np.setdiff1d(np.arange(ticks), dropped)
            latency = _bridge_gaps(latency, dropped, kept)
            throughput = _bridge_gaps(throughput, dropped, kept)
            allocations = _bridge_gaps(allocations, dropped, kept)
            utilization = _bridge_gaps(utilization, dropped, kept)
            gap_mask = np.zeros((n, ticks), dtype=bool)
            gap_mask[:, dropped] = True

    window = TelemetryWindow.from_raw(
        latency,
        allocations,
        utilization,
        tick_duration=dt,
        window_start=0.0,
        slice_ids=spec.slice_ids(),
        resource_ids=spec.resource_ids(),
        gap_mask=gap_mask,
    )
    return GeneratedScenario(
        spec=spec,
        window=window,
        truth=_ground_truth(spec),
        extra_metrics={EXTRA_METRIC: throughput},
        saturated=saturated,
    )


def sub_seeds(seed: int, count: int) -> list[int]:
    """由批量种子派生 count 个独立的 64 位子种子"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def _confounded_slices(
    rng: np.random.Generator, n_slices: int, chain: ChainSpec, on_chain: bool
) -> list[int] | None:
    """
    抽取一对混杂切片，两者之间没有真实边

    on_chain 时首个切片取自攻击链，第二个切片与其在链上不相邻；否则两者都取旁观切片。
    无可选切片时返回 None。
    """
    if not on_chain:
        bystanders = [i for i in range(n_slices) if i not in chain.slices]
        if len(bystanders) < 2:
            return None
        return [int(s) for s in rng.choice(bystanders, size=2, replace=False)]
    edges = set(chain.edges())
    lead = int(rng.choice(chain.slices))
    followers = [
        i for i in range(n_slices) if i != lead and (lead, i) not in edges and (i, lead) not in edges
    ]
    if not followers:
        return None
    return [lead, int(rng.choice(followers))]


def draw_scenario(template: ScenarioSpec, index: int, sub_seed: int) -> ScenarioSpec:
    """在模板边界内随机抽取攻击链与混杂注入"""
    bounds = template.template or TemplateBounds()
    rng = np.random.default_rng(sub_seed)
    n, k = template.n_slices, template.k_resources

    length = int(rng.integers(bounds.chain_length[0], bounds.chain_length[1] + 1))
    length = min(length, n)
    slices = [int(s) for s in rng.choice(n, size=length, replace=False)]
    sophistication = str(rng.choice(bounds.sophistication))
    if sophistication == "advanced":
        lags = [bounds.lag_range[1]] * (length - 1)
    else:
        lags = [int(v) for v in rng.integers(bounds.lag_range[0], bounds.lag_range[1] + 1, size=length - 1)]
    chain = ChainSpec(
        slices=slices,
        lags=lags,
        strengths=[float(v) for v in rng.uniform(*bounds.strength_range, size=length - 1)],
        resources=[int(v) for v in rng.integers(0, k, size=length - 1)],
        sophistication=sophistication,
    )

    confounders = []
    n_confounders = int(rng.integers(bounds.confounders[0], bounds.confounders[1] + 1))
    for _ in range(n_confounders):
        members = _confounded_slices(rng, n, chain, bounds.confounder_on_chain)
        if members is None:
            break
        resource = int(rng.choice(chain.resources)) if bounds.confounder_on_chain else int(rng.integers(0, k))
        confounders.append(
            ConfounderSpec(
                resource=resource,
                slices=members,
                strength=float(rng.uniform(*bounds.confounder_strength)),
                loadings=[1.0, float(rng.uniform(*bounds.confounder_loading))],
            )
        )

    data = template.model_dump()
    data.update(
        name=f"{template.name}-{index:04d}",
        chain=chain.model_dump(),
        confounders=[c.model_dump() for c in confounders],
        seed=sub_seed,
        template=None,
    )
    return ScenarioSpec.from_data(data, f"{template.name}[{index}]")


def batch_generate(
    template: ScenarioSpec,
    count: int,
    seed: int,
    out_dir: Path | None = None,
    config: ModelConfig | None = None,
    jobs: int = 1,
) -> TrainingCorpus:
    """
    批量生成语料

    Args:
        template: 模板场景，template 字段给出随机化边界
        count: 场景数，≥ 1
        seed: 批量种子，各场景子种子由其派生
        out_dir: 给出时逐场景写目录并写语料清单
        config: 语料证据计算所用的分析配置
        jobs: 并行线程数，不影响输出

    Returns:
        TrainingCorpus
    """
    if count < 1:
        raise InputValidationError(f"场景数必须 ≥ 1: {count}")
    seeds = sub_seeds(seed, count)
    specs = [draw_scenario(template, m, s) for m, s in enumerate(seeds)]
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="Simulate-") as executor:
            generated = list(executor.map(generate, specs))
    else:
        generated = [generate(s) for s in specs]

    if out_dir is not None:
        from .scenario_store import write_corpus

        write_corpus(Path(out_dir), template, seed, generated)
    logger.info(f"批量生成完成: {count} 个场景, 种子 {seed}")
    return TrainingCorpus(
        [g.to_corpus_scenario(g.spec.name) for g in generated],
        config or ModelConfig(),
    )
