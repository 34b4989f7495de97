"""
测试公共夹具
小规模、固定种子的合成窗口，以及临时场景目录
"""

import numpy as np
import pytest

from src.learning.corpus import Scenario, TrainingCorpus
from src.telemetry.telemetry_window import ModelConfig, TelemetryWindow


def coupled_signals(n_slices: int, n_ticks: int, edges: dict, seed: int) -> np.ndarray:
    """
    白噪声切片，edges 中的 (i, j): (lag, coefficient) 给出 x_j[t] += c·x_i[t−lag]

    边需按拓扑序给出
    """
    rng = np.random.default_rng(seed)
    signals = rng.standard_normal((n_slices, n_ticks))
    for (i, j), (lag, coefficient) in edges.items():
        signals[j, lag:] += coefficient * signals[i, :-lag]
    return signals


def resource_tensors(n_slices: int, k_resources: int, n_ticks: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """位于 [0.2, 0.8] 的分配与利用率"""
    rng = np.random.default_rng(seed)
    allocations = rng.uniform(0.2, 0.8, size=(n_slices, k_resources, 1)) + rng.normal(
        0.0, 0.01, size=(n_slices, k_resources, n_ticks)
    )
    utilization = rng.uniform(0.3, 0.7, size=(k_resources, 1)) + rng.normal(0.0, 0.05, size=(k_resources, n_ticks))
    return np.clip(allocations, 0.0, 1.0), np.clip(utilization, 0.0, 1.0)


def make_window(
    n_slices: int = 3,
    k_resources: int = 1,
    n_ticks: int = 300,
    edges: dict | None = None,
    seed: int = 0,
) -> TelemetryWindow:
    signals = coupled_signals(n_slices, n_ticks, edges or {}, seed)
    allocations, utilization = resource_tensors(n_slices, k_resources, n_ticks, seed + 1000)
    return TelemetryWindow.from_raw(signals, allocations, utilization)


@pytest.fixture
def small_config() -> ModelConfig:
    return ModelConfig(p=2, q=2, bootstrap_resamples=0)


@pytest.fixture
def planted_window() -> TelemetryWindow:
    """切片 0 以滞后 1 驱动切片 1，切片 2 独立"""
    return make_window(n_slices=3, k_resources=1, n_ticks=300, edges={(0, 1): (1, 0.8)}, seed=11)


def make_corpus(count: int, n_slices: int, k_resources: int, seed: int, config: ModelConfig) -> TrainingCorpus:
    """每个场景在一条随机有向边上植入耦合，真实边集为该边"""
    rng = np.random.default_rng(seed)
    scenarios = []
    for m in range(count):
        source, target = (int(v) for v in rng.choice(n_slices, size=2, replace=False))
        window = make_window(
            n_slices=n_slices,
            k_resources=k_resources,
            n_ticks=120,
            edges={(source, target): (1, 0.7)},
            seed=int(rng.integers(0, 2**31)),
        )
        scenarios.append(Scenario(f"m{m:03d}", window, frozenset({(source, target)})))
    return TrainingCorpus(scenarios, config)


@pytest.fixture
def small_corpus(small_config) -> TrainingCorpus:
    return make_corpus(count=4, n_slices=3, k_resources=2, seed=5, config=small_config)


@pytest.fixture
def case_study_dir(tmp_path):
    from src.simulator.generator import generate
    from src.simulator.presets import case_study_preset
    from src.simulator.scenario_store import write_scenario

    return write_scenario(tmp_path / "case_study", generate(case_study_preset()))
