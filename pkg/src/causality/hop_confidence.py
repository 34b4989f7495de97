"""
逐跳置信度与时间戳
点估计取 1 − p_adj，区间来自设计矩阵行的循环块自助重采样
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
from arch.bootstrap import CircularBlockBootstrap

from ..learning.theta import ThetaParams
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow
from .contention import ContentionParams, contention_series
from .fusion import MixingWeights, f_range, integrated_strength, phi_from_range
from .granger import build_designs, conditioning_matrix, pairwise_granger, resampled_f_stats

if TYPE_CHECKING:
    from .attribution import PairTestResult

LOWER_PERCENTILE = 2.5
UPPER_PERCENTILE = 97.5


def onset_tick(signal: np.ndarray, onset_z: float = 2.0) -> int | None:
    """标准化信号首次超过 onset_z 的 tick，未出现时返回 None"""
    above = np.flatnonzero(np.asarray(signal) > onset_z)
    return int(above[0]) if above.size else None


def onset_time(window: TelemetryWindow, slice_index: int, onset_z: float = 2.0) -> float:
    """切片活动起点的绝对时间，未检测到时取窗口起点"""
    tick = onset_tick(window.slice_signals[slice_index], onset_z)
    return window.window_start + (0 if tick is None else tick) * window.tick_duration


def hop_timestamp(edge: PairTestResult, window: TelemetryWindow, onset_z: float = 2.0) -> float:
    """
    边 (i → j) 的目标切片被波及的时间

    以源切片的活动起点为基准，加上滞后估计对应的时长。

    Examples:
        滞后 21、tick 0.1 s、起点 t=0 → 2.1 s
    """
    return onset_time(window, edge.source, onset_z) + edge.lag_estimate * window.tick_duration


def edge_seed(run_seed: int, source: int, target: int) -> np.random.SeedSequence:
    """由运行种子与边端点派生的固定种子"""
    return np.random.SeedSequence([run_seed, source, target])


def bootstrap_indices(n_rows: int, block: int, resamples: int, seed: np.random.SeedSequence) -> np.ndarray:
    """循环块自助法的行下标，形状 B × n_rows"""
    bs = CircularBlockBootstrap(block, np.arange(n_rows), seed=np.random.default_rng(seed))
    return np.vstack([data[0][0] for data in bs.bootstrap(resamples)])


def gamma_bootstrap(
    edge: PairTestResult,
    window: TelemetryWindow,
    config: ModelConfig,
    f_bounds: tuple[float, float],
    theta: ThetaParams,
) -> np.ndarray:
    """
    对一条边的 Γ 做 B 次重采样

    在已构造的设计矩阵上按长度 p 的循环块重抽行（目标值连同其滞后一起抽取），
    ρ 取同一批行对应 tick 的均值；F 的归一化范围固定为原窗口的范围。
    """
    source, target = edge.source, edge.target
    designs = build_designs(
        window.slice_signals[target],
        window.slice_signals[source],
        conditioning_matrix(window, config),
        config.p,
        config.q,
    )
    n_rows = designs.target.size
    rows = bootstrap_indices(n_rows, config.p, config.bootstrap_resamples, edge_seed(config.seed, source, target))
    f_values = resampled_f_stats(designs, rows, config.p, config.q)
    rho_series = contention_series(window, source, target, ContentionParams.from_theta(theta))
    rho_values = rho_series[window.n_ticks - n_rows :][rows].mean(axis=1)
    phi_values = phi_from_range(f_values, f_bounds, clip=True)
    return integrated_strength(phi_values, rho_values, MixingWeights(theta.omega1))


def hop_confidence(
    edge: PairTestResult,
    window: TelemetryWindow,
    config: ModelConfig,
    f_bounds: tuple[float, float] | None = None,
) -> tuple[float, tuple[float, float]]:
    """
    一条边的置信度

    Args:
        edge: 图中的边
        window: 该边所在的遥测窗口
        config: 分析配置，bootstrap_resamples 为 0 时区间退化为 [Γ, Γ]
        f_bounds: 原窗口的 (F_min, F_max)，为空时重新做全部成对检验求得

    Returns:
        (1 − p_adj, (Γ 的 2.5% 分位, 97.5% 分位))
    """
    point = float(np.clip(1.0 - edge.p_adj, 0.0, 1.0))
    if config.bootstrap_resamples == 0:
        return point, (edge.gamma, edge.gamma)
    if f_bounds is None:
        f_bounds = f_range([r.f_stat for r in pairwise_granger(window, config).values()])
    theta = config.theta_for(window.k_resources)
    gammas = gamma_bootstrap(edge, window, config, f_bounds, theta)
    low, high = np.percentile(gammas, [LOWER_PERCENTILE, UPPER_PERCENTILE])
    return point, (float(low), float(high))
