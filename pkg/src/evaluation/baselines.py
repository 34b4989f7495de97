"""
相关性基线
按滞后互相关建图，用于对照资源条件化检验在混杂场景下的误报
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from astrbot.api import logger

from ..causality.attribution import CausalGraph, PairTestResult
from ..causality.hop_confidence import onset_time
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow


def lagged_correlations(signals: np.ndarray, max_lag: int) -> np.ndarray:
    """
    逐滞后的互相关矩阵，形状 L × N × N

    元素 [ℓ-1, i, j] 为 corr(x_i[t−ℓ], x_j[t])
    """
    n_slices, n_ticks = signals.shape
    result = np.zeros((max_lag, n_slices, n_slices))
    for lag in range(1, max_lag + 1):
        leading = signals[:, : n_ticks - lag]
        lagging = signals[:, lag:]
        corr = np.corrcoef(np.vstack([leading, lagging]))[:n_slices, n_slices:]
        result[lag - 1] = np.nan_to_num(corr, nan=0.0)
    return result


def fisher_p_value(r: np.ndarray, n: np.ndarray) -> np.ndarray:
    """|r| 的双侧 Fisher z 检验 p 值"""
    r = np.clip(np.abs(r), 0.0, 1.0 - 1e-15)
    z = np.arctanh(r) * np.sqrt(np.maximum(n - 3, 1))
    return 2.0 * stats.norm.sf(z)


def correlation_baseline(window: TelemetryWindow, config: ModelConfig) -> CausalGraph:
    """
    滞后互相关基线

    对每个有序对取 1..q 滞后上 |r| 的最大值，Fisher 变换得到 p 值并对 q 个滞后做 Bonferroni
    校正，p < α 时连边。边上 gamma/phi 记录 |r|，f_stat 记录 Fisher z。
    """
    q = config.q
    signals = window.slice_signals
    correlations = lagged_correlations(signals, q)
    best_lag_index = np.argmax(np.abs(correlations), axis=0)
    best_r = np.take_along_axis(np.abs(correlations), best_lag_index[np.newaxis], axis=0)[0]
    sample_sizes = window.n_ticks - (best_lag_index + 1)
    p_values = np.minimum(fisher_p_value(best_r, sample_sizes) * q, 1.0)

    edges = {}
    for i in range(window.n_slices):
        source_onset = onset_time(window, i, config.onset_z)
        for j in range(window.n_slices):
            if i == j or not p_values[i, j] < config.alpha:
                continue
            lag = int(best_lag_index[i, j]) + 1
            r = float(best_r[i, j])
            edges[(i, j)] = PairTestResult(
                source=i,
                target=j,
                f_stat=float(np.arctanh(min(r, 1.0 - 1e-15)) * np.sqrt(max(sample_sizes[i, j] - 3, 1))),
                p_value=float(p_values[i, j]),
                p_adj=float(p_values[i, j]),
                rho=0.0,
                phi=r,
                gamma=r,
                lag_estimate=lag,
                onset=source_onset + lag * window.tick_duration,
                source_onset=source_onset,
            )
    logger.debug(f"相关性基线: {len(edges)} 条边")
    return CausalGraph(nodes=window.slice_ids, edges=edges)
