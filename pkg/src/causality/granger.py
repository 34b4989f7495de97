"""
资源条件化 Granger 检验
构造无约束 / 约束两个嵌套回归，计算增强 F 统计量与 p 值
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..stats.linreg import FitResult, f_tail, ols_fit
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow, zscore_normalize


@dataclass(frozen=True)
class DesignPair:
    """嵌套回归的设计矩阵"""

    unrestricted: np.ndarray  # [Y 滞后 1..p | X 滞后 1..q | Z 同期]
    restricted: np.ndarray  # [Y 滞后 1..p | Z 同期]
    target: np.ndarray  # Y_t，t = max(p,q) .. T-1


@dataclass(frozen=True)
class GrangerResult:
    """单个有序切片对的检验结果"""

    f_stat: float
    p_value: float
    unrestricted: FitResult | None  # 常数信号时为空
    restricted: FitResult | None
    lag_estimate: int  # |β_j| 最大的滞后 j
    dof: tuple[int, int]  # (q, T_eff - p - q - K - 1)

    @property
    def degenerate(self) -> bool:
        return self.unrestricted is None


def _lag_block(series: np.ndarray, lags: int, start: int) -> np.ndarray:
    """第 j 列为 series[t - j]，t 从 start 到末尾"""
    n_ticks = series.shape[-1]
    rows = np.arange(start, n_ticks)[:, np.newaxis] - np.arange(1, lags + 1)[np.newaxis, :]
    return series[..., rows]


def _as_conditioning(z: np.ndarray | None, n_ticks: int) -> np.ndarray:
    if z is None:
        return np.empty((0, n_ticks))
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[np.newaxis, :]
    if z.ndim != 2 or z.shape[1] != n_ticks:
        raise InputValidationError(f"条件变量矩阵形状 {z.shape} 应为 K×{n_ticks}")
    return z


def _check_orders(n_ticks: int, k_resources: int, p: int, q: int) -> None:
    if p < 1:
        raise InputValidationError(f"目标自回归阶数 p 必须 ≥ 1: {p}")
    if q < 1:
        raise InputValidationError(f"源滞后阶数 q 必须 ≥ 1: {q}")
    if n_ticks <= max(p, q) + k_resources + 1:
        raise InputValidationError(
            f"序列长度 {n_ticks} 不足: 需大于 max(p,q)+K+1 = {max(p, q) + k_resources + 1}"
        )


def build_designs(
    y: np.ndarray, x: np.ndarray, z: np.ndarray | None, p: int, q: int
) -> DesignPair:
    """
    构造嵌套回归设计矩阵（不含截距）

    Args:
        y: 目标序列，长度 T
        x: 源序列，长度 T
        z: 条件变量 K×T，可为空
        p: 目标自回归阶数
        q: 源滞后阶数

    Returns:
        DesignPair，有效样本数为 T - max(p, q)
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or x.shape != y.shape:
        raise InputValidationError(f"y 与 x 必须为等长一维序列: {y.shape} vs {x.shape}")
    n_ticks = y.size
    z = _as_conditioning(z, n_ticks)
    _check_orders(n_ticks, z.shape[0], p, q)
    start = max(p, q)
    y_lags = _lag_block(y, p, start)
    x_lags = _lag_block(x, q, start)
    z_now = z[:, start:].T
    return DesignPair(
        unrestricted=np.hstack([y_lags, x_lags, z_now]),
        restricted=np.hstack([y_lags, z_now]),
        target=y[start:],
    )


def restricted_fit(y: np.ndarray, z: np.ndarray | None, p: int, q: int) -> FitResult:
    """只含目标自身滞后与条件变量的约束回归，与源切片无关，可在成对检验间复用"""
    y = np.asarray(y, dtype=float)
    z = _as_conditioning(z, y.size)
    _check_orders(y.size, z.shape[0], p, q)
    start = max(p, q)
    design = np.hstack([_lag_block(y, p, start), z[:, start:].T])
    return ols_fit(design, y[start:])


def f_statistic(rss_restricted: float, rss_unrestricted: float, q: int, dof_denominator: int) -> float:
    """增强 F 统计量 ((RSS_R - RSS_U)/q) / (RSS_U/d2)"""
    if dof_denominator < 1:
        raise InputValidationError(f"F 检验分母自由度必须 ≥ 1: {dof_denominator}")
    numerator = max(rss_restricted - rss_unrestricted, 0.0) / q
    denominator = max(rss_unrestricted, np.finfo(float).tiny) / dof_denominator
    return float(numerator / denominator)


def _is_constant(series: np.ndarray) -> bool:
    return bool(np.ptp(series) == 0.0)


def granger_from_series(
    y: np.ndarray,
    x: np.ndarray,
    z: np.ndarray | None,
    p: int,
    q: int,
    cached_restricted: FitResult | None = None,
) -> GrangerResult:
    """
    在给定序列上执行条件化 Granger 检验

    常数源或常数目标按约定返回 F=0、p=1。

    Args:
        cached_restricted: 同一目标已拟合的约束回归
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    z = _as_conditioning(z, y.size)
    k_resources = z.shape[0]
    designs = build_designs(y, x, z, p, q)
    dof_denominator = designs.target.size - p - q - k_resources - 1
    if dof_denominator < 1:
        raise InputValidationError(
            f"有效样本 {designs.target.size} 不足以支撑 p={p}, q={q}, K={k_resources} 的 F 检验"
        )
    if _is_constant(y) or _is_constant(x):
        return GrangerResult(0.0, 1.0, None, None, 1, (q, dof_denominator))

    fit_r = cached_restricted if cached_restricted is not None else ols_fit(designs.restricted, designs.target)
    fit_u = ols_fit(designs.unrestricted, designs.target)
    f_stat = f_statistic(fit_r.rss, fit_u.rss, q, dof_denominator)
    beta = fit_u.coefficients[p : p + q]
    return GrangerResult(
        f_stat=f_stat,
        p_value=f_tail(f_stat, q, dof_denominator),
        unrestricted=fit_u,
        restricted=fit_r,
        lag_estimate=int(np.argmax(np.abs(beta))) + 1,
        dof=(q, dof_denominator),
    )


def conditioning_matrix(window: TelemetryWindow, config: ModelConfig) -> np.ndarray:
    """
    窗口内逐行标准化的资源利用率，作为条件变量 Z

    回归不含截距，Z 必须在窗口内中心化；窗口内恒定的资源行剔除（标准化后为零列）。

    Returns:
        K_eff × T，K_eff ≤ K；不做条件化时为 0 × T
    """
    if not config.condition_on_resources or window.k_resources == 0:
        return np.empty((0, window.n_ticks))
    utilization = window.utilization
    varying = np.ptp(utilization, axis=1) > 0.0
    if not varying.all():
        dropped = [window.resource_ids[k] for k in np.flatnonzero(~varying)]
        logger.debug(f"资源利用率在窗口内恒定，不参与条件化: {dropped}")
    if not varying.any():
        return np.empty((0, window.n_ticks))
    return np.vstack([zscore_normalize(row) for row in utilization[varying]])


def enhanced_granger_test(
    window: TelemetryWindow, source: int, target: int, config: ModelConfig
) -> GrangerResult:
    """
    对窗口中的有序切片对 (source → target) 执行增强 Granger 检验

    Args:
        window: 遥测窗口
        source: 源切片下标
        target: 目标切片下标
        config: 分析配置（p, q, 是否以资源利用率为条件）

    Returns:
        GrangerResult
    """
    n_slices = window.n_slices
    if not (0 <= source < n_slices and 0 <= target < n_slices):
        raise InputValidationError(f"切片下标越界: source={source}, target={target}, N={n_slices}")
    if source == target:
        raise InputValidationError(f"源切片与目标切片相同: {source}")
    return granger_from_series(
        window.slice_signals[target],
        window.slice_signals[source],
        conditioning_matrix(window, config),
        config.p,
        config.q,
    )


def _tests_for_target(
    window: TelemetryWindow, target: int, config: ModelConfig
) -> list[tuple[tuple[int, int], GrangerResult]]:
    y = window.slice_signals[target]
    z = conditioning_matrix(window, config)
    cached = None
    if not _is_constant(y):
        cached = restricted_fit(y, z, config.p, config.q)
    results = []
    for source in range(window.n_slices):
        if source == target:
            continue
        result = granger_from_series(y, window.slice_signals[source], z, config.p, config.q, cached)
        results.append(((source, target), result))
    return results


def pairwise_granger(window: TelemetryWindow, config: ModelConfig) -> dict[tuple[int, int], GrangerResult]:
    """
    对全部 N(N-1) 个有序切片对执行检验

    同一目标的约束回归只拟合一次；jobs > 1 时按目标切片并行，结果按 (source, target) 行优先顺序返回，
    与执行顺序无关。
    """
    targets = range(window.n_slices)
    if config.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(
            max_workers=config.jobs, thread_name_prefix="Granger-"
        ) as executor:
            batches = list(executor.map(lambda t: _tests_for_target(window, t, config), targets))
    else:
        batches = [_tests_for_target(window, t, config) for t in targets]

    collected = dict(pair for batch in batches for pair in batch)
    ordered = {
        (i, j): collected[(i, j)]
        for i in range(window.n_slices)
        for j in range(window.n_slices)
        if i != j
    }
    logger.debug(f"成对 Granger 检验完成: {len(ordered)} 个有序对")
    return ordered


def _batched_rss(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    q_mat, _ = np.linalg.qr(design)
    fitted = np.einsum("bnc,bc->bn", q_mat, np.einsum("bnc,bn->bc", q_mat, target))
    residuals = target - fitted
    return np.einsum("bn,bn->b", residuals, residuals)


def resampled_f_stats(designs: DesignPair, rows: np.ndarray, p: int, q: int) -> np.ndarray:
    """
    按给定行下标重抽设计矩阵的行，批量计算 F 统计量（堆叠 QR，不做秩检查）

    每一行同时携带目标值与其滞后，重抽后滞后结构保持不变。

    Args:
        designs: build_designs 的结果
        rows: B × n 行下标，n 为有效样本数
        p: 目标自回归阶数
        q: 源滞后阶数

    Returns:
        长度 B 的 F 统计量；重抽后目标或源滞后块恒定时为 0
    """
    rows = np.asarray(rows, dtype=int)
    n_rows = designs.target.size
    if rows.ndim != 2 or rows.shape[1] != n_rows:
        raise InputValidationError(f"行下标形状 {rows.shape} 应为 B×{n_rows}")
    k_resources = designs.restricted.shape[1] - p
    dof_denominator = n_rows - p - q - k_resources - 1
    if dof_denominator < 1:
        raise InputValidationError(f"F 检验分母自由度必须 ≥ 1: {dof_denominator}")
    target = designs.target[rows]
    unrestricted = designs.unrestricted[rows]
    rss_u = _batched_rss(unrestricted, target)
    rss_r = _batched_rss(designs.restricted[rows], target)
    numerator = np.maximum(rss_r - rss_u, 0.0) / q
    denominator = np.maximum(rss_u, np.finfo(float).tiny) / dof_denominator
    f_stats = numerator / denominator
    source_lags = unrestricted[:, :, p : p + q]
    constant = (np.ptp(target, axis=1) == 0.0) | np.all(np.ptp(source_lags, axis=1) == 0.0, axis=1)
    f_stats[constant] = 0.0
    return f_stats
