"""
线性回归统计内核
提供 OLS 拟合（列主元 QR 分解）、F 分布尾概率以及 Benjamini-Hochberg 校正
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special, stats

from ..common.errors import InputValidationError, RankDeficiencyError

# 秩判定容差：相对于最大列范数
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class FitResult:
    """OLS 拟合结果"""

    coefficients: np.ndarray  # 回归系数，顺序与设计矩阵列一致
    rss: float  # 残差平方和
    residuals: np.ndarray  # 残差，长度为有效样本数
    dof_resid: int  # 残差自由度 = 有效样本数 - 回归变量数


def ols_fit(design: np.ndarray, target: Sequence[float] | np.ndarray) -> FitResult:
    """
    普通最小二乘拟合

    Args:
        design: 设计矩阵，形状 (n, c)，一维输入视为单列
        target: 目标序列，长度 n

    Returns:
        FitResult

    Raises:
        InputValidationError: 行数不大于列数或维度不匹配
        RankDeficiencyError: 设计矩阵列秩不足
    """
    x_mat = np.asarray(design, dtype=float)
    if x_mat.ndim == 1:
        x_mat = x_mat[:, np.newaxis]
    y = np.asarray(target, dtype=float)
    n_rows, n_cols = x_mat.shape
    if y.shape != (n_rows,):
        raise InputValidationError(f"目标序列长度 {y.shape} 与设计矩阵行数 {n_rows} 不一致")
    if n_rows <= n_cols:
        raise InputValidationError(f"样本数不足: 行数 {n_rows} 必须大于列数 {n_cols}")

    col_norms = np.linalg.norm(x_mat, axis=0)
    largest = float(col_norms.max()) if n_cols else 0.0
    q_mat, r_mat, pivots = linalg.qr(x_mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    rank = int(np.sum(diag > RANK_TOLERANCE * largest)) if largest > 0 else 0
    if rank < n_cols:
        raise RankDeficiencyError(f"设计矩阵列秩不足: 秩 {rank} < 列数 {n_cols}")

    beta_pivoted = linalg.solve_triangular(r_mat, q_mat.T @ y)
    coefficients = np.empty(n_cols)
    coefficients[pivots] = beta_pivoted
    residuals = y - x_mat @ coefficients
    return FitResult(
        coefficients=coefficients,
        rss=float(residuals @ residuals),
        residuals=residuals,
        dof_resid=n_rows - n_cols,
    )


def _check_f_args(f_value: float, d1: int, d2: int) -> None:
    if d1 < 1 or d2 < 1:
        raise InputValidationError(f"无效的自由度: d1={d1}, d2={d2}")
    if np.isnan(f_value) or f_value < 0:
        raise InputValidationError(f"F 值必须为非负数: {f_value}")


def f_tail(f_value: float, d1: int, d2: int) -> float:
    """F(d1, d2) 分布的上尾概率 P(F > f_value)"""
    _check_f_args(f_value, d1, d2)
    if np.isinf(f_value):
        return 0.0
    # fdtrc 基于正则化不完全 Beta 函数
    return float(np.clip(special.fdtrc(d1, d2, f_value), 0.0, 1.0))


def f_cdf(f_value: float, d1: int, d2: int) -> float:
    """F(d1, d2) 分布的下尾概率 P(F ≤ f_value)"""
    _check_f_args(f_value, d1, d2)
    if np.isinf(f_value):
        return 1.0
    return float(np.clip(special.fdtr(d1, d2, f_value), 0.0, 1.0))


def bh_adjust(
    p_values: Sequence[float] | np.ndarray, m: int, step_up: bool = False
) -> np.ndarray:
    """
    Benjamini-Hochberg 校正

    默认逐项按 p·m/rank 计算（rank 为升序秩，并列取最小秩），并截断到 1.0；
    step_up=True 时额外做教科书式的从大到小累计最小值。

    Args:
        p_values: 原始 p 值
        m: 检验族大小，不得小于提供的 p 值个数
        step_up: 是否启用累计最小值单调化

    Returns:
        与输入同序的校正后 p 值
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise InputValidationError("p 值必须为一维序列")
    if np.any(~np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise InputValidationError("p 值必须位于 [0, 1] 区间")
    if m < 1 or m < p.size:
        raise InputValidationError(f"检验族大小 m={m} 小于 p 值个数 {p.size}")
    if p.size == 0:
        return p.copy()

    if not step_up:
        ranks = stats.rankdata(p, method="min")
        return np.minimum(p * m / ranks, 1.0)

    order = np.argsort(p, kind="stable")
    positional = np.arange(1, p.size + 1)
    scaled = p[order] * m / positional
    scaled = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.empty_like(p)
    adjusted[order] = np.minimum(scaled, 1.0)
    return adjusted
