"""
资源争用强度
ρ_ij(t) = Σ_k w_k · A_ik(t) · A_jk(t) · σ(slope · (U_k,t − τ_k))，窗口内取算术平均
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..common.errors import InputValidationError
from ..learning.theta import ThetaParams
from ..telemetry.telemetry_window import TelemetryWindow


@dataclass(frozen=True)
class ContentionParams:
    """争用模型参数"""

    weights: tuple[float, ...]  # w_k，非负，不要求归一化
    thresholds: tuple[float, ...]  # τ_k ∈ [0, 1]
    sigmoid_slope: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if len(self.weights) != len(self.thresholds):
            raise InputValidationError("争用权重与阈值维度不一致")
        if any(w < 0 for w in self.weights):
            raise InputValidationError(f"争用权重必须非负: {self.weights}")
        if any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise InputValidationError(f"利用率阈值必须位于 [0, 1]: {self.thresholds}")
        if not self.sigmoid_slope > 0:
            raise InputValidationError(f"sigmoid 斜率必须为正: {self.sigmoid_slope}")

    @classmethod
    def from_theta(cls, theta: ThetaParams) -> ContentionParams:
        return cls(theta.weights, theta.thresholds, theta.sigmoid_slope)


def sigmoid(x):
    """logistic 函数 1/(1+e^{-x})"""
    return special.expit(x)


def utilization_stress(utilization: np.ndarray, params: ContentionParams) -> np.ndarray:
    """逐资源、逐 tick 的 w_k · σ(slope·(U − τ))，形状 K × T"""
    utilization = np.asarray(utilization, dtype=float)
    weights = np.asarray(params.weights)[:, np.newaxis]
    thresholds = np.asarray(params.thresholds)[:, np.newaxis]
    return weights * sigmoid(params.sigmoid_slope * (utilization - thresholds))


def contention_at_tick(
    alloc_i: Sequence[float],
    alloc_j: Sequence[float],
    util: Sequence[float],
    params: ContentionParams,
) -> float:
    """单个 tick 上两切片的争用强度"""
    alloc_i = np.asarray(alloc_i, dtype=float)
    alloc_j = np.asarray(alloc_j, dtype=float)
    util = np.asarray(util, dtype=float)
    k = len(params.weights)
    if not (alloc_i.shape == alloc_j.shape == util.shape == (k,)):
        raise InputValidationError(
            f"维度不匹配: alloc_i {alloc_i.shape}, alloc_j {alloc_j.shape}, util {util.shape}, K={k}"
        )
    stress = utilization_stress(util[:, np.newaxis], params)[:, 0]
    return float(np.sum((alloc_i * alloc_j) * stress))


def _check_pair(window: TelemetryWindow, i: int, j: int, params: ContentionParams) -> None:
    if not (0 <= i < window.n_slices and 0 <= j < window.n_slices) or i == j:
        raise InputValidationError(f"无效的切片对: ({i}, {j})，N={window.n_slices}")
    if len(params.weights) != window.k_resources:
        raise InputValidationError(f"争用参数维度 {len(params.weights)} 与资源数 {window.k_resources} 不一致")


def contention_series(window: TelemetryWindow, i: int, j: int, params: ContentionParams) -> np.ndarray:
    """窗口内逐 tick 的 ρ_ij(t)"""
    _check_pair(window, i, j, params)
    stress = utilization_stress(window.utilization, params)
    return np.sum((window.allocations[i] * window.allocations[j]) * stress, axis=0)


def contention_over_window(window: TelemetryWindow, i: int, j: int, params: ContentionParams) -> float:
    """ρ_ij(T)：逐 tick 争用强度的算术平均"""
    return float(np.mean(contention_series(window, i, j, params)))


def contention_matrix(window: TelemetryWindow, params: ContentionParams) -> np.ndarray:
    """
    全部切片对的窗口争用强度，N × N，对角线为 0

    先形成 A_i·A_j 的逐元素乘积，因此结果严格对称。
    """
    if len(params.weights) != window.k_resources:
        raise InputValidationError(f"争用参数维度 {len(params.weights)} 与资源数 {window.k_resources} 不一致")
    stress = utilization_stress(window.utilization, params)
    allocations = window.allocations
    products = allocations[:, np.newaxis, :, :] * allocations[np.newaxis, :, :, :]
    rho = np.sum(products * stress, axis=(2, 3)) / window.n_ticks
    np.fill_diagonal(rho, 0.0)
    return rho
