"""
证据融合
φ(F) 在窗口内做最小-最大归一化，Γ = ω_1·φ + ω_2·ρ
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping
from dataclasses import dataclass

import numpy as np

from astrbot.api import logger

from ..common.errors import InputValidationError

# F 取值范围小于该值时视为退化，φ 统一取 0.5
DEGENERATE_RANGE = 1e-12
NEUTRAL_PHI = 0.5


@dataclass(frozen=True)
class MixingWeights:
    """混合权重，omega2 始终由 1 − omega1 给出"""

    omega1: float

    def __post_init__(self):
        if not 0.0 <= self.omega1 <= 1.0:
            raise InputValidationError(f"ω_1 必须位于 [0, 1]: {self.omega1}")

    @property
    def omega2(self) -> float:
        return 1.0 - self.omega1


def f_range(f_values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(f_values, dtype=float)
    if values.size == 0:
        raise InputValidationError("F 统计量集合为空，无法归一化")
    return float(values.min()), float(values.max())


def phi_from_range(f_values: np.ndarray, bounds: tuple[float, float], clip: bool = False) -> np.ndarray:
    """按给定 (F_min, F_max) 计算 φ；范围退化时返回 0.5"""
    f_min, f_max = bounds
    values = np.asarray(f_values, dtype=float)
    if f_max - f_min < DEGENERATE_RANGE:
        return np.full_like(values, NEUTRAL_PHI)
    phi = (values - f_min) / (f_max - f_min)
    return np.clip(phi, 0.0, 1.0) if clip else phi


def normalize_f_array(f_values: np.ndarray) -> np.ndarray:
    """数组形式的 φ 归一化"""
    bounds = f_range(f_values)
    if bounds[1] - bounds[0] < DEGENERATE_RANGE:
        logger.debug("窗口内 F 统计量范围退化，φ 统一取 0.5")
    return phi_from_range(f_values, bounds)


def normalize_f(f_values: Mapping[Hashable, float]) -> dict[Hashable, float]:
    """
    对有序切片对的 F 统计量做窗口内归一化

    Args:
        f_values: 有序对 → F

    Returns:
        有序对 → φ ∈ [0, 1]
    """
    if not f_values:
        raise InputValidationError("F 统计量集合为空，无法归一化")
    keys = list(f_values)
    phi = normalize_f_array(np.array([f_values[k] for k in keys], dtype=float))
    return {k: float(v) for k, v in zip(keys, phi)}


def integrated_strength(phi, rho, weights: MixingWeights):
    """Γ = ω_1·φ + ω_2·ρ，支持标量与数组"""
    gamma = weights.omega1 * np.asarray(phi, dtype=float) + weights.omega2 * np.asarray(rho, dtype=float)
    return float(gamma) if gamma.ndim == 0 else gamma
