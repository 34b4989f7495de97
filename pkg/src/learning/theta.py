"""
可学习参数模块
θ = {w_k, τ_k, ω_1}，ω_2 = 1 - ω_1；提供约束空间与自由参数空间之间的重参数化
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy import special

from astrbot.api import logger

from ..common.errors import InputValidationError

# 默认混合权重
DEFAULT_OMEGA1 = 0.67
# 重参数化时阈值与 ω_1 的截断范围
_LOGIT_EPS = 1e-9


@dataclass(frozen=True)
class ThetaParams:
    """
    贡献权重 w、利用率阈值 τ 与统计证据混合权重 ω_1

    weights 不要求归一化；thresholds 与 omega1 位于 [0, 1]。
    sigmoid_slope 不参与学习，仅随参数一起持久化。
    """

    weights: tuple[float, ...]  # 各资源关键度权重 w_k
    thresholds: tuple[float, ...]  # 各资源利用率阈值 τ_k
    omega1: float = DEFAULT_OMEGA1  # 统计证据权重 ω_1
    sigmoid_slope: float = 1.0  # sigmoid 斜率

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if len(self.weights) != len(self.thresholds):
            raise InputValidationError(
                f"权重个数 {len(self.weights)} 与阈值个数 {len(self.thresholds)} 不一致"
            )
        if any(not np.isfinite(w) or w < 0 for w in self.weights):
            raise InputValidationError(f"资源权重必须为非负有限值: {self.weights}")
        if any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise InputValidationError(f"利用率阈值必须位于 [0, 1]: {self.thresholds}")
        if not 0.0 <= self.omega1 <= 1.0:
            raise InputValidationError(f"ω_1 必须位于 [0, 1]: {self.omega1}")
        if not self.sigmoid_slope > 0:
            raise InputValidationError(f"sigmoid 斜率必须为正: {self.sigmoid_slope}")

    @property
    def omega2(self) -> float:
        return 1.0 - self.omega1

    @property
    def k_resources(self) -> int:
        return len(self.weights)

    @classmethod
    def default(cls, k_resources: int, sigmoid_slope: float = 1.0) -> ThetaParams:
        """缺省参数：w 均匀、τ=0.5、ω_1=0.67"""
        if k_resources < 0:
            raise InputValidationError(f"资源数不能为负: {k_resources}")
        weight = 1.0 / k_resources if k_resources else 0.0
        return cls(
            weights=(weight,) * k_resources,
            thresholds=(0.5,) * k_resources,
            omega1=DEFAULT_OMEGA1,
            sigmoid_slope=sigmoid_slope,
        )

    def with_omega1(self, omega1: float) -> ThetaParams:
        return replace(self, omega1=float(omega1))

    def constrained_vector(self) -> np.ndarray:
        """约束空间向量 [w..., τ..., ω_1]，用于 L2 惩罚"""
        return np.concatenate([self.weights, self.thresholds, [self.omega1]])

    def to_free(self) -> np.ndarray:
        """映射到自由参数空间：w=softplus(a)，τ=logistic(b)，ω_1=logistic(c)"""
        w = np.maximum(np.asarray(self.weights, dtype=float), 1e-12)
        # softplus 的逆: log(exp(w) - 1)
        a = np.where(w > 30.0, w, np.log(np.expm1(w)))
        b = special.logit(np.clip(self.thresholds, _LOGIT_EPS, 1.0 - _LOGIT_EPS))
        c = special.logit(np.clip(self.omega1, _LOGIT_EPS, 1.0 - _LOGIT_EPS))
        return np.concatenate([a, b, [c]])

    @classmethod
    def from_free(cls, free: np.ndarray, sigmoid_slope: float = 1.0) -> ThetaParams:
        """由自由参数向量构造，约束天然满足"""
        free = np.asarray(free, dtype=float)
        k = (free.size - 1) // 2
        if free.size != 2 * k + 1:
            raise InputValidationError(f"自由参数向量长度 {free.size} 不合法")
        return cls(
            weights=tuple(np.logaddexp(0.0, free[:k])),
            thresholds=tuple(special.expit(free[k : 2 * k])),
            omega1=float(special.expit(free[-1])),
            sigmoid_slope=sigmoid_slope,
        )

    def to_dict(self) -> dict[str, Any]:
        result = asdict(self)
        result["weights"] = list(self.weights)
        result["thresholds"] = list(self.thresholds)
        result["omega2"] = self.omega2
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ThetaParams:
        # 只保留 ThetaParams 支持的字段，omega2 由 omega1 推出
        valid_fields = {"weights", "thresholds", "omega1", "sigmoid_slope"}
        filtered = {k: v for k, v in data.items() if k in valid_fields}
        missing = {"weights", "thresholds"} - filtered.keys()
        if missing:
            raise InputValidationError(f"θ 缺少字段: {sorted(missing)}")
        return cls(**filtered)

    def save(self, path: Path, extra: dict[str, Any] | None = None) -> None:
        """以 JSON 保存 θ（浮点数保留 repr 全精度）"""
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        logger.info(f"θ 已保存: {path}")

    @classmethod
    def load(cls, path: Path) -> ThetaParams:
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InputValidationError(
                    f"θ 文件 {path} 解析失败: line {e.lineno} column {e.colno}: {e.msg}"
                ) from e
        if not isinstance(data, dict):
            raise InputValidationError(f"θ 文件 {path} 顶层必须是对象")
        return cls.from_dict(data)
