"""
遥测窗口数据模型
包含切片信号矩阵、资源分配张量、资源利用率矩阵，以及分析配置 ModelConfig
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..learning.theta import ThetaParams

DEFAULT_TICK_DURATION = 0.1  # 秒
DEFAULT_METRIC_COLUMN = "latency_ms"


def zscore_normalize(series: Sequence[float] | np.ndarray) -> np.ndarray:
    """
    z-score 标准化（样本标准差，ddof=1）

    常数序列映射为全零。

    Args:
        series: 实数序列，长度至少为 2

    Returns:
        标准化后的新数组
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise InputValidationError(f"标准化需要长度至少为 2 的一维序列，实际形状 {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputValidationError("序列包含非有限值，无法标准化")
    sd = float(np.std(x, ddof=1))
    if sd <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TelemetryWindow:
    """
    对齐后的遥测窗口

    slice_signals 为逐切片 z-score 后的信号；raw_signals 保留标准化前的原始值，
    用于序列化与窗口内重新标准化。所有数组在构造后只读。
    """

    slice_signals: np.ndarray  # N × T，标准化信号
    allocations: np.ndarray  # N × K × T，资源分配比例
    utilization: np.ndarray  # K × T，资源利用率
    tick_duration: float = DEFAULT_TICK_DURATION
    window_start: float = 0.0
    slice_ids: tuple[str, ...] = ()
    resource_ids: tuple[str, ...] = ()
    raw_signals: np.ndarray | None = None  # N × T，原始信号
    gap_mask: np.ndarray | None = None  # N × T，线性补齐的缺失点

    def __post_init__(self):
        signals = _frozen(self.slice_signals)
        allocations = _frozen(self.allocations)
        utilization = _frozen(self.utilization)
        if signals.ndim != 2:
            raise InputValidationError(f"切片信号必须为 N×T 矩阵，实际形状 {signals.shape}")
        n_slices, n_ticks = signals.shape
        if utilization.ndim != 2 or utilization.shape[1] != n_ticks:
            raise InputValidationError(
                f"利用率矩阵形状 {utilization.shape} 与信号的 tick 数 {n_ticks} 不一致"
            )
        k_resources = utilization.shape[0]
        if allocations.shape != (n_slices, k_resources, n_ticks):
            raise InputValidationError(
                f"分配张量形状 {allocations.shape} 应为 {(n_slices, k_resources, n_ticks)}"
            )
        if n_slices < 2:
            raise InputValidationError(f"窗口至少需要 2 个切片，实际 {n_slices}")
        if n_ticks < 2:
            raise InputValidationError(f"窗口至少需要 2 个 tick，实际 {n_ticks}")
        for name, array in (("切片信号", signals), ("资源分配", allocations), ("资源利用率", utilization)):
            if not np.all(np.isfinite(array)):
                raise InputValidationError(f"{name}包含非有限值")
        for name, array in (("资源分配", allocations), ("资源利用率", utilization)):
            if array.size and (array.min() < 0.0 or array.max() > 1.0):
                raise InputValidationError(
                    f"{name}越界: 取值范围 [{array.min():.6g}, {array.max():.6g}] 超出 [0, 1]"
                )
        if not self.tick_duration > 0:
            raise InputValidationError(f"tick 时长必须为正: {self.tick_duration}")

        raw = signals if self.raw_signals is None else _frozen(self.raw_signals)
        if raw.shape != signals.shape:
            raise InputValidationError(f"原始信号形状 {raw.shape} 与标准化信号不一致")
        gaps = None
        if self.gap_mask is not None:
            gaps = np.array(self.gap_mask, dtype=bool)
            if gaps.shape != signals.shape:
                raise InputValidationError(f"缺失标记形状 {gaps.shape} 与信号不一致")
            gaps.setflags(write=False)

        slice_ids = tuple(self.slice_ids) or tuple(f"s{i:02d}" for i in range(n_slices))
        resource_ids = tuple(self.resource_ids) or tuple(f"res{k}" for k in range(k_resources))
        if len(slice_ids) != n_slices or len(set(slice_ids)) != n_slices:
            raise InputValidationError(f"切片标识数量或唯一性不符: {slice_ids}")
        if len(resource_ids) != k_resources or len(set(resource_ids)) != k_resources:
            raise InputValidationError(f"资源标识数量或唯一性不符: {resource_ids}")

        object.__setattr__(self, "slice_signals", signals)
        object.__setattr__(self, "allocations", allocations)
        object.__setattr__(self, "utilization", utilization)
        object.__setattr__(self, "raw_signals", raw)
        object.__setattr__(self, "gap_mask", gaps)
        object.__setattr__(self, "slice_ids", slice_ids)
        object.__setattr__(self, "resource_ids", resource_ids)
        object.__setattr__(self, "tick_duration", float(self.tick_duration))
        object.__setattr__(self, "window_start", float(self.window_start))

    @classmethod
    def from_raw(
        cls,
        raw_signals: np.ndarray,
        allocations: np.ndarray,
        utilization: np.ndarray,
        **kwargs: Any,
    ) -> TelemetryWindow:
        """由原始信号构造窗口，逐切片做 z-score 标准化"""
        raw = np.asarray(raw_signals, dtype=float)
        if raw.ndim != 2:
            raise InputValidationError(f"原始信号必须为 N×T 矩阵，实际形状 {raw.shape}")
        signals = np.vstack([zscore_normalize(row) for row in raw]) if raw.size else raw
        return cls(signals, allocations, utilization, raw_signals=raw, **kwargs)

    @property
    def n_slices(self) -> int:
        return self.slice_signals.shape[0]

    @property
    def n_ticks(self) -> int:
        return self.slice_signals.shape[1]

    @property
    def k_resources(self) -> int:
        return self.utilization.shape[0]

    def reorder_slices(self, order: Sequence[int]) -> TelemetryWindow:
        """按给定顺序重排切片"""
        idx = np.asarray(order, dtype=int)
        if sorted(idx.tolist()) != list(range(self.n_slices)):
            raise InputValidationError(f"切片顺序不是一个排列: {list(order)}")
        return replace(
            self,
            slice_signals=self.slice_signals[idx],
            allocations=self.allocations[idx],
            raw_signals=self.raw_signals[idx],
            gap_mask=None if self.gap_mask is None else self.gap_mask[idx],
            slice_ids=tuple(self.slice_ids[i] for i in idx),
        )

    def describe(self) -> dict[str, Any]:
        return {
            "n_slices": self.n_slices,
            "k_resources": self.k_resources,
            "n_ticks": self.n_ticks,
            "tick_duration": self.tick_duration,
            "window_start": self.window_start,
            "slice_ids": list(self.slice_ids),
            "resource_ids": list(self.resource_ids),
        }


@dataclass(frozen=True)
class ModelConfig:
    """攻击溯源分析配置"""

    p: int = 5  # 目标自回归阶数
    q: int = 5  # 源切片滞后阶数
    window_ticks: int = 300  # 分析窗口长度 W
    window_start_tick: int = 0  # 分析窗口在输入序列中的起始 tick
    tau_causal: float = 0.42  # 边强度阈值
    alpha: float = 0.05  # 显著性水平
    theta: ThetaParams | None = None  # 为空时按资源数取缺省 θ
    metric_column: str = DEFAULT_METRIC_COLUMN  # 信号文件中作为切片标量信号的列
    condition_on_resources: bool = True  # 回归中是否加入资源利用率条件项
    bh_step_up: bool = False  # BH 校正是否启用累计最小值
    bootstrap_resamples: int = 200  # 逐跳置信区间的自助重采样次数，0 表示跳过
    onset_z: float = 2.0  # 活动起点检测阈值（z 单位）
    seed: int = 0  # 运行种子
    jobs: int = 1  # 成对检验的并行线程数

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise InputValidationError(f"滞后阶数必须为正整数: p={self.p}, q={self.q}")
        if self.window_ticks < 1:
            raise InputValidationError(f"窗口长度必须为正: {self.window_ticks}")
        if self.window_start_tick < 0:
            raise InputValidationError(f"窗口起始 tick 不能为负: {self.window_start_tick}")
        if not 0.0 < self.tau_causal < 1.0:
            raise InputValidationError(f"tau_causal 必须位于 (0, 1): {self.tau_causal}")
        if not 0.0 < self.alpha < 1.0:
            raise InputValidationError(f"alpha 必须位于 (0, 1): {self.alpha}")
        if self.bootstrap_resamples < 0:
            raise InputValidationError(f"自助重采样次数不能为负: {self.bootstrap_resamples}")
        if self.seed < 0:
            raise InputValidationError(f"种子必须为非负整数: {self.seed}")
        if self.jobs < 1:
            raise InputValidationError(f"并行线程数必须为正: {self.jobs}")
        if not self.metric_column:
            raise InputValidationError("指标列名不能为空")

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q)

    def min_ticks(self, k_resources: int) -> int:
        """F 检验分母自由度至少为 1 所需的最少 tick 数"""
        return self.max_lag + self.p + self.q + k_resources + 2

    def theta_for(self, k_resources: int) -> ThetaParams:
        if self.theta is None:
            return ThetaParams.default(k_resources)
        if self.theta.k_resources != k_resources:
            raise InputValidationError(
                f"θ 的资源数 {self.theta.k_resources} 与窗口资源数 {k_resources} 不一致"
            )
        return self.theta

    def validate_window(self, window: TelemetryWindow) -> None:
        """检查窗口规模是否满足本配置的回归需求"""
        k = window.k_resources if self.condition_on_resources else 0
        needed = self.min_ticks(k)
        if window.n_ticks < needed:
            raise InputValidationError(
                f"窗口 tick 数 {window.n_ticks} 不足，p={self.p}, q={self.q}, K={k} 时至少需要 {needed}"
            )
        if self.window_ticks <= self.p + self.q + k + 1:
            raise InputValidationError(
                f"窗口长度 W={self.window_ticks} 必须大于 p+q+K+1={self.p + self.q + k + 1}"
            )
        self.theta_for(window.k_resources)
        if self.theta is not None and self.theta.sigmoid_slope != 1.0:
            logger.warning(f"使用非缺省 sigmoid 斜率: {self.theta.sigmoid_slope}")

    def with_overrides(self, **overrides: Any) -> ModelConfig:
        valid = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in overrides.items() if k in valid})

    def to_dict(self) -> dict[str, Any]:
        result = asdict(self)
        result["theta"] = None if self.theta is None else self.theta.to_dict()
        return result

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        valid = {f.name for f in fields(cls)}
        filtered = {k: v for k, v in data.items() if k in valid}
        theta = filtered.get("theta")
        if isinstance(theta, dict):
            filtered["theta"] = ThetaParams.from_dict(theta)
        return cls(**filtered)


def extract_window(stream: TelemetryWindow, start_tick: int, config: ModelConfig) -> TelemetryWindow:
    """
    从长序列中截取分析窗口，并在窗口内重新标准化

    Args:
        stream: 完整遥测序列
        start_tick: 起始 tick
        config: 分析配置，提供窗口长度 W

    Returns:
        新的 TelemetryWindow
    """
    width = config.window_ticks
    if start_tick < 0 or start_tick + width > stream.n_ticks:
        raise InputValidationError(
            f"窗口越界: 起点 {start_tick} + 长度 {width} 超出序列长度 {stream.n_ticks}"
        )
    stop = start_tick + width
    return TelemetryWindow.from_raw(
        stream.raw_signals[:, start_tick:stop],
        stream.allocations[:, :, start_tick:stop],
        stream.utilization[:, start_tick:stop],
        tick_duration=stream.tick_duration,
        window_start=stream.window_start + start_tick * stream.tick_duration,
        slice_ids=stream.slice_ids,
        resource_ids=stream.resource_ids,
        gap_mask=None if stream.gap_mask is None else stream.gap_mask[:, start_tick:stop],
    )


def analysis_window(stream: TelemetryWindow, config: ModelConfig) -> TelemetryWindow:
    """
    按 window_start_tick 与 W 截取分析窗口

    起点为 0 且序列不长于 W 时原样返回；否则交给 extract_window，越界时报错。

    Examples:
        600 tick 的序列、起点 0、W=300 → 前 300 个 tick
    """
    if config.window_start_tick == 0 and stream.n_ticks <= config.window_ticks:
        return stream
    window = extract_window(stream, config.window_start_tick, config)
    logger.debug(
        f"截取分析窗口: tick [{config.window_start_tick}, {config.window_start_tick + config.window_ticks}) "
        f"/ {stream.n_ticks}"
    )
    return window
