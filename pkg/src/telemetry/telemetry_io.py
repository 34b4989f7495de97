"""
遥测文件读写模块
负责信号 CSV 与分配 CSV 的校验、解析（pandas）以及反向序列化
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from astrbot.api import logger

from ..common.errors import InputValidationError
from .telemetry_window import DEFAULT_TICK_DURATION, ModelConfig, TelemetryWindow

SIGNAL_KEY_COLUMNS = ("tick", "slice_id")
ALLOCATION_COLUMNS = ("tick", "slice_id", "resource_id", "allocation", "utilization")
GAP_COLUMN = "gap"
# 至少 9 位有效数字；17 位保证浮点数逐位往返
FLOAT_FORMAT = "%.17g"


def _read_csv(path: Path, text_columns: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"文件不存在: {path}")
    try:
        # 默认解析器末位可能差 1 ulp
        return pd.read_csv(
            path, comment="#", dtype={c: str for c in text_columns}, float_precision="round_trip"
        )
    except pd.errors.ParserError as e:
        raise InputValidationError(f"CSV 解析失败 {path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise InputValidationError(f"CSV 文件为空: {path}") from e


def _require_columns(frame: pd.DataFrame, required: tuple[str, ...], path: Path) -> None:
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputValidationError(f"表头不符 {path}: 缺少列 {missing}，实际列 {list(frame.columns)}")


def _dense_ticks(ticks: pd.Series, path: Path) -> int:
    unique_ticks = np.sort(ticks.unique())
    n_ticks = unique_ticks.size
    if n_ticks == 0 or not np.array_equal(unique_ticks, np.arange(n_ticks)):
        raise InputValidationError(f"tick 必须从 0 开始连续编号: {path}")
    return int(n_ticks)


def _allocation_tensors(
    allocations: pd.DataFrame, slice_ids: tuple[str, ...], n_ticks: int, allocation_file: Path
) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """长表分配数据 -> (resource_ids, N×K×T 分配, K×T 利用率)；仅有表头时 K = 0"""
    if allocations.empty:
        return (), np.zeros((len(slice_ids), 0, n_ticks)), np.zeros((0, n_ticks))
    key = ["slice_id", "resource_id", "tick"]
    if allocations.duplicated(key).any():
        raise InputValidationError(f"分配文件存在重复的 (tick, slice_id, resource_id) 行: {allocation_file}")
    alloc_ticks = _dense_ticks(allocations["tick"], allocation_file)
    if alloc_ticks != n_ticks:
        raise InputValidationError(
            f"tick 数不一致: 信号文件 {n_ticks} 个，分配文件 {alloc_ticks} 个"
        )
    alloc_slices = set(allocations["slice_id"].astype(str))
    if alloc_slices != set(slice_ids):
        raise InputValidationError(
            f"两个文件的切片集合不一致: 仅信号 {sorted(set(slice_ids) - alloc_slices)}, "
            f"仅分配 {sorted(alloc_slices - set(slice_ids))}"
        )
    resource_ids = tuple(str(r) for r in pd.unique(allocations["resource_id"]))
    values = allocations[["allocation", "utilization"]].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise InputValidationError(f"分配文件包含非有限值: {allocation_file}")
    if values.min() < 0.0 or values.max() > 1.0:
        bad = allocations[(values < 0.0).any(axis=1) | (values > 1.0).any(axis=1)].iloc[0]
        raise InputValidationError(
            f"取值越界: tick={bad['tick']} slice={bad['slice_id']} resource={bad['resource_id']} "
            f"allocation={bad['allocation']} utilization={bad['utilization']} 超出 [0, 1]"
        )

    full_index = pd.MultiIndex.from_product([list(slice_ids), list(resource_ids), range(n_ticks)], names=key)
    indexed = allocations.set_index(key).reindex(full_index)
    if indexed["allocation"].isna().any():
        raise InputValidationError(f"分配文件缺少部分 (tick, slice_id, resource_id) 组合: {allocation_file}")
    n_slices, k_resources = len(slice_ids), len(resource_ids)
    alloc_tensor = indexed["allocation"].to_numpy(dtype=float).reshape(n_slices, k_resources, n_ticks)

    util_stats = allocations.groupby(["resource_id", "tick"])["utilization"].agg(["min", "max"])
    if (util_stats["max"] - util_stats["min"]).abs().max() > 0.0:
        raise InputValidationError(f"同一 tick 下各切片记录的资源利用率不一致: {allocation_file}")
    utilization = (
        util_stats["min"].unstack("tick").reindex(index=list(resource_ids), columns=range(n_ticks))
    ).to_numpy(dtype=float)
    return resource_ids, alloc_tensor, utilization


def ingest_telemetry(
    signal_file: Path,
    allocation_file: Path,
    config: ModelConfig,
    tick_duration: float = DEFAULT_TICK_DURATION,
    window_start: float = 0.0,
) -> TelemetryWindow:
    """
    读取并校验遥测文件，返回标准化后的窗口

    Args:
        signal_file: 信号 CSV，表头 tick,slice_id,<metric>...
        allocation_file: 分配 CSV，表头 tick,slice_id,resource_id,allocation,utilization
        config: 分析配置，metric_column 指定使用的指标列
        tick_duration: tick 时长（秒）
        window_start: 窗口起始时间（秒）

    Returns:
        TelemetryWindow

    Raises:
        FileNotFoundError: 文件不存在
        InputValidationError: 表头不符、tick 未对齐、取值越界、非有限值或样本不足
    """
    signal_file, allocation_file = Path(signal_file), Path(allocation_file)
    metric = config.metric_column
    signals = _read_csv(signal_file, ("slice_id",))
    _require_columns(signals, (*SIGNAL_KEY_COLUMNS, metric), signal_file)
    if signals.duplicated(list(SIGNAL_KEY_COLUMNS)).any():
        raise InputValidationError(f"信号文件存在重复的 (tick, slice_id) 行: {signal_file}")

    slice_ids = tuple(str(s) for s in pd.unique(signals["slice_id"]))
    n_ticks = _dense_ticks(signals["tick"], signal_file)
    raw = (
        signals.pivot(index="slice_id", columns="tick", values=metric)
        .reindex(index=list(slice_ids), columns=range(n_ticks))
    )
    if raw.isna().any().any():
        raise InputValidationError(f"信号文件中存在缺失的 (tick, slice_id) 组合或空值: {signal_file}")
    raw_values = raw.to_numpy(dtype=float)
    if not np.all(np.isfinite(raw_values)):
        raise InputValidationError(f"信号文件包含非有限值: {signal_file}")

    gap_mask = None
    if GAP_COLUMN in signals.columns:
        gaps = signals.pivot(index="slice_id", columns="tick", values=GAP_COLUMN)
        gap_mask = gaps.reindex(index=list(slice_ids), columns=range(n_ticks)).fillna(0).to_numpy() != 0

    allocations = _read_csv(allocation_file, ("slice_id", "resource_id"))
    _require_columns(allocations, ALLOCATION_COLUMNS, allocation_file)
    resource_ids, alloc_tensor, utilization = _allocation_tensors(allocations, slice_ids, n_ticks, allocation_file)
    k_resources = len(resource_ids)

    window = TelemetryWindow.from_raw(
        raw_values,
        alloc_tensor,
        utilization,
        tick_duration=tick_duration,
        window_start=window_start,
        slice_ids=slice_ids,
        resource_ids=resource_ids,
        gap_mask=gap_mask,
    )
    needed = config.min_ticks(k_resources if config.condition_on_resources else 0)
    if window.n_ticks < needed:
        raise InputValidationError(f"tick 数 {window.n_ticks} 低于最小要求 {needed}")
    logger.debug(
        f"已读取遥测: N={window.n_slices}, K={window.k_resources}, T={window.n_ticks}, 指标列={metric}"
    )
    return window


def write_telemetry(
    window: TelemetryWindow,
    signal_file: Path,
    allocation_file: Path,
    metric_column: str = "latency_ms",
    extra_metrics: dict[str, np.ndarray] | None = None,
    comment: str | None = None,
) -> None:
    """
    将窗口的原始信号与分配数据写回 CSV

    Args:
        window: 遥测窗口
        signal_file: 信号 CSV 输出路径
        allocation_file: 分配 CSV 输出路径
        metric_column: 原始信号所在的列名
        extra_metrics: 附加指标列，形状 N × T
        comment: 写在两个文件首行的注释（不含 "# " 前缀）
    """
    n_slices, n_ticks, k_resources = window.n_slices, window.n_ticks, window.k_resources
    ticks = np.repeat(np.arange(n_ticks), n_slices)
    slices = np.tile(np.asarray(window.slice_ids, dtype=object), n_ticks)
    signal_frame = pd.DataFrame({"tick": ticks, "slice_id": slices})
    # 按 (tick, slice) 顺序展开 N × T 矩阵
    signal_frame[metric_column] = window.raw_signals.T.reshape(-1)
    for name, values in (extra_metrics or {}).items():
        signal_frame[name] = np.asarray(values, dtype=float).T.reshape(-1)
    if window.gap_mask is not None:
        signal_frame[GAP_COLUMN] = window.gap_mask.T.reshape(-1).astype(int)

    alloc_ticks = np.repeat(np.arange(n_ticks), n_slices * k_resources)
    alloc_slices = np.tile(np.repeat(np.asarray(window.slice_ids, dtype=object), k_resources), n_ticks)
    alloc_resources = np.tile(np.asarray(window.resource_ids, dtype=object), n_ticks * n_slices)
    # allocations: N × K × T -> (T, N, K)
    alloc_values = np.transpose(window.allocations, (2, 0, 1)).reshape(-1)
    util_values = np.broadcast_to(
        window.utilization.T[:, np.newaxis, :], (n_ticks, n_slices, k_resources)
    ).reshape(-1)
    alloc_frame = pd.DataFrame(
        {
            "tick": alloc_ticks,
            "slice_id": alloc_slices,
            "resource_id": alloc_resources,
            "allocation": alloc_values,
            "utilization": util_values,
        }
    )

    for path in (Path(signal_file), Path(allocation_file)):
        path.parent.mkdir(parents=True, exist_ok=True)
    for frame, path in ((signal_frame, signal_file), (alloc_frame, allocation_file)):
        with open(path, "w", encoding="utf-8", newline="") as f:
            if comment:
                f.write(f"# {comment}\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"遥测已写出: {signal_file}, {allocation_file}")
