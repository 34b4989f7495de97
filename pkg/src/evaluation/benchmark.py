"""
延迟与规模基准
对 attribute() 做预热后的重复计时，并拟合成对检验阶段耗时对 N 的对数斜率
"""

from __future__ import annotations

import time
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy import stats

from astrbot.api import logger

from ..causality.attribution import attribute
from ..common.errors import InputValidationError
from ..simulator.generator import draw_scenario, generate, sub_seeds
from ..simulator.presets import default_template
from ..simulator.scenario_spec import ScenarioSpec
from ..telemetry.telemetry_window import ModelConfig, TelemetryWindow

MIN_REPEATS = 5
# 亚百毫秒目标针对 N=15、W=300、p=q=5、K=3、单线程、关闭逐跳自助重采样的配置
LATENCY_TARGET_MS = 100.0
LATENCY_TARGET_N = 15


@dataclass
class ScalingTable:
    rows: list[dict[str, Any]]
    slope: dict[str, float] = field(default_factory=dict)

    def latency_target(self) -> dict[str, Any] | None:
        """N=15 一行相对亚百毫秒目标的结果，并注明该行的自助重采样设置"""
        for row in self.rows:
            if row["n_slices"] == LATENCY_TARGET_N and row["window_ticks"] == 300:
                return {
                    "target_ms": LATENCY_TARGET_MS,
                    "mean_ms": row["mean_ms"],
                    "bootstrap_resamples": row["bootstrap_resamples"],
                    "met": row["bootstrap_resamples"] == 0 and row["mean_ms"] < LATENCY_TARGET_MS,
                }
        return None

    def to_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "slope": self.slope, "latency_target": self.latency_target()}


def bench_window(template: ScenarioSpec, n_slices: int, ticks: int, seed: int) -> TelemetryWindow:
    """基准用的窗口：模板在指定规模下抽取的第一个场景"""
    data = template.model_dump()
    data.update(n_slices=n_slices, ticks=ticks, slice_classes=None)
    spec = ScenarioSpec.from_data(data, f"bench N={n_slices}")
    return generate(draw_scenario(spec, 0, sub_seeds(seed, 1)[0])).window


def time_attribution(window: TelemetryWindow, config: ModelConfig, repeats: int) -> dict[str, Any]:
    """预热一次后重复计时，返回总耗时与各阶段耗时（毫秒）"""
    attribute(window, config)
    totals, pairwise, confidence = [], [], []
    for _ in range(repeats):
        started = time.perf_counter()
        result = attribute(window, config)
        totals.append((time.perf_counter() - started) * 1000.0)
        pairwise.append(result.timings["pairwise"] * 1000.0)
        confidence.append(result.timings["confidence"] * 1000.0)
    return {
        "mean_ms": float(np.mean(totals)),
        "sd_ms": float(np.std(totals, ddof=1)),
        "pairwise_mean_ms": float(np.mean(pairwise)),
        "pairwise_sd_ms": float(np.std(pairwise, ddof=1)),
        "confidence_mean_ms": float(np.mean(confidence)),
    }


def log_log_slope(xs: Sequence[float], ys: Sequence[float]) -> dict[str, float]:
    if len(xs) < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r_squared": float("nan")}
    fit = stats.linregress(np.log(xs), np.log(ys))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue**2)}


def bench_latency(
    n_grid: Sequence[int],
    config: ModelConfig,
    repeats: int = 10,
    seed: int = 0,
    template: ScenarioSpec | None = None,
) -> ScalingTable:
    """
    逐 N 计时，单线程

    Args:
        n_grid: 切片数网格
        config: 分析配置，窗口长度取 window_ticks
        repeats: 重复次数，≥ 5
        seed: 窗口生成种子

    Returns:
        ScalingTable，slope 为成对检验阶段耗时对 N 的 log-log 斜率
    """
    if repeats < MIN_REPEATS:
        raise InputValidationError(f"重复次数至少为 {MIN_REPEATS}: {repeats}")
    if not n_grid or any(n < 2 for n in n_grid):
        raise InputValidationError(f"N 网格必须非空且每项 ≥ 2: {list(n_grid)}")
    template = template or default_template()
    config = replace(config, jobs=1)
    rows = []
    for n in n_grid:
        window = bench_window(template, int(n), config.window_ticks, seed)
        timing = time_attribution(window, config, repeats)
        rows.append(
            {
                "n_slices": int(n),
                "window_ticks": config.window_ticks,
                "repeats": repeats,
                "bootstrap_resamples": config.bootstrap_resamples,
                **timing,
            }
        )
        logger.info(f"基准 N={n}: 平均 {timing['mean_ms']:.2f} ms")
    slope = log_log_slope([r["n_slices"] for r in rows], [r["pairwise_mean_ms"] for r in rows])
    return ScalingTable(rows=rows, slope=slope)


def bench_window_grid(
    w_grid: Sequence[int],
    config: ModelConfig,
    n_slices: int = 15,
    repeats: int = 10,
    seed: int = 0,
    template: ScenarioSpec | None = None,
) -> ScalingTable:
    """固定 N，逐窗口长度计时；slope 为成对检验耗时对 W 的 log-log 斜率"""
    if repeats < MIN_REPEATS:
        raise InputValidationError(f"重复次数至少为 {MIN_REPEATS}: {repeats}")
    template = template or default_template()
    rows = []
    for w in w_grid:
        point = replace(config, window_ticks=int(w), jobs=1)
        window = bench_window(template, n_slices, int(w), seed)
        timing = time_attribution(window, point, repeats)
        rows.append(
            {
                "n_slices": n_slices,
                "window_ticks": int(w),
                "repeats": repeats,
                "bootstrap_resamples": point.bootstrap_resamples,
                **timing,
            }
        )
    slope = log_log_slope([r["window_ticks"] for r in rows], [r["pairwise_mean_ms"] for r in rows])
    return ScalingTable(rows=rows, slope=slope)
