"""
运行配置管理
配置文件为 JSON，由 pydantic 校验；按 缺省值 < 场景分析提示 < 配置文件 < 命令行 的顺序合并
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..learning.theta import ThetaParams
from ..simulator.scenario_spec import format_validation_error
from ..telemetry.telemetry_window import ModelConfig

DEFAULT_LAMBDA = 1e-3
DEFAULT_MAX_ITERS = 2000


class ThetaModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weights: list[float]
    thresholds: list[float]
    omega1: float = Field(default=0.67, ge=0.0, le=1.0)
    sigmoid_slope: float = Field(default=1.0, gt=0.0)


class RunConfigModel(BaseModel):
    """配置文件结构，全部字段可选；未给出的字段沿用下层取值"""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    p: int | None = Field(default=None, ge=1)
    q: int | None = Field(default=None, ge=1)
    window_ticks: int | None = Field(default=None, ge=1)
    window_start_tick: int | None = Field(default=None, ge=0)
    tau_causal: float | None = Field(default=None, gt=0.0, lt=1.0)
    alpha: float | None = Field(default=None, gt=0.0, lt=1.0)
    metric_column: str | None = None
    condition_on_resources: bool | None = None
    bh_step_up: bool | None = None
    bootstrap_resamples: int | None = Field(default=None, ge=0)
    onset_z: float | None = None
    seed: int | None = Field(default=None, ge=0)
    jobs: int | None = Field(default=None, ge=1)
    theta: ThetaModel | None = None
    lam: float | None = Field(default=None, ge=0.0, alias="lambda")
    max_iters: int | None = Field(default=None, ge=1)

    def model_fields_set_values(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.model_fields_set}


_MODEL_FIELDS = {f.name for f in fields(ModelConfig)}


@dataclass
class EffectiveConfig:
    """合并后的配置及其来源"""

    model: ModelConfig
    lam: float = DEFAULT_LAMBDA
    max_iters: int = DEFAULT_MAX_ITERS
    sources: dict[str, str] = field(default_factory=dict)  # 字段 → 来源层

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.model.to_dict(),
            "lambda": self.lam,
            "max_iters": self.max_iters,
            "sources": dict(sorted(self.sources.items())),
        }


def load_config_file(path: Path) -> RunConfigModel:
    """
    读取配置文件

    Raises:
        FileNotFoundError: 文件不存在
        InputValidationError: JSON 语法错误（带行列号）或字段校验失败（带字段路径）
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        return RunConfigModel.model_validate(data)
    except ValidationError as e:
        raise InputValidationError(f"{path}: {format_validation_error(e)}") from e


def _layer_values(layer: dict[str, Any]) -> dict[str, Any]:
    values = {}
    for key, value in layer.items():
        if value is None:
            continue
        if key == "theta" and isinstance(value, (dict, ThetaModel)):
            data = value.model_dump() if isinstance(value, ThetaModel) else value
            value = ThetaParams.from_dict(data)
        values[key] = value
    return values


def build_config(
    hints: dict[str, Any] | None = None,
    config_file: Path | None = None,
    overrides: dict[str, Any] | None = None,
    base: ModelConfig | None = None,
) -> EffectiveConfig:
    """
    按层合并配置

    Args:
        hints: 场景 ground_truth.json 中的 analysis_hints，只接受 ModelConfig 字段
        config_file: JSON 配置文件
        overrides: 命令行取值，None 表示未指定
        base: 缺省层

    Returns:
        EffectiveConfig
    """
    layers: list[tuple[str, dict[str, Any]]] = []
    if hints:
        unknown = sorted(set(hints) - _MODEL_FIELDS)
        if unknown:
            logger.warning(f"忽略未知的分析提示字段: {unknown}")
        try:
            validated = RunConfigModel.model_validate({k: v for k, v in hints.items() if k in _MODEL_FIELDS})
        except ValidationError as e:
            raise InputValidationError(f"analysis_hints: {format_validation_error(e)}") from e
        layers.append(("hints", validated.model_fields_set_values()))
    if config_file is not None:
        file_model = load_config_file(config_file)
        values = file_model.model_fields_set_values()
        layers.append(("file", values))
    if overrides:
        layers.append(("cli", dict(overrides)))

    merged: dict[str, Any] = {}
    sources: dict[str, str] = {}
    for name, layer in layers:
        for key, value in _layer_values(layer).items():
            merged[key] = value
            sources[key] = name

    lam = merged.pop("lam", DEFAULT_LAMBDA)
    max_iters = merged.pop("max_iters", DEFAULT_MAX_ITERS)
    unknown = sorted(set(merged) - _MODEL_FIELDS)
    if unknown:
        raise InputValidationError(f"未知的配置字段: {unknown}")
    model = (base or ModelConfig()).with_overrides(**merged)
    return EffectiveConfig(model=model, lam=float(lam), max_iters=int(max_iters), sources=sources)
