"""
场景目录与语料清单的读写
目录布局: signals.csv, allocations.csv, ground_truth.json, manifest.json；语料清单 corpus.json
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from astrbot.api import logger

from ..common.errors import InputValidationError
from ..learning.corpus import Scenario, TrainingCorpus
from ..telemetry.telemetry_io import ingest_telemetry, write_telemetry
from ..telemetry.telemetry_window import DEFAULT_METRIC_COLUMN, ModelConfig, TelemetryWindow
from .generator import GeneratedScenario
from .scenario_spec import ScenarioSpec

SIGNALS_FILE = "signals.csv"
ALLOCATIONS_FILE = "allocations.csv"
GROUND_TRUTH_FILE = "ground_truth.json"
MANIFEST_FILE = "manifest.json"
CORPUS_MANIFEST = "corpus.json"
TEMPLATE_NOTE = "template defaults are arbitrary: class balance and chain lengths are not calibrated to any real corpus"


def dump_json(path: Path, payload: Any) -> None:
    """以排序键、UTF-8 写 JSON，结果只取决于内容"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Path) -> Any:
    """读 JSON，解析错误带行列号"""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InputValidationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_scenario(directory: Path, generated: GeneratedScenario, template_default: bool = False) -> Path:
    """
    写出一个场景目录

    Args:
        directory: 目标目录，不存在时创建
        generated: generate 的输出
        template_default: 场景参数是否来自未校准的模板缺省值

    Returns:
        场景目录路径
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = generated.spec
    window = generated.window
    echo = json.dumps({"scenario": spec.name, "seed": spec.seed}, sort_keys=True)
    write_telemetry(
        window,
        directory / SIGNALS_FILE,
        directory / ALLOCATIONS_FILE,
        metric_column=DEFAULT_METRIC_COLUMN,
        extra_metrics=generated.extra_metrics,
        comment=f"config: {echo}",
    )
    truth = generated.truth.to_dict(window.slice_ids)
    truth.update(
        spec=spec.model_dump(mode="json"),
        seed=spec.seed,
        analysis_hints=dict(spec.analysis_hints),
        slice_classes=spec.classes(),
        tick_duration=window.tick_duration,
    )
    dump_json(directory / GROUND_TRUTH_FILE, truth)

    files = {}
    for name in (SIGNALS_FILE, ALLOCATIONS_FILE, GROUND_TRUTH_FILE):
        path = directory / name
        files[name] = {"bytes": path.stat().st_size, "sha256": _sha256(path)}
    manifest = {
        "scenario": spec.name,
        "seed": spec.seed,
        "files": files,
        "saturated": generated.saturated,
        "window": window.describe(),
    }
    if template_default:
        manifest["note"] = TEMPLATE_NOTE
    dump_json(directory / MANIFEST_FILE, manifest)
    logger.info(f"场景已写出: {directory}")
    return directory


@dataclass
class LoadedScenario:
    """从目录读回的场景"""

    directory: Path
    window: TelemetryWindow
    truth: dict[str, Any]
    analysis_hints: dict[str, Any] = field(default_factory=dict)

    @property
    def truth_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(i), int(j)) for i, j in self.truth.get("edges", []))

    @property
    def truth_path(self) -> tuple[int, ...]:
        return tuple(int(i) for i in self.truth.get("path", []))

    def to_corpus_scenario(self, scenario_id: str | None = None) -> Scenario:
        return Scenario(
            scenario_id=scenario_id or self.directory.name,
            window=self.window,
            truth=self.truth_edges,
            truth_path=self.truth_path,
            seed=self.truth.get("seed"),
        )


def read_analysis_hints(directory: Path) -> dict[str, Any]:
    path = Path(directory) / GROUND_TRUTH_FILE
    if not path.is_file():
        return {}
    hints = read_json(path).get("analysis_hints", {})
    if not isinstance(hints, dict):
        raise InputValidationError(f"{path}: analysis_hints 必须是对象")
    return hints


def load_scenario(directory: Path, config: ModelConfig) -> LoadedScenario:
    """
    读取场景目录

    ground_truth.json 可缺省（真实遥测没有标注），此时真实边集为空。

    Raises:
        FileNotFoundError: 目录或遥测文件不存在
        InputValidationError: 文件内容不合法
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"场景目录不存在: {directory}")
    truth: dict[str, Any] = {}
    truth_path = directory / GROUND_TRUTH_FILE
    if truth_path.is_file():
        truth = read_json(truth_path)
    window = ingest_telemetry(
        directory / SIGNALS_FILE,
        directory / ALLOCATIONS_FILE,
        config,
        tick_duration=float(truth.get("tick_duration", 0.1)),
    )
    return LoadedScenario(directory, window, truth, dict(truth.get("analysis_hints", {})))


def write_corpus(
    out_dir: Path, template: ScenarioSpec, seed: int, generated: list[GeneratedScenario]
) -> Path:
    """写出全部场景目录与语料清单 corpus.json"""
    out_dir = Path(out_dir)
    entries = []
    for g in generated:
        write_scenario(out_dir / g.spec.name, g, template_default=True)
        entries.append({"id": g.spec.name, "seed": g.spec.seed, "dir": g.spec.name})
    manifest_path = out_dir / CORPUS_MANIFEST
    dump_json(
        manifest_path,
        {
            "template": template.model_dump(mode="json"),
            "seed": seed,
            "count": len(entries),
            "scenarios": entries,
            "note": TEMPLATE_NOTE,
        },
    )
    logger.info(f"语料清单已写出: {manifest_path}（{len(entries)} 个场景）")
    return manifest_path


def load_corpus(manifest_path: Path, config: ModelConfig) -> TrainingCorpus:
    """按语料清单读取全部场景；场景目录相对清单所在目录解析"""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / CORPUS_MANIFEST
    manifest = read_json(manifest_path)
    entries = manifest.get("scenarios") if isinstance(manifest, dict) else None
    if not isinstance(entries, list) or not entries:
        raise InputValidationError(f"{manifest_path}: scenarios 必须为非空列表")
    scenarios = []
    for position, entry in enumerate(entries):
        if not isinstance(entry, dict) or "dir" not in entry:
            raise InputValidationError(f"{manifest_path}: scenarios[{position}] 缺少 dir 字段")
        loaded = load_scenario(manifest_path.parent / entry["dir"], config)
        scenarios.append(loaded.to_corpus_scenario(str(entry.get("id", entry["dir"]))))
    logger.info(f"已读取语料: {manifest_path}，{len(scenarios)} 个场景")
    return TrainingCorpus(scenarios, config)
