"""
溯源流程模块
串起 场景读取 → 配置合并 → 溯源 → 基线对比 → 运行记录，供插件指令与命令行共用
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from astrbot.api import logger

from ..causality.attribution import AttributionResult, attribute
from ..common.errors import InputValidationError
from ..config.config_manager import EffectiveConfig, build_config
from ..db.run_db_operations import RunDBOperations
from ..evaluation.baselines import correlation_baseline
from ..evaluation.metrics import score_edges, score_path
from ..learning.theta import ThetaParams
from ..simulator.generator import generate
from ..simulator.presets import case_study_preset
from ..simulator.scenario_store import (
    GROUND_TRUTH_FILE,
    LoadedScenario,
    load_scenario,
    read_analysis_hints,
    write_scenario,
)
from ..telemetry.telemetry_window import analysis_window

BASELINES = ("correlation",)


def load_theta(path: Path | None) -> ThetaParams | None:
    """读取 θ 文件；文件缺失时返回 None 并告警，由调用方使用缺省 θ"""
    if path is None:
        return None
    path = Path(path)
    if not path.is_file():
        logger.warning(f"θ 文件不存在，使用缺省参数（w 均匀、τ=0.5、ω_1=0.67）: {path}")
        return None
    return ThetaParams.load(path)


@dataclass
class AttributionOutcome:
    """一次溯源的全部产物"""

    scenario: LoadedScenario
    config: EffectiveConfig
    result: AttributionResult
    baselines: dict[str, Any] = field(default_factory=dict)
    run_id: int | None = None

    @property
    def has_truth(self) -> bool:
        return bool(self.scenario.truth.get("edges"))

    def to_dict(self) -> dict[str, Any]:
        report = self.result.to_dict(self.config.model)
        report["config"] = self.config.to_dict()
        report["scenario"] = str(self.scenario.directory.name)
        report["seed"] = self.config.model.seed
        if self.has_truth:
            window = self.scenario.window
            edge_score = score_edges(self.result.graph, self.scenario.truth_edges, window.slice_ids)
            path_score = score_path(self.result.path, self.scenario.truth_path)
            report["evaluation"] = {"edges": edge_score.to_dict(), "path": path_score.to_dict()}
        if self.baselines:
            report["baselines"] = self.baselines
        return report

    def path_text(self) -> str:
        return " → ".join(hop.slice_id for hop in self.result.path.hops)


def run_attribution(
    directory: Path,
    config_file: Path | None = None,
    overrides: dict[str, Any] | None = None,
    theta_path: Path | None = None,
    baselines: tuple[str, ...] = (),
) -> AttributionOutcome:
    """
    对一个场景目录执行溯源

    Args:
        directory: 场景目录
        config_file: JSON 配置文件
        overrides: 命令行或插件配置中的取值
        theta_path: θ 文件，缺失时使用缺省 θ
        baselines: 附加的基线方法

    Returns:
        AttributionOutcome
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"场景目录不存在: {directory}")
    unknown = sorted(set(baselines) - set(BASELINES))
    if unknown:
        raise InputValidationError(f"未知的基线方法: {unknown}，可用: {list(BASELINES)}")

    overrides = dict(overrides or {})
    theta = load_theta(theta_path)
    if theta is not None:
        overrides["theta"] = theta
    effective = build_config(read_analysis_hints(directory), config_file, overrides)
    scenario = load_scenario(directory, effective.model)
    result = attribute(scenario.window, effective.model)

    extra: dict[str, Any] = {}
    if "correlation" in baselines:
        graph = correlation_baseline(analysis_window(scenario.window, effective.model), effective.model)
        extra["correlation"] = graph.to_dict()
        if scenario.truth.get("edges"):
            extra["correlation"]["evaluation"] = score_edges(
                graph, scenario.truth_edges, scenario.window.slice_ids
            ).to_dict()
    return AttributionOutcome(scenario, effective, result, extra)


class AttributionFlow:
    """插件侧的溯源流程：场景生成、溯源与运行记录"""

    def __init__(self, data_dir: Path, db_ops: RunDBOperations | None = None, overrides: dict[str, Any] | None = None):
        """
        Args:
            data_dir: 插件数据目录，场景写在其 scenarios/ 子目录
            db_ops: 运行记录操作，为空时不记录
            overrides: 来自插件配置的分析参数
        """
        self.scenario_root = Path(data_dir) / "scenarios"
        self.db_ops = db_ops
        self.overrides = dict(overrides or {})

    def simulate_case_study(self, seed: int) -> Path:
        """生成五跳案例场景，返回场景目录"""
        spec = case_study_preset(seed)
        directory = self.scenario_root / f"case_study_seed{seed}"
        write_scenario(directory, generate(spec))
        if self.db_ops is not None:
            self.db_ops.record_run("simulate", directory.name, seed, 0, "", 0.0)
        return directory

    def list_scenarios(self) -> list[Path]:
        """按修改时间从新到旧"""
        if not self.scenario_root.is_dir():
            return []
        candidates = [d for d in self.scenario_root.iterdir() if (d / GROUND_TRUTH_FILE).is_file()]
        return sorted(candidates, key=lambda d: (d.stat().st_mtime, d.name), reverse=True)

    def resolve_scenario(self, name: str = "") -> Path | None:
        """名称为空时取最近生成的场景"""
        if name:
            directory = self.scenario_root / name
            return directory if directory.is_dir() else None
        scenarios = self.list_scenarios()
        return scenarios[0] if scenarios else None

    def attribute_scenario(self, directory: Path, record: bool = True) -> AttributionOutcome:
        outcome = run_attribution(directory, overrides=self.overrides)
        if record and self.db_ops is not None:
            payload = outcome.to_dict()
            payload.pop("pairs", None)
            outcome.run_id = self.db_ops.record_run(
                "attribute",
                directory.name,
                outcome.config.model.seed,
                len(outcome.result.graph.edges),
                outcome.path_text(),
                outcome.result.path.path_score,
                payload,
            )
        return outcome

    @staticmethod
    def summary_text(outcome: AttributionOutcome) -> str:
        """文字版溯源结果"""
        result = outcome.result
        lines = [f"场景 {outcome.scenario.directory.name} 溯源结果：", f"因果边数: {len(result.graph.edges)}"]
        if result.path.empty:
            lines.append("未检测到跨切片攻击路径。")
        else:
            lines.append(f"攻击路径（得分 {result.path.path_score:.4f}）：")
            for number, hop in enumerate(result.path.hops, 1):
                low, high = hop.interval
                lines.append(
                    f"{number}. {hop.slice_id} t={hop.timestamp:.2f}s 置信度 {hop.confidence:.3f} "
                    f"Γ区间 [{low:.2f}, {high:.2f}]"
                )
        if outcome.has_truth:
            report = outcome.to_dict()["evaluation"]
            lines.append(
                f"与真实链路对比: 边级准确率 {report['edges']['accuracy']:.3f}，"
                f"路径完全一致: {'是' if report['path']['exact_match'] else '否'}"
            )
        return "\n".join(lines)

    def history_text(self, page: int = 1, page_size: int = 10) -> str:
        if self.db_ops is None:
            return "未启用运行记录。"
        page = max(1, page)
        total = self.db_ops.count_runs()
        if total == 0:
            return "暂无溯源记录。"
        runs = self.db_ops.list_runs(limit=page_size, offset=(page - 1) * page_size)
        pages = (total + page_size - 1) // page_size
        lines = [f"溯源记录（第 {page}/{pages} 页，共 {total} 条）："]
        for run in runs:
            path = run["path_text"] or "无"
            lines.append(
                f"#{run['run_id']} {run['created_at']} {run['command']} {run['scenario']} "
                f"边数 {run['edge_count']} 路径 {path}"
            )
        return "\n".join(lines)
