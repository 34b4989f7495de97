"""
语料级评估与 K 折交叉验证
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import time
from dataclasses import replace
from typing import Any

import numpy as np

from astrbot.api import logger

from ..causality.attribution import AttributionResult, attribute
from ..common.errors import InputValidationError
from ..learning.corpus import Scenario, TrainingCorpus
from ..learning.theta import ThetaParams
from ..learning.trainer import train
from ..telemetry.telemetry_window import ModelConfig
from .metrics import (
    EdgeScore,
    EvalReport,
    average_precision,
    latency_summary,
    roc_auc,
    score_edges,
    score_path,
)


def _run_one(scenario: Scenario, config: ModelConfig) -> tuple[AttributionResult, float]:
    started = time.perf_counter()
    result = attribute(scenario.window, config)
    return result, (time.perf_counter() - started) * 1000.0


def run_corpus(corpus: TrainingCorpus, config: ModelConfig) -> list[tuple[AttributionResult, float]]:
    """对每个场景执行溯源，按场景顺序返回 (结果, 毫秒)"""
    # 场景级并行时单次溯源内部不再并行
    inner = replace(config, jobs=1) if config.jobs > 1 else config
    if config.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs, thread_name_prefix="Eval-") as executor:
            return list(executor.map(lambda s: _run_one(s, inner), corpus.scenarios))
    return [_run_one(s, inner) for s in corpus.scenarios]


def report_from_runs(corpus: TrainingCorpus, runs: list[tuple[AttributionResult, float]]) -> EvalReport:
    """由逐场景结果汇总评估报告"""
    total = EdgeScore()
    exact, overlaps, latencies = [], [], []
    labels, scores = [], []
    phases: dict[str, list[float]] = {}
    per_scenario = []
    for scenario, (result, elapsed_ms) in zip(corpus.scenarios, runs):
        edge_score = score_edges(result.graph, scenario.truth, scenario.window.slice_ids)
        path_score = score_path(result.path, scenario.truth_path)
        total = total + edge_score
        exact.append(path_score.exact_match)
        overlaps.append(path_score.hop_overlap)
        latencies.append(elapsed_ms)
        for phase, seconds in result.timings.items():
            phases.setdefault(phase, []).append(seconds * 1000.0)
        for pair in result.pairs:
            labels.append(pair.pair in scenario.truth)
            scores.append(pair.gamma)
        per_scenario.append(
            {
                "scenario_id": scenario.scenario_id,
                "accuracy": edge_score.accuracy,
                "tp": edge_score.tp,
                "fp": edge_score.fp,
                "fn": edge_score.fn,
                "path": list(result.path.nodes),
                "truth_path": list(scenario.truth_path),
                "exact_match": path_score.exact_match,
                "hop_overlap": path_score.hop_overlap,
                "latency_ms": elapsed_ms,
            }
        )
    return EvalReport(
        edges=total,
        path_exact_rate=float(np.mean(exact)) if exact else 0.0,
        mean_hop_overlap=float(np.mean(overlaps)) if overlaps else 0.0,
        latency=latency_summary(latencies),
        per_phase_timing={phase: float(np.mean(v)) for phase, v in phases.items()},
        n_scenarios=len(corpus),
        auc=roc_auc(labels, scores),
        average_precision=average_precision(labels, scores),
        per_scenario=per_scenario,
    )


def evaluate_corpus(
    corpus: TrainingCorpus, config: ModelConfig, theta: ThetaParams | None = None
) -> EvalReport:
    """
    在语料上评估溯源质量

    Args:
        corpus: 带真实标注的语料
        config: 分析配置
        theta: 覆盖 config 中的 θ

    Returns:
        EvalReport
    """
    if len(corpus) == 0:
        raise InputValidationError("评估语料为空")
    if theta is not None:
        config = replace(config, theta=theta)
    report = report_from_runs(corpus, run_corpus(corpus, config))
    logger.info(
        f"评估完成: {report.n_scenarios} 个场景, 准确率={report.accuracy:.4f}, "
        f"精确率={report.precision:.4f}, 召回率={report.recall:.4f}"
    )
    return report


def fold_of(scenario_id: str, seed: int, folds: int) -> int:
    """场景所属折号，只取决于 (场景编号, 种子)"""
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % folds


def cross_validate(
    corpus: TrainingCorpus,
    config: ModelConfig,
    folds: int = 5,
    lam: float = 1e-3,
    max_iters: int = 2000,
    seed: int = 0,
) -> dict[str, Any]:
    """
    K 折交叉验证：在其余折上学习 θ，在留出折上评估

    Returns:
        {"folds": [...每折报告...], "pooled": 合并报告}
    """
    if folds < 2:
        raise InputValidationError(f"折数必须 ≥ 2: {folds}")
    assignment = [fold_of(s.scenario_id, seed, folds) for s in corpus.scenarios]
    fold_reports = []
    pooled_runs: list[tuple[AttributionResult, float]] = []
    pooled_indices: list[int] = []
    for fold in range(folds):
        held_out = [i for i, f in enumerate(assignment) if f == fold]
        training = [i for i, f in enumerate(assignment) if f != fold]
        if not held_out or len(training) < 2:
            logger.warning(f"第 {fold} 折样本不足，跳过: 留出 {len(held_out)} 个, 训练 {len(training)} 个")
            continue
        report = train(corpus.subset(training), lam=lam, max_iters=max_iters, seed=seed)
        test_corpus = corpus.subset(held_out)
        runs = run_corpus(test_corpus, replace(config, theta=report.theta))
        fold_report = report_from_runs(test_corpus, runs)
        fold_reports.append(
            {
                "fold": fold,
                "scenarios": [corpus[i].scenario_id for i in held_out],
                "theta": report.theta.to_dict(),
                "report": fold_report.to_dict(),
            }
        )
        pooled_runs.extend(runs)
        pooled_indices.extend(held_out)
    if not fold_reports:
        raise InputValidationError(f"语料规模 {len(corpus)} 不足以做 {folds} 折交叉验证")
    pooled = report_from_runs(corpus.subset(pooled_indices), pooled_runs)
    return {"folds": fold_reports, "pooled": pooled.to_dict(), "n_folds": folds, "seed": seed}
