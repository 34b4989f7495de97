"""
溯源质量指标
边级混淆计数（全部 N(N−1) 个有序对）、路径匹配、Wilson 区间与延迟统计
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import stats

from ..common.errors import InputValidationError

if TYPE_CHECKING:
    from ..causality.attribution import AttackPath, CausalGraph

# 报告头中写明准确率的分母
ACCURACY_DEFINITION = "edge-level over all ordered slice pairs"
CONFIDENCE_LEVEL = 0.95


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE_LEVEL) -> tuple[float, float]:
    """二项比例的 Wilson 区间；trials 为 0 时返回 [0, 1]"""
    if trials <= 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(ci.low), float(ci.high))


@dataclass(frozen=True)
class EdgeScore:
    """边级混淆计数及派生指标"""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: EdgeScore) -> EdgeScore:
        return EdgeScore(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 1.0

    @property
    def precision(self) -> float:
        # 没有预测边时按约定为 1
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 1.0

    @property
    def recall(self) -> float:
        # 没有真实边时按约定为 1
        actual = self.tp + self.fn
        return self.tp / actual if actual else 1.0

    @property
    def fdr(self) -> float:
        return 1.0 - self.precision

    @property
    def specificity(self) -> float:
        negatives = self.tn + self.fp
        return self.tn / negatives if negatives else 1.0

    @property
    def f1(self) -> float:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else 1.0

    @property
    def mcc(self) -> float:
        denominator = math.sqrt(
            (self.tp + self.fp) * (self.tp + self.fn) * (self.tn + self.fp) * (self.tn + self.fn)
        )
        if denominator == 0:
            return 0.0
        return (self.tp * self.tn - self.fp * self.fn) / denominator

    def intervals(self) -> dict[str, tuple[float, float]]:
        precision = wilson_interval(self.tp, self.tp + self.fp)
        return {
            "accuracy": wilson_interval(self.tp + self.tn, self.total),
            "precision": precision,
            "recall": wilson_interval(self.tp, self.tp + self.fn),
            "fdr": (1.0 - precision[1], 1.0 - precision[0]),
        }

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = asdict(self)
        for name in ("accuracy", "precision", "recall", "fdr", "specificity", "f1", "mcc"):
            result[name] = getattr(self, name)
        result["intervals"] = {k: list(v) for k, v in self.intervals().items()}
        return result


def score_edge_sets(
    predicted: Iterable[tuple[int, int]], truth: Iterable[tuple[int, int]], n_slices: int
) -> EdgeScore:
    """在 N(N−1) 个有序对上统计 TP/FP/FN/TN"""
    predicted, truth = set(predicted), set(truth)
    for i, j in predicted | truth:
        if i == j or not (0 <= i < n_slices and 0 <= j < n_slices):
            raise InputValidationError(f"边 ({i}, {j}) 不属于 {n_slices} 个切片的有序对集合")
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    return EdgeScore(tp=tp, fp=fp, fn=fn, tn=n_slices * (n_slices - 1) - tp - fp - fn)


def score_edges(
    predicted: CausalGraph, truth: Iterable[tuple[int, int]], truth_nodes: Sequence[str] | None = None
) -> EdgeScore:
    """
    预测因果图与真实边集的边级比较

    Args:
        predicted: 预测图
        truth: 真实边集，以切片下标表示
        truth_nodes: 真实边集所在的切片标识，给出时必须与预测图节点一致

    Raises:
        InputValidationError: 节点集合不一致
    """
    if truth_nodes is not None and tuple(truth_nodes) != tuple(predicted.nodes):
        raise InputValidationError(
            f"节点集合不一致: 预测 {list(predicted.nodes)}，真实 {list(truth_nodes)}"
        )
    return score_edge_sets(predicted.edge_set(), truth, len(predicted.nodes))


@dataclass(frozen=True)
class PathScore:
    exact_match: bool
    hop_overlap: float

    def to_dict(self) -> dict[str, Any]:
        return {"exact_match": self.exact_match, "hop_overlap": self.hop_overlap}


def _as_nodes(path: AttackPath | Sequence[int]) -> tuple[int, ...]:
    nodes = getattr(path, "nodes", path)
    return tuple(int(n) for n in nodes)


def score_path(predicted: AttackPath | Sequence[int], truth: AttackPath | Sequence[int]) -> PathScore:
    """
    路径级比较

    exact_match 要求节点序列完全一致；hop_overlap = 共有的相邻对数 / 真实路径相邻对数，
    两条路径都为空时为 (True, 1.0)。
    """
    pred_nodes, true_nodes = _as_nodes(predicted), _as_nodes(truth)
    exact = pred_nodes == true_nodes
    true_pairs = set(zip(true_nodes, true_nodes[1:]))
    if not true_pairs:
        return PathScore(exact, 1.0 if exact else 0.0)
    shared = true_pairs & set(zip(pred_nodes, pred_nodes[1:]))
    return PathScore(exact, len(shared) / len(true_pairs))


def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> float | None:
    """秩和形式的 ROC-AUC；只有一类标签时返回 None"""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = stats.rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(labels: Sequence[int], scores: Sequence[float]) -> float | None:
    """按得分降序的平均精确率；没有正例时返回 None"""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision_at_k = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision_at_k[hits].sum() / n_pos)


def latency_summary(samples_ms: Sequence[float]) -> dict[str, float]:
    """耗时分布：均值、标准差、p95（毫秒）"""
    samples = np.asarray(samples_ms, dtype=float)
    if samples.size == 0:
        return {"mean": 0.0, "sd": 0.0, "p95": 0.0, "count": 0}
    return {
        "mean": float(samples.mean()),
        "sd": float(samples.std(ddof=1)) if samples.size > 1 else 0.0,
        "p95": float(np.percentile(samples, 95)),
        "count": int(samples.size),
    }


@dataclass
class EvalReport:
    """语料级评估报告"""

    edges: EdgeScore
    path_exact_rate: float
    mean_hop_overlap: float
    latency: dict[str, float]
    per_phase_timing: dict[str, float]
    n_scenarios: int
    auc: float | None = None
    average_precision: float | None = None
    per_scenario: list[dict[str, Any]] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.edges.accuracy

    @property
    def precision(self) -> float:
        return self.edges.precision

    @property
    def recall(self) -> float:
        return self.edges.recall

    @property
    def fdr(self) -> float:
        return self.edges.fdr

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy_definition": ACCURACY_DEFINITION,
            "n_scenarios": self.n_scenarios,
            "edges": self.edges.to_dict(),
            "path_exact_rate": self.path_exact_rate,
            "mean_hop_overlap": self.mean_hop_overlap,
            "auc": self.auc,
            "average_precision": self.average_precision,
            "latency_ms": self.latency,
            "per_phase_timing": self.per_phase_timing,
            "per_scenario": self.per_scenario,
        }
