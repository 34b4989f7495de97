# 评估模块
from .ablation import AblationTable, ablation_run
from .baselines import correlation_baseline
from .benchmark import ScalingTable, bench_latency, bench_window_grid
from .evaluator import cross_validate, evaluate_corpus, fold_of
from .metrics import EdgeScore, EvalReport, PathScore, score_edges, score_path, wilson_interval
from .sweeps import SweepTable, robustness_sweep

__all__ = [
    "AblationTable",
    "EdgeScore",
    "EvalReport",
    "PathScore",
    "ScalingTable",
    "SweepTable",
    "ablation_run",
    "bench_latency",
    "bench_window_grid",
    "correlation_baseline",
    "cross_validate",
    "evaluate_corpus",
    "fold_of",
    "robustness_sweep",
    "score_edges",
    "score_path",
    "wilson_interval",
]
