"""
参数学习
在自由参数空间做带回溯减半的梯度上升，以及 ω_1 敏感性扫描
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from astrbot.api import logger

from ..common.errors import DivergenceError, InputValidationError
from .corpus import TrainingCorpus
from .likelihood import DEFAULT_LAMBDA, gradient, log_likelihood, scenario_gamma
from .theta import ThetaParams

DEFAULT_MAX_ITERS = 2000
CONVERGENCE_TOL = 1e-8
INIT_OMEGA1 = 0.5
INIT_NOISE = 0.01
MAX_HALVINGS = 40


@dataclass
class TrainingReport:
    """训练结果与逐迭代日志"""

    theta: ThetaParams
    log_likelihood: float
    iterations: int
    converged: bool
    history: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta": self.theta.to_dict(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "history": self.history,
        }


def initial_theta(k_resources: int, seed: int, sigmoid_slope: float = 1.0) -> ThetaParams:
    """w=1/K、τ=0.5、ω_1=0.5，叠加尺度 0.01 的种子噪声"""
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, INIT_NOISE, size=2 * k_resources + 1)
    weights = np.maximum(1.0 / k_resources + noise[:k_resources], 1e-6)
    thresholds = np.clip(0.5 + noise[k_resources : 2 * k_resources], 1e-6, 1.0 - 1e-6)
    omega1 = float(np.clip(INIT_OMEGA1 + noise[-1], 1e-6, 1.0 - 1e-6))
    return ThetaParams(tuple(weights), tuple(thresholds), omega1, sigmoid_slope)


def train(
    corpus: TrainingCorpus,
    lam: float = DEFAULT_LAMBDA,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
    step_size: float = 1.0,
    sigmoid_slope: float = 1.0,
) -> TrainingReport:
    """
    最大化正则化对数似然

    迭代在按有序对数归一化的目标 L/n_pairs 上进行（与 L 同最优点），步长固定，
    目标不升时步长减半重试；|ΔL/n_pairs| < 1e-8 或达到 max_iters 时停止。

    Raises:
        InputValidationError: 语料少于 2 个场景或参数非法
        DivergenceError: 似然出现非有限值，携带最后一个有限迭代点
    """
    if len(corpus) < 2:
        raise InputValidationError(f"参数学习至少需要 2 个场景，实际 {len(corpus)}")
    if max_iters < 1:
        raise InputValidationError(f"最大迭代次数必须为正: {max_iters}")
    if step_size <= 0:
        raise InputValidationError(f"步长必须为正: {step_size}")
    scale = 1.0 / corpus.n_pairs
    corpus.warm(corpus.config.jobs)

    theta = initial_theta(corpus.k_resources, seed, sigmoid_slope)
    free = theta.to_free()
    objective = log_likelihood(theta, corpus, lam)
    history: list[dict[str, float]] = [
        {"iteration": 0, "log_likelihood": objective, "step": 0.0, "omega1": theta.omega1}
    ]
    if not np.isfinite(objective):
        raise DivergenceError("初始似然为非有限值", last_theta=None, history=history)

    converged = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        direction = gradient(theta, corpus, lam) * scale
        if not np.all(np.isfinite(direction)):
            raise DivergenceError(f"第 {iteration} 次迭代梯度为非有限值", last_theta=theta, history=history)
        step = step_size
        accepted = None
        for _ in range(MAX_HALVINGS):
            candidate = ThetaParams.from_free(free + step * direction, sigmoid_slope)
            value = log_likelihood(candidate, corpus, lam)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"第 {iteration} 次迭代似然为非有限值", last_theta=theta, history=history
                )
            if value >= objective:
                accepted = (candidate, value)
                break
            step *= 0.5
        if accepted is None:
            converged = True
            break
        delta = (accepted[1] - objective) * scale
        theta, objective = accepted
        free = theta.to_free()
        history.append({"iteration": iteration, "log_likelihood": objective, "step": step, "omega1": theta.omega1})
        if abs(delta) < CONVERGENCE_TOL:
            converged = True
            break

    logger.info(
        f"参数学习结束: 迭代 {iteration} 次, 收敛={converged}, L={objective:.6f}, ω_1={theta.omega1:.4f}"
    )
    return TrainingReport(theta, objective, iteration, converged, history)


def fit(
    corpus: TrainingCorpus,
    lam: float = DEFAULT_LAMBDA,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
) -> ThetaParams:
    """拟合 θ，只返回参数"""
    return train(corpus, lam, max_iters, seed).theta


def predicted_edges(corpus: TrainingCorpus, index: int, theta: ThetaParams) -> frozenset[tuple[int, int]]:
    """用缓存证据在给定 θ 下重建场景的因果边集"""
    config = corpus.config
    evidence = corpus.evidence(index)
    gamma = scenario_gamma(corpus[index], evidence, theta)
    keep = (gamma > config.tau_causal) & (evidence.p_adj < config.alpha)
    np.fill_diagonal(keep, False)
    return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(keep)))


def corpus_accuracy(corpus: TrainingCorpus, theta: ThetaParams) -> float:
    """全语料合并的边级准确率"""
    from ..evaluation.metrics import EdgeScore, score_edge_sets

    total = EdgeScore()
    for index, scenario in enumerate(corpus):
        total = total + score_edge_sets(
            predicted_edges(corpus, index, theta), scenario.truth, scenario.window.n_slices
        )
    return total.accuracy


def sensitivity_sweep(
    corpus: TrainingCorpus,
    omega1_grid: Sequence[float],
    theta: ThetaParams | None = None,
) -> list[tuple[float, float]]:
    """
    固定其它参数，逐个 ω_1 评估语料上的边级准确率

    Args:
        corpus: 语料
        omega1_grid: ω_1 取值，位于 [0, 1]
        theta: 基准参数，为空时取缺省 θ

    Returns:
        [(ω_1, accuracy), ...]，与网格同序
    """
    if len(corpus) == 0:
        raise InputValidationError("语料为空")
    grid = [float(w) for w in omega1_grid]
    if not grid or any(not 0.0 <= w <= 1.0 for w in grid):
        raise InputValidationError(f"ω_1 网格必须非空且位于 [0, 1]: {grid}")
    base = theta if theta is not None else ThetaParams.default(corpus.k_resources)
    corpus.warm(corpus.config.jobs)
    results = [(w, corpus_accuracy(corpus, base.with_omega1(w))) for w in grid]
    logger.debug(f"ω_1 敏感性扫描: {results}")
    return results
