"""
正则化对数似然
每个有序切片对的真实标注视为以 Γ_ij(θ) 为成功概率的独立 Bernoulli 变量
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from ..common.errors import InputValidationError
from .corpus import Scenario, ScenarioEvidence, TrainingCorpus
from .theta import ThetaParams

GAMMA_FLOOR = 1e-6
GAMMA_CEIL = 1.0 - 1e-6
DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True)
class _ScenarioTerms:
    """单个场景在给定 θ 下的中间量"""

    gamma: np.ndarray  # N × N，未截断
    rho: np.ndarray  # N × N
    load: np.ndarray  # N × N × K，mean_t A_ik A_jk σ_kt
    load_slope: np.ndarray  # N × N × K，mean_t A_ik A_jk σ'_kt


def _terms(scenario: Scenario, evidence: ScenarioEvidence, theta: ThetaParams) -> _ScenarioTerms:
    window = evidence.window
    slope = theta.sigmoid_slope
    thresholds = np.asarray(theta.thresholds)[:, np.newaxis]
    stress = special.expit(slope * (window.utilization - thresholds))  # K × T
    stress_slope = stress * (1.0 - stress)
    alloc = window.allocations
    load = np.einsum("ikt,jkt,kt->ijk", alloc, alloc, stress) / window.n_ticks
    load_slope = np.einsum("ikt,jkt,kt->ijk", alloc, alloc, stress_slope) / window.n_ticks
    rho = load @ np.asarray(theta.weights, dtype=float)
    gamma = theta.omega1 * evidence.phi + theta.omega2 * rho
    return _ScenarioTerms(gamma=gamma, rho=rho, load=load, load_slope=load_slope)


def _off_diagonal(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def scenario_gamma(scenario: Scenario, evidence: ScenarioEvidence, theta: ThetaParams) -> np.ndarray:
    """场景内全部有序对的 Γ(θ)，N × N，对角线置 0"""
    gamma = _terms(scenario, evidence, theta).gamma.copy()
    np.fill_diagonal(gamma, 0.0)
    return gamma


def _bernoulli(labels: np.ndarray, gamma: np.ndarray, mask: np.ndarray) -> float:
    clipped = np.clip(gamma, GAMMA_FLOOR, GAMMA_CEIL)
    ll = labels * np.log(clipped) + (1.0 - labels) * np.log1p(-clipped)
    return float(np.sum(ll[mask]))


def penalty(theta: ThetaParams, lam: float) -> float:
    """λ‖(w, τ, ω_1)‖²"""
    vector = theta.constrained_vector()
    return float(lam * np.dot(vector, vector))


def _check(corpus: TrainingCorpus, lam: float, theta: ThetaParams) -> None:
    if len(corpus) == 0:
        raise InputValidationError("语料为空，无法计算似然")
    if lam < 0:
        raise InputValidationError(f"正则化系数必须非负: {lam}")
    if theta.k_resources != corpus.k_resources:
        raise InputValidationError(f"θ 的资源数 {theta.k_resources} 与语料资源数 {corpus.k_resources} 不一致")


def data_log_likelihood(theta: ThetaParams, corpus: TrainingCorpus) -> float:
    """Σ_m log P(C^(m) | θ)，不含惩罚项"""
    total = 0.0
    for index, scenario in enumerate(corpus):
        terms = _terms(scenario, corpus.evidence(index), theta)
        total += _bernoulli(scenario.label_matrix(), terms.gamma, _off_diagonal(scenario.window.n_slices))
    return total


def log_likelihood(theta: ThetaParams, corpus: TrainingCorpus, lam: float = DEFAULT_LAMBDA) -> float:
    """
    正则化对数似然 Σ_m log P(C^(m) | X, A, θ) − λ‖θ‖²

    Args:
        theta: 参数
        corpus: 训练语料，非空
        lam: L2 正则化系数

    Returns:
        似然值（越大越好）
    """
    _check(corpus, lam, theta)
    return data_log_likelihood(theta, corpus) - penalty(theta, lam)


def constrained_gradient(theta: ThetaParams, corpus: TrainingCorpus, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """对约束参数 [w..., τ..., ω_1] 的梯度；Γ 被截断处梯度为 0"""
    _check(corpus, lam, theta)
    k = theta.k_resources
    weights = np.asarray(theta.weights, dtype=float)
    grad_w = np.zeros(k)
    grad_tau = np.zeros(k)
    grad_omega = 0.0
    for index, scenario in enumerate(corpus):
        evidence = corpus.evidence(index)
        terms = _terms(scenario, evidence, theta)
        labels = scenario.label_matrix()
        mask = _off_diagonal(scenario.window.n_slices)
        inside = mask & (terms.gamma > GAMMA_FLOOR) & (terms.gamma < GAMMA_CEIL)
        gamma = np.where(inside, terms.gamma, 0.5)
        # dℓ/dΓ
        outer = np.where(inside, labels / gamma - (1.0 - labels) / (1.0 - gamma), 0.0)
        grad_omega += float(np.sum(outer * (evidence.phi - terms.rho)))
        grad_w += theta.omega2 * np.einsum("ij,ijk->k", outer, terms.load)
        grad_tau += -theta.sigmoid_slope * theta.omega2 * weights * np.einsum("ij,ijk->k", outer, terms.load_slope)
    grad = np.concatenate([grad_w, grad_tau, [grad_omega]])
    return grad - 2.0 * lam * theta.constrained_vector()


def gradient(theta: ThetaParams, corpus: TrainingCorpus, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """
    对自由参数 (a, b, c) 的解析梯度

    w = softplus(a)，τ = logistic(b)，ω_1 = logistic(c)
    """
    grad = constrained_gradient(theta, corpus, lam)
    free = theta.to_free()
    k = theta.k_resources
    chain = np.concatenate(
        [
            special.expit(free[:k]),
            np.asarray(theta.thresholds) * (1.0 - np.asarray(theta.thresholds)),
            [theta.omega1 * theta.omega2],
        ]
    )
    return grad * chain


def sample_planted_labels(corpus: TrainingCorpus, theta: ThetaParams, seed: int) -> TrainingCorpus:
    """
    按 Bernoulli(Γ(θ*)) 重新抽取每个场景的真实边集

    用于验证参数学习能否找回 θ*；场景顺序固定，结果只取决于 (语料, θ*, seed)。
    """
    rng = np.random.default_rng(seed)
    truths = []
    for index, scenario in enumerate(corpus):
        gamma = np.clip(scenario_gamma(scenario, corpus.evidence(index), theta), 0.0, 1.0)
        draws = rng.random(gamma.shape) < gamma
        np.fill_diagonal(draws, False)
        truths.append(frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(draws))))
    return corpus.relabeled(truths)
