import json
import math

import numpy as np
import pytest

from conftest import make_corpus, make_window
from src.common.errors import InputValidationError
from src.learning.corpus import Scenario, TrainingCorpus
from src.learning.likelihood import (
    GAMMA_CEIL,
    data_log_likelihood,
    gradient,
    log_likelihood,
    penalty,
    sample_planted_labels,
    scenario_gamma,
)
from src.learning.theta import ThetaParams
from src.learning.trainer import (
    corpus_accuracy,
    initial_theta,
    predicted_edges,
    sensitivity_sweep,
    train,
)
from src.telemetry.telemetry_window import ModelConfig


class TestThetaParams:
    def test_default(self):
        theta = ThetaParams.default(4)
        assert theta.weights == (0.25,) * 4
        assert theta.thresholds == (0.5,) * 4
        assert theta.omega1 == 0.67
        assert theta.omega2 == pytest.approx(0.33)

    def test_free_space_round_trip(self):
        theta = ThetaParams((0.45, 0.31, 0.24), (0.2, 0.5, 0.9), 0.67)
        restored = ThetaParams.from_free(theta.to_free())
        np.testing.assert_allclose(restored.weights, theta.weights, rtol=1e-10)
        np.testing.assert_allclose(restored.thresholds, theta.thresholds, rtol=1e-10)
        assert restored.omega1 == pytest.approx(theta.omega1, rel=1e-10)

    def test_any_free_vector_is_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            theta = ThetaParams.from_free(rng.normal(0.0, 20.0, size=7))
            assert all(w >= 0 for w in theta.weights)
            assert all(0.0 <= t <= 1.0 for t in theta.thresholds)
            assert 0.0 <= theta.omega1 <= 1.0

    @pytest.mark.parametrize(
        "weights,thresholds,omega1",
        [((-0.1,), (0.5,), 0.5), ((0.1,), (1.5,), 0.5), ((0.1,), (0.5,), 1.1), ((0.1, 0.2), (0.5,), 0.5)],
    )
    def test_constraints(self, weights, thresholds, omega1):
        with pytest.raises(InputValidationError):
            ThetaParams(weights, thresholds, omega1)

    def test_save_and_load(self, tmp_path):
        theta = ThetaParams((0.45, 0.31, 0.24), (0.5, 0.5, 0.5), 0.67)
        path = tmp_path / "theta.json"
        theta.save(path, extra={"lambda": 1e-3})
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["omega2"] == pytest.approx(0.33)
        assert data["lambda"] == 1e-3
        assert ThetaParams.load(path) == theta

    def test_load_rejects_malformed_json(self, tmp_path):
        path = tmp_path / "theta.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(InputValidationError, match="line 1"):
            ThetaParams.load(path)


def single_pair_corpus() -> TrainingCorpus:
    """两切片、零分配：ρ ≡ 0，Γ = ω_1·φ"""
    window = make_window(n_slices=2, k_resources=1, n_ticks=60, seed=3)
    zero = type(window)(window.slice_signals, np.zeros_like(window.allocations), window.utilization)
    scenarios = [Scenario("a", zero, frozenset({(0, 1)})), Scenario("b", zero, frozenset())]
    return TrainingCorpus(scenarios, ModelConfig(p=2, q=2))


class TestLikelihood:
    def test_bernoulli_terms(self):
        corpus = single_pair_corpus()
        evidence = corpus.evidence(0)
        theta = ThetaParams((1.0,), (0.5,), omega1=0.5)
        gamma = scenario_gamma(corpus[0], evidence, theta)
        expected = 0.0
        for scenario in corpus:
            labels = scenario.label_matrix()
            for i, j in ((0, 1), (1, 0)):
                g = min(max(gamma[i, j], 1e-6), GAMMA_CEIL)
                expected += math.log(g) if labels[i, j] else math.log1p(-g)
        assert data_log_likelihood(theta, corpus) == pytest.approx(expected)

    def test_penalty(self):
        theta = ThetaParams((0.45, 0.31, 0.24), (0.5, 0.5, 0.5), 0.67)
        squares = 0.45**2 + 0.31**2 + 0.24**2 + 3 * 0.25 + 0.67**2
        assert penalty(theta, 1e-3) == pytest.approx(1e-3 * squares)

    def test_nonincreasing_in_lambda(self, small_corpus):
        theta = ThetaParams.default(2)
        values = [log_likelihood(theta, small_corpus, lam) for lam in (0.0, 1e-3, 1e-1, 1.0)]
        assert values == sorted(values, reverse=True)

    def test_empty_corpus(self):
        with pytest.raises(InputValidationError):
            log_likelihood(ThetaParams.default(1), TrainingCorpus([]))

    def test_resource_mismatch(self, small_corpus):
        with pytest.raises(InputValidationError):
            log_likelihood(ThetaParams.default(3), small_corpus)

    def test_gradient_matches_finite_differences(self, small_corpus):
        rng = np.random.default_rng(17)
        h = 1e-5
        for _ in range(20):
            free = rng.normal(0.0, 0.8, size=5)
            theta = ThetaParams.from_free(free)
            analytic = gradient(theta, small_corpus, lam=1e-3)
            numeric = np.empty_like(free)
            for k in range(free.size):
                step = np.zeros_like(free)
                step[k] = h
                upper = log_likelihood(ThetaParams.from_free(free + step), small_corpus, 1e-3)
                lower = log_likelihood(ThetaParams.from_free(free - step), small_corpus, 1e-3)
                numeric[k] = (upper - lower) / (2 * h)
            scale = max(1.0, float(np.max(np.abs(numeric))))
            assert np.max(np.abs(analytic - numeric)) / scale < 1e-4

    def test_planted_labels_are_reproducible(self, small_corpus):
        theta = ThetaParams((0.5, 0.5), (0.5, 0.5), 0.67)
        first = sample_planted_labels(small_corpus, theta, seed=3)
        second = sample_planted_labels(small_corpus, theta, seed=3)
        assert [s.truth for s in first] == [s.truth for s in second]
        for scenario in first:
            assert all(i != j for i, j in scenario.truth)


class TestTrainer:
    def test_requires_two_scenarios(self, small_corpus):
        with pytest.raises(InputValidationError):
            train(small_corpus.subset([0]))

    def test_initial_theta_is_seeded(self):
        assert initial_theta(3, seed=1) == initial_theta(3, seed=1)
        theta = initial_theta(3, seed=1)
        np.testing.assert_allclose(theta.weights, [1 / 3] * 3, atol=0.05)
        assert theta.omega1 == pytest.approx(0.5, abs=0.05)

    def test_likelihood_never_decreases(self, small_corpus):
        report = train(small_corpus, lam=1e-3, max_iters=50, seed=0)
        values = [entry["log_likelihood"] for entry in report.history]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert report.log_likelihood == values[-1]
        assert {"iteration", "log_likelihood", "step", "omega1"} <= set(report.history[0])

    def test_large_penalty_shrinks_parameters(self, small_corpus):
        loose = train(small_corpus, lam=0.0, max_iters=100, seed=0).theta
        tight = train(small_corpus, lam=50.0, max_iters=100, seed=0).theta
        assert np.linalg.norm(tight.constrained_vector()) < np.linalg.norm(loose.constrained_vector())

    def test_predicted_edges_use_dual_threshold(self, small_corpus):
        theta = ThetaParams.default(2)
        evidence = small_corpus.evidence(0)
        gamma = scenario_gamma(small_corpus[0], evidence, theta)
        for i, j in predicted_edges(small_corpus, 0, theta):
            assert gamma[i, j] > small_corpus.config.tau_causal
            assert evidence.p_adj[i, j] < small_corpus.config.alpha

    def test_sensitivity_sweep(self, small_corpus):
        grid = [0.0, 0.5, 0.67, 1.0]
        results = sensitivity_sweep(small_corpus, grid)
        assert [w for w, _ in results] == grid
        assert all(0.0 <= acc <= 1.0 for _, acc in results)
        assert dict(results)[0.67] == pytest.approx(corpus_accuracy(small_corpus, ThetaParams.default(2)))

    def test_sensitivity_grid_bounds(self, small_corpus):
        with pytest.raises(InputValidationError):
            sensitivity_sweep(small_corpus, [0.5, 1.2])

    @pytest.mark.slow
    def test_recovers_planted_mixing_weight(self):
        config = ModelConfig(p=2, q=2)
        corpus = make_corpus(count=40, n_slices=5, k_resources=3, seed=13, config=config)
        planted = ThetaParams((0.45, 0.31, 0.24), (0.5, 0.5, 0.5), 0.67)
        relabeled = sample_planted_labels(corpus, planted, seed=1)
        report = train(relabeled, lam=1e-3, max_iters=2000, seed=0)
        assert report.theta.omega1 == pytest.approx(0.67, abs=0.15)
        assert report.log_likelihood >= report.history[0]["log_likelihood"]
