import math

import numpy as np
import pytest

from conftest import make_corpus, make_window
from src.common.errors import InputValidationError
from src.evaluation.ablation import VARIANTS, ablation_run, sign_test, variant_configs
from src.evaluation.baselines import correlation_baseline, lagged_correlations
from src.evaluation.benchmark import LATENCY_TARGET_MS, ScalingTable, bench_latency, bench_window_grid
from src.evaluation.evaluator import cross_validate, evaluate_corpus, fold_of
from src.evaluation.sweeps import SweepTable, robustness_sweep
from src.learning.theta import ThetaParams
from src.simulator.presets import default_template
from src.telemetry.telemetry_window import ModelConfig, TelemetryWindow


class TestCorrelationBaseline:
    def test_lagged_correlation_layout(self):
        window = make_window(n_slices=2, k_resources=1, n_ticks=400, edges={(0, 1): (2, 0.9)}, seed=4)
        correlations = lagged_correlations(window.slice_signals, 3)
        assert correlations.shape == (3, 2, 2)
        assert int(np.argmax(np.abs(correlations[:, 0, 1]))) == 1

    def test_detects_lagged_pair(self):
        window = make_window(n_slices=3, k_resources=1, n_ticks=300, edges={(0, 1): (2, 0.8)}, seed=6)
        graph = correlation_baseline(window, ModelConfig(p=3, q=3, bootstrap_resamples=0))
        assert (0, 1) in graph.edge_set()
        assert graph.edges[(0, 1)].lag_estimate == 2

    def test_flags_confounded_pair(self):
        # 未观测的共同驱动以不同滞后作用于两个切片
        rng = np.random.default_rng(12)
        driver = rng.standard_normal(302)
        raw = np.vstack([driver[1:301], driver[:300]]) + 0.3 * rng.standard_normal((2, 300))
        window = TelemetryWindow.from_raw(raw, np.full((2, 1, 300), 0.5), np.full((1, 300), 0.5))
        graph = correlation_baseline(window, ModelConfig(p=2, q=2, bootstrap_resamples=0))
        assert (0, 1) in graph.edge_set()


class TestEvaluator:
    def test_report_contents(self, small_corpus, small_config):
        report = evaluate_corpus(small_corpus, small_config)
        data = report.to_dict()
        assert data["n_scenarios"] == 4
        assert data["accuracy_definition"].startswith("edge-level")
        assert len(data["per_scenario"]) == 4
        assert report.edges.total == 4 * 6
        assert 0.0 <= report.accuracy <= 1.0
        assert data["latency_ms"]["count"] == 4

    def test_theta_override(self, small_corpus, small_config):
        theta = ThetaParams.default(2).with_omega1(1.0)
        report = evaluate_corpus(small_corpus, small_config, theta=theta)
        assert report.n_scenarios == 4

    def test_parallel_matches_serial(self, small_corpus, small_config):
        from dataclasses import replace

        serial = evaluate_corpus(small_corpus, small_config)
        parallel = evaluate_corpus(small_corpus, replace(small_config, jobs=3))
        assert serial.edges == parallel.edges

    def test_empty_corpus_rejected(self, small_corpus, small_config):
        with pytest.raises(InputValidationError):
            evaluate_corpus(small_corpus.subset([]), small_config)

    def test_fold_assignment_is_deterministic(self):
        folds = [fold_of(f"m{i:03d}", 7, 5) for i in range(50)]
        assert folds == [fold_of(f"m{i:03d}", 7, 5) for i in range(50)]
        assert all(0 <= f < 5 for f in folds)
        assert len(set(folds)) > 1

    def test_cross_validation(self, small_config):
        corpus = make_corpus(count=10, n_slices=3, k_resources=2, seed=8, config=small_config)
        result = cross_validate(corpus, small_config, folds=2, max_iters=10, seed=0)
        assert result["n_folds"] == 2
        assert result["folds"]
        held_out = [sid for fold in result["folds"] for sid in fold["scenarios"]]
        assert len(held_out) == len(set(held_out))
        assert result["pooled"]["n_scenarios"] == len(held_out)

    def test_cross_validation_needs_two_folds(self, small_corpus, small_config):
        with pytest.raises(InputValidationError):
            cross_validate(small_corpus, small_config, folds=1)


class TestAblation:
    def test_four_variants(self, small_corpus, small_config):
        learned = ThetaParams((0.3, 0.3), (0.5, 0.5), 0.6)
        table = ablation_run(small_corpus, small_config, learned_theta=learned)
        assert list(table.reports) == list(VARIANTS)
        assert len(table.deltas) == 3
        assert table.thetas["conditioned_granger"]["omega1"] == 1.0
        assert table.thetas["fused_learned_theta"]["omega1"] == 0.6
        assert [row["variant"] for row in table.rows()] == list(VARIANTS)

    def test_variant_configs(self, small_corpus, small_config):
        configs = variant_configs(small_corpus, small_config, ThetaParams.default(2), 1e-3, 10)
        assert configs["unconditioned_granger"].condition_on_resources is False
        assert configs["conditioned_granger"].condition_on_resources is True
        assert configs["fused_fixed_theta"].theta == ThetaParams.default(2)
        assert all(c.bootstrap_resamples == 0 for c in configs.values())

    def test_no_resources_collapses_variants(self, small_config):
        corpus = make_corpus(count=3, n_slices=3, k_resources=0, seed=2, config=small_config)
        configs = variant_configs(corpus, small_config, None, 1e-3, 10)
        assert len({id(c) for c in configs.values()}) == 1

    def test_sign_test(self):
        result = sign_test([0.5, 0.5, 0.5, 0.5], [0.6, 0.6, 0.5, 0.4])
        assert (result["wins"], result["losses"], result["ties"]) == (2, 1, 1)
        assert result["p_value"] == pytest.approx(1.0)
        assert sign_test([0.5], [0.5])["p_value"] == 1.0

    def test_empty_corpus_rejected(self, small_corpus, small_config):
        with pytest.raises(InputValidationError):
            ablation_run(small_corpus.subset([]), small_config)


class TestSweepsAndBench:
    def test_observability_sweep(self, small_config):
        table = robustness_sweep(default_template(), "observability", [1.0, 0.9], small_config, count=2, seed=1)
        assert table.column("value") == [1.0, 0.9]
        assert all(0.0 <= acc <= 1.0 for acc in table.column("accuracy"))
        assert math.isnan(table.trend()["rho"])

    def test_unknown_axis(self, small_config):
        with pytest.raises(InputValidationError):
            robustness_sweep(default_template(), "colour", [1.0], small_config)

    def test_empty_grid(self, small_config):
        with pytest.raises(InputValidationError):
            robustness_sweep(default_template(), "snr", [], small_config)

    def test_bench_latency(self):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=0, window_ticks=120)
        table = bench_latency([3, 6], config, repeats=5, seed=0)
        assert [row["n_slices"] for row in table.rows] == [3, 6]
        assert all(row["mean_ms"] > 0 for row in table.rows)
        assert set(table.slope) == {"slope", "intercept", "r_squared"}

    def test_bench_requires_repeats(self):
        with pytest.raises(InputValidationError):
            bench_latency([3], ModelConfig(), repeats=2)

    def test_bench_window_grid(self):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=0)
        table = bench_window_grid([60, 120], config, n_slices=3, repeats=5, seed=0)
        assert [row["window_ticks"] for row in table.rows] == [60, 120]
        assert all(row["n_slices"] == 3 and row["bootstrap_resamples"] == 0 for row in table.rows)
        assert all(row["pairwise_mean_ms"] > 0 for row in table.rows)
        assert np.isfinite(table.slope["slope"])

    def test_latency_target_names_bootstrap_setting(self):
        row = {"n_slices": 15, "window_ticks": 300, "mean_ms": 137.0, "bootstrap_resamples": 200}
        target = ScalingTable(rows=[row]).latency_target()
        assert target["target_ms"] == LATENCY_TARGET_MS
        assert target["bootstrap_resamples"] == 200
        assert not target["met"]
        fast = ScalingTable(rows=[{**row, "mean_ms": 65.0, "bootstrap_resamples": 0}]).latency_target()
        assert fast["met"]
        assert ScalingTable(rows=[{**row, "n_slices": 8}]).to_dict()["latency_target"] is None


class TestSweepTrend:
    @staticmethod
    def table(values, per_scenario):
        rows = [
            {"value": v, "accuracy": float(np.mean(accs)), "scenario_accuracy": list(accs)}
            for v, accs in zip(values, per_scenario)
        ]
        return SweepTable(axis="snr", rows=rows, seed=0, count=len(per_scenario[0]))

    def test_paired_trend_ignores_scenario_difficulty(self):
        # 场景难度差异很大，但每个场景都随网格值单调上升
        rng = np.random.default_rng(0)
        base = rng.uniform(0.5, 0.9, size=30)
        values = [10.0, 20.0, 30.0, 40.0]
        per_scenario = [base + 0.01 * i + rng.uniform(0, 0.001, size=30) for i in range(4)]
        trend = self.table(values, per_scenario).trend()
        assert trend["rho"] > 0.8
        assert trend["p_value"] < 0.05

    def test_no_trend_when_levels_identical(self):
        per_scenario = [[0.9, 0.8, 0.95]] * 2 + [[0.8, 0.9, 0.95]]
        trend = self.table([1.0, 2.0, 3.0], per_scenario).trend()
        assert abs(trend["rho"]) < 0.5

    def test_summary_rows_drop_scenario_detail(self):
        table = self.table([1.0, 2.0, 3.0], [[0.5, 0.6]] * 3)
        assert all("scenario_accuracy" not in row for row in table.summary_rows())
