import numpy as np
import pytest
from scipy import signal, stats

from src.causality.granger import (
    build_designs,
    conditioning_matrix,
    enhanced_granger_test,
    f_statistic,
    granger_from_series,
    pairwise_granger,
    resampled_f_stats,
    restricted_fit,
)
from src.common.errors import InputValidationError
from src.telemetry.telemetry_window import ModelConfig, TelemetryWindow


class TestDesigns:
    def test_lag_layout(self):
        y = np.arange(10.0)
        x = np.arange(10.0) * 10.0
        z = np.arange(10.0)[np.newaxis] * 100.0
        designs = build_designs(y, x, z, p=2, q=3)
        # t 从 max(p, q) = 3 开始
        np.testing.assert_array_equal(designs.target, y[3:])
        np.testing.assert_array_equal(designs.unrestricted[0], [2.0, 1.0, 20.0, 10.0, 0.0, 300.0])
        np.testing.assert_array_equal(designs.restricted[0], [2.0, 1.0, 300.0])
        assert designs.unrestricted.shape == (7, 6)
        assert designs.restricted.shape == (7, 3)

    def test_too_short_series(self):
        with pytest.raises(InputValidationError):
            build_designs(np.zeros(5), np.zeros(5), np.zeros((2, 5)), p=2, q=2)


class TestFStatistic:
    def test_arithmetic(self):
        # ((10 - 8) / 2) / (8 / 16) = 2
        assert f_statistic(10.0, 8.0, 2, 16) == pytest.approx(2.0)

    def test_negative_improvement_clamped(self):
        assert f_statistic(5.0, 5.0000001, 2, 16) == 0.0


class TestGrangerFromSeries:
    def test_planted_coupling(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(300)
        y = rng.standard_normal(300)
        y[1:] += 0.8 * x[:-1]
        result = granger_from_series(y, x, None, p=2, q=2)
        assert result.p_value < 1e-6
        assert result.lag_estimate == 1
        assert result.dof == (2, 298 - 2 - 2 - 0 - 1)

    def test_constant_source(self):
        y = np.random.default_rng(2).standard_normal(50)
        result = granger_from_series(y, np.full(50, 3.0), None, p=2, q=2)
        assert result.f_stat == 0.0
        assert result.p_value == 1.0
        assert result.degenerate

    def test_lag_estimate_tracks_planted_lag(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(400)
        y = rng.standard_normal(400)
        y[4:] += 0.9 * x[:-4]
        assert granger_from_series(y, x, None, p=2, q=6).lag_estimate == 4

    def test_confounder_suppressed_by_conditioning(self):
        rng = np.random.default_rng(4)
        z = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(500))
        x = z + rng.standard_normal(500)
        y = z + rng.standard_normal(500)
        unconditioned = granger_from_series(y, x, None, p=2, q=2)
        conditioned = granger_from_series(y, x, z, p=2, q=2)
        assert unconditioned.p_value < 1e-3
        assert conditioned.p_value > 1e-3

    @pytest.mark.slow
    def test_null_p_values_are_uniform(self):
        rng = np.random.default_rng(5)
        p_values = []
        for _ in range(300):
            y, x = rng.standard_normal((2, 200))
            z = rng.standard_normal((1, 200))
            p_values.append(granger_from_series(y, x, z, p=2, q=2).p_value)
        assert stats.kstest(p_values, "uniform").pvalue > 1e-3


class TestWindowTests:
    def test_same_slice_rejected(self, planted_window, small_config):
        with pytest.raises(InputValidationError):
            enhanced_granger_test(planted_window, 1, 1, small_config)

    def test_pairwise_order_and_coverage(self, planted_window, small_config):
        results = pairwise_granger(planted_window, small_config)
        assert list(results) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        strongest = max(results, key=lambda pair: results[pair].f_stat)
        assert strongest == (0, 1)

    def test_pairwise_matches_single_test(self, planted_window, small_config):
        results = pairwise_granger(planted_window, small_config)
        single = enhanced_granger_test(planted_window, 2, 0, small_config)
        assert results[(2, 0)].f_stat == pytest.approx(single.f_stat, rel=1e-10)

    def test_parallel_matches_serial(self, planted_window, small_config):
        from dataclasses import replace

        serial = pairwise_granger(planted_window, small_config)
        parallel = pairwise_granger(planted_window, replace(small_config, jobs=3))
        assert list(serial) == list(parallel)
        for pair in serial:
            assert serial[pair].f_stat == parallel[pair].f_stat


def confounded_window(seed: int, offset: float = 0.8) -> TelemetryWindow:
    """资源利用率 offset + 0.05·d 驱动两个切片（载荷 2 与 1），切片间无直接耦合"""
    rng = np.random.default_rng(seed)
    d = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(300))
    d = (d - d.mean()) / d.std()
    raw = np.vstack([2.0 * d, d]) + rng.standard_normal((2, 300))
    allocations = np.full((2, 1, 300), 0.5)
    return TelemetryWindow.from_raw(raw, allocations, offset + 0.05 * d[np.newaxis])


class TestRestrictedFit:
    def test_matches_restricted_design(self):
        rng = np.random.default_rng(8)
        y, x = rng.standard_normal((2, 120))
        z = rng.standard_normal((2, 120))
        fit = restricted_fit(y, z, p=2, q=3)
        designs = build_designs(y, x, z, p=2, q=3)
        expected = np.linalg.lstsq(designs.restricted, designs.target, rcond=None)[0]
        np.testing.assert_allclose(fit.coefficients, expected, atol=1e-10)
        assert fit.residuals.size == 117

    def test_cached_fit_gives_same_statistic(self):
        rng = np.random.default_rng(9)
        y, x = rng.standard_normal((2, 150))
        z = rng.standard_normal((1, 150))
        cached = restricted_fit(y, z, p=3, q=3)
        direct = granger_from_series(y, x, z, p=3, q=3)
        reused = granger_from_series(y, x, z, p=3, q=3, cached_restricted=cached)
        assert reused.f_stat == pytest.approx(direct.f_stat, rel=1e-10)

    def test_too_short_series(self):
        with pytest.raises(InputValidationError):
            restricted_fit(np.zeros(3), None, p=2, q=2)


class TestResampledF:
    def test_identity_rows_reproduce_point_statistic(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(200)
        y = rng.standard_normal(200)
        y[2:] += 0.5 * x[:-2]
        z = rng.standard_normal((1, 200))
        designs = build_designs(y, x, z, p=3, q=3)
        rows = np.arange(designs.target.size)[np.newaxis, :]
        f_values = resampled_f_stats(designs, rows, p=3, q=3)
        assert f_values[0] == pytest.approx(granger_from_series(y, x, z, p=3, q=3).f_stat, rel=1e-8)

    def test_rows_must_cover_design(self):
        rng = np.random.default_rng(11)
        y, x = rng.standard_normal((2, 50))
        designs = build_designs(y, x, None, p=2, q=2)
        with pytest.raises(InputValidationError):
            resampled_f_stats(designs, np.zeros((3, 10), dtype=int), p=2, q=2)

    def test_repeated_row_gives_zero(self):
        rng = np.random.default_rng(12)
        y, x = rng.standard_normal((2, 50))
        designs = build_designs(y, x, None, p=2, q=2)
        rows = np.zeros((1, designs.target.size), dtype=int)
        assert resampled_f_stats(designs, rows, p=2, q=2)[0] == 0.0


class TestConditioningMatrix:
    def test_rows_standardized_and_constant_rows_dropped(self):
        rng = np.random.default_rng(13)
        utilization = np.vstack([0.7 + 0.05 * rng.standard_normal(80), np.full(80, 0.4)])
        window = TelemetryWindow.from_raw(rng.standard_normal((2, 80)), np.full((2, 2, 80), 0.5), utilization)
        z = conditioning_matrix(window, ModelConfig(p=2, q=2))
        assert z.shape == (1, 80)
        assert z[0].mean() == pytest.approx(0.0, abs=1e-12)
        assert z[0].std(ddof=1) == pytest.approx(1.0)

    def test_unconditioned_config_gives_empty_matrix(self):
        window = confounded_window(0)
        z = conditioning_matrix(window, ModelConfig(condition_on_resources=False))
        assert z.shape == (0, 300)

    def test_constant_resource_lowers_denominator_dof_only_by_varying_rows(self):
        rng = np.random.default_rng(14)
        utilization = np.vstack([0.7 + 0.05 * rng.standard_normal(100), np.full(100, 0.4)])
        window = TelemetryWindow.from_raw(rng.standard_normal((2, 100)), np.full((2, 2, 100), 0.5), utilization)
        result = enhanced_granger_test(window, 0, 1, ModelConfig(p=2, q=2))
        assert result.dof == (2, 98 - 2 - 2 - 1 - 1)

    def test_offset_utilization_confounder_removed(self):
        # 利用率均值远离 0 时同样要吸收共同驱动
        conditioned, unconditioned = ModelConfig(), ModelConfig(condition_on_resources=False)
        rejections = {"conditioned": 0, "unconditioned": 0}
        n_tests = 0
        for seed in range(100):
            window = confounded_window(seed)
            for source, target in ((0, 1), (1, 0)):
                n_tests += 1
                if enhanced_granger_test(window, source, target, conditioned).p_value < 0.05:
                    rejections["conditioned"] += 1
                if enhanced_granger_test(window, source, target, unconditioned).p_value < 0.05:
                    rejections["unconditioned"] += 1
        conditioned_rate = rejections["conditioned"] / n_tests
        unconditioned_rate = rejections["unconditioned"] / n_tests
        assert conditioned_rate <= 0.08
        assert unconditioned_rate >= 0.3
        assert unconditioned_rate >= 3 * conditioned_rate
