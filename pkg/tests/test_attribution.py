from dataclasses import replace

import numpy as np
import pytest

from conftest import make_window
from src.causality.attribution import (
    PHASES,
    AttackPath,
    CausalGraph,
    PairTestResult,
    attribute,
    build_graph,
    extract_path,
)
from src.causality.hop_confidence import hop_confidence, hop_timestamp, onset_tick
from src.common.errors import InputValidationError
from src.telemetry.telemetry_window import ModelConfig, TelemetryWindow


def pair_result(source: int, target: int, gamma: float, p_adj: float, lag: int = 1, onset: float = 0.0):
    return PairTestResult(
        source=source,
        target=target,
        f_stat=10.0,
        p_value=p_adj,
        p_adj=p_adj,
        rho=0.1,
        phi=gamma,
        gamma=gamma,
        lag_estimate=lag,
        onset=onset,
        source_onset=0.0,
    )


class TestAttribute:
    def test_two_slice_planted_edge(self, small_config):
        window = make_window(n_slices=2, k_resources=1, n_ticks=300, edges={(0, 1): (1, 0.8)}, seed=21)
        result = attribute(window, small_config)
        assert result.graph.edge_set() == frozenset({(0, 1)})
        assert result.path.nodes == (0, 1)
        assert result.path.path_score == pytest.approx(result.graph.edges[(0, 1)].gamma)

    def test_independent_bystander(self, planted_window, small_config):
        result = attribute(planted_window, small_config)
        assert result.graph.edge_set() == frozenset({(0, 1)})
        assert result.path.nodes == (0, 1)

    def test_edges_satisfy_both_thresholds(self, planted_window, small_config):
        result = attribute(planted_window, small_config)
        assert len(result.pairs) == 6
        for edge in result.graph.edges.values():
            assert edge.gamma > small_config.tau_causal
            assert edge.p_adj < small_config.alpha
        for pair in result.pairs:
            if pair.pair not in result.graph.edges:
                assert not (pair.gamma > small_config.tau_causal and pair.p_adj < small_config.alpha)

    def test_deterministic(self, planted_window):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=30, seed=3)
        first = attribute(planted_window, config).to_dict(config)
        second = attribute(planted_window, config).to_dict(config)
        first.pop("timing")
        second.pop("timing")
        assert first == second

    def test_pure_noise_rarely_yields_a_path(self, small_config):
        empty = 0
        for seed in range(20):
            window = make_window(n_slices=4, k_resources=2, n_ticks=300, seed=100 + seed)
            result = attribute(window, small_config)
            if result.path.empty:
                assert result.path.to_dict()["length"] == 0
                empty += 1
        assert empty >= 16

    def test_long_stream_analysed_over_first_window(self, small_config):
        stream = make_window(n_slices=3, k_resources=1, n_ticks=600, edges={(0, 1): (1, 0.8)}, seed=12)
        result = attribute(stream, small_config)
        window = result.to_dict()["window"]
        assert (window["start_tick"], window["stop_tick"]) == (0, 300)
        assert window["start_time"] == 0.0
        first_half = TelemetryWindow.from_raw(
            stream.raw_signals[:, :300], stream.allocations[:, :, :300], stream.utilization[:, :300]
        )
        expected = attribute(first_half, small_config)
        assert [p.f_stat for p in result.pairs] == [p.f_stat for p in expected.pairs]

    def test_window_offset_recorded(self, small_config):
        stream = make_window(n_slices=3, k_resources=1, n_ticks=600, edges={(0, 1): (1, 0.8)}, seed=12)
        config = replace(small_config, window_start_tick=200)
        result = attribute(stream, config)
        assert result.span.start_tick == 200
        assert result.span.stop_tick == 500
        assert result.span.start_time == pytest.approx(20.0)
        assert result.to_dict(config)["config"]["window_start_tick"] == 200

    def test_window_offset_past_end_rejected(self, planted_window, small_config):
        with pytest.raises(InputValidationError):
            attribute(planted_window, replace(small_config, window_start_tick=10))

    def test_timings_cover_every_phase(self, planted_window, small_config):
        result = attribute(planted_window, small_config)
        assert set(result.timings) == set(PHASES)

    def test_theta_argument_overrides_config(self, planted_window, small_config):
        from src.learning.theta import ThetaParams

        theta = ThetaParams((1.0,), (0.5,), omega1=1.0)
        result = attribute(planted_window, small_config, theta=theta)
        for pair in result.pairs:
            assert pair.gamma == pytest.approx(pair.phi)

    def test_window_too_short(self, small_config):
        window = make_window(n_slices=2, k_resources=1, n_ticks=8)
        with pytest.raises(InputValidationError):
            attribute(window, small_config)


class TestGraphAndPath:
    def test_self_loop_rejected(self):
        with pytest.raises(InputValidationError):
            CausalGraph(("a", "b"), {(1, 1): pair_result(1, 1, 0.9, 0.001)})

    def test_build_graph_uses_conjunction(self):
        pairs = [
            pair_result(0, 1, 0.9, 0.001),
            pair_result(1, 2, 0.9, 0.2),  # p_adj 过大
            pair_result(2, 0, 0.3, 0.001),  # Γ 过小
        ]
        graph = build_graph(("a", "b", "c"), pairs, tau_causal=0.42, alpha=0.05)
        assert graph.edge_set() == frozenset({(0, 1)})

    def test_empty_graph_gives_empty_path(self):
        path = extract_path(CausalGraph(("a", "b")))
        assert path == AttackPath()
        assert path.empty

    def test_hop_timestamps_are_monotone(self):
        edges = {
            (0, 1): pair_result(0, 1, 0.9, 0.001, lag=21, onset=2.1),
            (1, 2): pair_result(1, 2, 0.8, 0.001, lag=4, onset=0.4),
        }
        path = extract_path(CausalGraph(("a", "b", "c"), edges))
        assert path.nodes == (0, 1, 2)
        times = [hop.timestamp for hop in path.hops]
        assert times == [0.0, 2.1, 2.1]
        assert [hop.slice_id for hop in path.hops] == ["a", "b", "c"]
        assert path.path_score == pytest.approx(0.72)

    def test_graph_to_networkx(self):
        edges = {(0, 1): pair_result(0, 1, 0.9, 0.001)}
        graph = CausalGraph(("a", "b"), edges).to_networkx()
        assert graph.nodes[0]["slice_id"] == "a"
        assert graph.edges[0, 1]["gamma"] == 0.9


def spike_window() -> TelemetryWindow:
    raw = np.zeros((2, 50))
    raw[0, 0] = 10.0
    raw[1, 1:] = np.linspace(0.0, 1.0, 49)
    return TelemetryWindow.from_raw(raw, np.full((2, 1, 50), 0.5), np.full((1, 50), 0.5), tick_duration=0.1)


class TestHopTiming:
    def test_onset_at_spike(self):
        window = spike_window()
        assert onset_tick(window.slice_signals[0]) == 0

    def test_case_study_payload_time(self):
        edge = pair_result(0, 1, 0.9, 0.001, lag=21)
        assert hop_timestamp(edge, spike_window()) == pytest.approx(2.1)

    def test_fallback_to_window_start(self):
        window = replace(spike_window(), window_start=5.0)
        edge = pair_result(1, 0, 0.9, 0.001, lag=1)
        # 源切片是线性爬升，从未超过 2 个标准差
        assert onset_tick(window.slice_signals[1]) is None
        assert hop_timestamp(edge, window) == pytest.approx(5.1)


class TestHopConfidence:
    def test_zero_p_adj_gives_full_confidence(self, planted_window):
        edge = pair_result(0, 1, 0.9, 0.0)
        point, interval = hop_confidence(edge, planted_window, ModelConfig(p=2, q=2, bootstrap_resamples=0))
        assert point == 1.0
        assert interval == (0.9, 0.9)

    def test_planted_edge_interval(self, planted_window):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=200, seed=1)
        result = attribute(planted_window, config)
        hop = result.path.hops[-1]
        low, high = hop.interval
        assert 0.0 <= low <= high <= 1.0
        assert 0.0 <= hop.confidence <= 1.0

    def test_planted_edge_interval_brackets_gamma(self, planted_window):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=200, seed=1)
        result = attribute(planted_window, config)
        edge = result.graph.edges[(0, 1)]
        low, high = hop_confidence(edge, planted_window, config, result.f_bounds)[1]
        # 最强边 φ = 1，约一半重采样的 F 超过原窗口 F_max 后截断为 1
        assert low <= edge.gamma + 1e-9
        assert high >= edge.gamma - 0.01
        assert high - low < 0.3

    def test_interval_is_reproducible(self, planted_window):
        config = ModelConfig(p=2, q=2, bootstrap_resamples=50, seed=4)
        result = attribute(planted_window, config)
        edge = result.graph.edges[(0, 1)]
        first = hop_confidence(edge, planted_window, config, result.f_bounds)
        second = hop_confidence(edge, planted_window, config, result.f_bounds)
        assert first == second
