import pytest

from src.causality.attribution import AttackPath, CausalGraph, PairTestResult
from src.common.errors import InputValidationError
from src.evaluation.metrics import (
    EdgeScore,
    average_precision,
    latency_summary,
    roc_auc,
    score_edge_sets,
    score_edges,
    score_path,
    wilson_interval,
)

CHAIN = {(0, 1), (1, 2), (2, 3), (3, 4)}


class TestEdgeScore:
    def test_confusion_counts(self):
        score = score_edge_sets({(0, 1), (1, 2), (2, 3), (4, 0)}, CHAIN, n_slices=5)
        assert (score.tp, score.fp, score.fn, score.tn) == (3, 1, 1, 15)
        assert score.precision == pytest.approx(0.75)
        assert score.recall == pytest.approx(0.75)
        assert score.accuracy == pytest.approx(0.9)
        assert score.fdr == pytest.approx(0.25)

    def test_no_predictions(self):
        score = score_edge_sets(set(), CHAIN, n_slices=5)
        assert score.precision == 1.0
        assert score.recall == 0.0
        assert score.fdr == 0.0

    def test_no_truth(self):
        score = score_edge_sets({(0, 1)}, set(), n_slices=3)
        assert score.recall == 1.0
        assert score.precision == 0.0

    def test_scores_add(self):
        total = EdgeScore(1, 2, 3, 4) + EdgeScore(4, 3, 2, 1)
        assert total == EdgeScore(5, 5, 5, 5)
        assert total.total == 20

    def test_self_loop_rejected(self):
        with pytest.raises(InputValidationError):
            score_edge_sets({(1, 1)}, set(), n_slices=3)

    def test_out_of_range_rejected(self):
        with pytest.raises(InputValidationError):
            score_edge_sets(set(), {(0, 5)}, n_slices=3)

    def test_to_dict_carries_intervals(self):
        data = score_edge_sets({(0, 1)}, {(0, 1)}, n_slices=3).to_dict()
        assert data["tp"] == 1
        assert data["accuracy"] == 1.0
        assert set(data["intervals"]) == {"accuracy", "precision", "recall", "fdr"}


class TestScoreEdges:
    def graph(self) -> CausalGraph:
        edge = PairTestResult(
            source=0, target=1, f_stat=9.0, p_value=0.001, p_adj=0.001,
            rho=0.2, phi=0.9, gamma=0.8, lag_estimate=1, onset=0.1, source_onset=0.0,
        )
        return CausalGraph(("a", "b", "c"), {(0, 1): edge})

    def test_against_truth(self):
        score = score_edges(self.graph(), {(0, 1), (1, 2)}, ("a", "b", "c"))
        assert (score.tp, score.fp, score.fn, score.tn) == (1, 0, 1, 4)

    def test_node_mismatch(self):
        with pytest.raises(InputValidationError, match="节点"):
            score_edges(self.graph(), {(0, 1)}, ("a", "b", "d"))


class TestScorePath:
    def test_partial_overlap(self):
        result = score_path((0, 1), (0, 1, 2))
        assert result.exact_match is False
        assert result.hop_overlap == pytest.approx(0.5)

    def test_exact(self):
        result = score_path([8, 12, 0], (8, 12, 0))
        assert result.exact_match is True
        assert result.hop_overlap == 1.0

    def test_both_empty(self):
        result = score_path(AttackPath(), ())
        assert (result.exact_match, result.hop_overlap) == (True, 1.0)

    def test_empty_truth_with_prediction(self):
        assert score_path((0, 1), ()).to_dict() == {"exact_match": False, "hop_overlap": 0.0}


class TestIntervalsAndRanking:
    def test_wilson(self):
        low, high = wilson_interval(3, 4)
        assert low == pytest.approx(0.3006, abs=1e-3)
        assert high == pytest.approx(0.9544, abs=1e-3)

    def test_wilson_without_trials(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_auc(self):
        assert roc_auc([1, 0, 1, 0], [0.9, 0.1, 0.8, 0.2]) == 1.0
        assert roc_auc([1, 0], [0.1, 0.9]) == 0.0
        assert roc_auc([1, 1], [0.1, 0.9]) is None

    def test_average_precision(self):
        assert average_precision([1, 0, 1, 0], [0.9, 0.1, 0.8, 0.2]) == 1.0
        assert average_precision([0, 1], [0.9, 0.1]) == pytest.approx(0.5)
        assert average_precision([0, 0], [0.9, 0.1]) is None

    def test_latency_summary(self):
        summary = latency_summary([1.0, 2.0, 3.0])
        assert summary["mean"] == pytest.approx(2.0)
        assert summary["sd"] == pytest.approx(1.0)
        assert summary["count"] == 3
        assert latency_summary([])["count"] == 0
