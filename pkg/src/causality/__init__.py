# 因果溯源模块
from .attribution import (
    AttackPath,
    AttributionResult,
    CausalGraph,
    Hop,
    PairTestResult,
    attribute,
    compute_pairwise_evidence,
    extract_path,
)
from .contention import ContentionParams, contention_matrix, contention_over_window
from .fusion import MixingWeights, integrated_strength, normalize_f
from .granger import GrangerResult, enhanced_granger_test, pairwise_granger
from .hop_confidence import hop_confidence, hop_timestamp

__all__ = [
    "AttackPath",
    "AttributionResult",
    "CausalGraph",
    "ContentionParams",
    "GrangerResult",
    "Hop",
    "MixingWeights",
    "PairTestResult",
    "attribute",
    "compute_pairwise_evidence",
    "contention_matrix",
    "contention_over_window",
    "enhanced_granger_test",
    "extract_path",
    "hop_confidence",
    "hop_timestamp",
    "integrated_strength",
    "normalize_f",
    "pairwise_granger",
]
