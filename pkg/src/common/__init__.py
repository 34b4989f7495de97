# 公共模块
from .errors import (
    DivergenceError,
    InputValidationError,
    NumericalFailure,
    RankDeficiencyError,
)

__all__ = [
    "DivergenceError",
    "InputValidationError",
    "NumericalFailure",
    "RankDeficiencyError",
]
