# 溯源流程模块
from .attribution_flow import AttributionFlow, AttributionOutcome, load_theta, run_attribution

__all__ = ["AttributionFlow", "AttributionOutcome", "load_theta", "run_attribution"]
