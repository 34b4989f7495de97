# 参数学习模块
# theta 被 telemetry 与 causality 引用，包级只导出 theta；语料、似然与训练请从子模块导入
from .theta import DEFAULT_OMEGA1, ThetaParams

__all__ = ["DEFAULT_OMEGA1", "ThetaParams"]
