"""
异常定义模块
库代码只负责抛出，CLI 入口与插件指令负责捕获并映射为退出码或提示信息
"""

from __future__ import annotations

from typing import Any


class InputValidationError(ValueError):
    """输入数据、配置或场景规格不满足约束（退出码 2）"""


class NumericalFailure(ArithmeticError):
    """数值计算失败（退出码 4）"""


class RankDeficiencyError(NumericalFailure):
    """设计矩阵列秩不足"""


class DivergenceError(NumericalFailure):
    """参数学习过程中似然变为非有限值

    Attributes:
        last_theta: 最后一个似然有限的参数
        history: 截至发散前的迭代日志
    """

    def __init__(self, message: str, last_theta: Any = None, history: list | None = None):
        super().__init__(message)
        self.last_theta = last_theta
        self.history = history or []
