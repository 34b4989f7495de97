# 渲染模块
from .report_renderer import AttributionRenderer, LayoutConfig

__all__ = ["AttributionRenderer", "LayoutConfig"]
