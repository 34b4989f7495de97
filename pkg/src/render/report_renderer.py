"""
渲染器模块
将溯源结果绘制为图片：切片环形布局、按 Γ 加粗的因果边、高亮的攻击路径、逐跳表格与事件时间线
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING, Any

from PIL import Image, ImageDraw, ImageFont

from astrbot.api import logger

if TYPE_CHECKING:
    from ..causality.attribution import AttributionResult

FONT_DIR = Path(__file__).resolve().parent.parent / "assets" / "font"


# 布局常量配置
class LayoutConfig:
    WIDTH = 1400
    GRAPH_SIZE = 760
    PADDING = 40
    TITLE_HEIGHT = 90
    NODE_RADIUS = 26
    ROW_HEIGHT = 34
    HEADER_HEIGHT = 54
    PANEL_WIDTH = 560

    # 颜色配置
    COLOR_BG = (30, 30, 30)
    COLOR_TEXT = (255, 255, 255)
    COLOR_ACCENT = (255, 215, 0)
    COLOR_SUB_TEXT = (200, 200, 200)
    COLOR_EDGE = (120, 140, 170)
    COLOR_PATH = (235, 80, 70)
    COLOR_NODE = (60, 70, 90)


class AttributionRenderer:
    """溯源结果渲染器"""

    def __init__(self, font_path: Path | None = None):
        self.font_path = font_path if font_path is not None else self._find_font()

    @staticmethod
    def _find_font() -> Path | None:
        """优先使用 assets/font 下的字体文件"""
        if FONT_DIR.is_dir():
            for candidate in sorted(FONT_DIR.iterdir()):
                if candidate.suffix.lower() in {".ttf", ".otf", ".ttc"}:
                    return candidate
        logger.debug(f"未找到内置字体，使用 Pillow 默认字体: {FONT_DIR}")
        return None

    def _get_font(self, size: int):
        try:
            if self.font_path:
                return ImageFont.truetype(str(self.font_path), size)
            return ImageFont.load_default(size=size)
        except (OSError, TypeError):
            return ImageFont.load_default()

    def _label(self, zh: str, en: str) -> str:
        # 默认字体不含中文字形
        return zh if self.font_path else en

    @staticmethod
    def circle_layout(n_nodes: int, center: tuple[float, float], radius: float) -> list[tuple[float, float]]:
        """节点等角分布在圆周上，0 号节点位于正上方"""
        cx, cy = center
        return [
            (
                cx + radius * math.sin(2 * math.pi * index / n_nodes),
                cy - radius * math.cos(2 * math.pi * index / n_nodes),
            )
            for index in range(n_nodes)
        ]

    def _draw_arrow(self, draw: ImageDraw.ImageDraw, start, end, color, width: int):
        LC = LayoutConfig
        dx, dy = end[0] - start[0], end[1] - start[1]
        length = math.hypot(dx, dy)
        if length <= 2 * LC.NODE_RADIUS:
            return
        ux, uy = dx / length, dy / length
        tail = (start[0] + ux * LC.NODE_RADIUS, start[1] + uy * LC.NODE_RADIUS)
        tip = (end[0] - ux * LC.NODE_RADIUS, end[1] - uy * LC.NODE_RADIUS)
        draw.line([tail, tip], fill=color, width=width)
        size = 10 + width
        left = (tip[0] - ux * size - uy * size * 0.5, tip[1] - uy * size + ux * size * 0.5)
        right = (tip[0] - ux * size + uy * size * 0.5, tip[1] - uy * size - ux * size * 0.5)
        draw.polygon([tip, left, right], fill=color)

    def render_attribution(
        self,
        result: AttributionResult,
        title: str = "",
        events: list[dict[str, Any]] | None = None,
    ) -> Image.Image:
        """
        渲染一次溯源结果

        Args:
            result: attribute() 的返回值
            title: 标题，通常为场景名
            events: 场景事件时间线 [{"name", "time"}]

        Returns:
            RGBA 图片
        """
        LC = LayoutConfig
        events = events or []
        hops = result.path.hops
        panel_rows = len(hops) + len(events) + 6
        height = max(
            LC.TITLE_HEIGHT + LC.GRAPH_SIZE + LC.PADDING * 2,
            LC.TITLE_HEIGHT + LC.HEADER_HEIGHT * 3 + LC.ROW_HEIGHT * panel_rows + LC.PADDING * 2,
        )
        image = Image.new("RGBA", (LC.WIDTH, height), LC.COLOR_BG)
        draw = ImageDraw.Draw(image)

        title_font = self._get_font(44)
        header_font = self._get_font(30)
        text_font = self._get_font(22)
        node_font = self._get_font(16)

        heading = title or self._label("切片溯源结果", "Slice attribution")
        draw.text((LC.WIDTH // 2, LC.PADDING), heading, font=title_font, fill=LC.COLOR_ACCENT, anchor="mt")

        # 因果图
        nodes = result.graph.nodes
        graph_top = LC.TITLE_HEIGHT + LC.PADDING
        center = (LC.PADDING + LC.GRAPH_SIZE / 2, graph_top + LC.GRAPH_SIZE / 2)
        positions = self.circle_layout(len(nodes), center, LC.GRAPH_SIZE / 2 - LC.NODE_RADIUS * 2)
        path_pairs = set(result.path.pairs())
        path_nodes = set(result.path.nodes)

        for (i, j), edge in sorted(result.graph.edges.items()):
            if (i, j) in path_pairs:
                continue
            width = 1 + int(round(5 * edge.gamma))
            self._draw_arrow(draw, positions[i], positions[j], LC.COLOR_EDGE, width)
        for i, j in result.path.pairs():
            edge = result.graph.edges[(i, j)]
            self._draw_arrow(draw, positions[i], positions[j], LC.COLOR_PATH, 2 + int(round(6 * edge.gamma)))

        for index, (x, y) in enumerate(positions):
            r = LC.NODE_RADIUS
            outline = LC.COLOR_PATH if index in path_nodes else LC.COLOR_SUB_TEXT
            draw.ellipse([x - r, y - r, x + r, y + r], fill=LC.COLOR_NODE, outline=outline, width=3)
            draw.text((x, y), nodes[index], font=node_font, fill=LC.COLOR_TEXT, anchor="mm")

        # 右侧面板
        x0 = LC.WIDTH - LC.PANEL_WIDTH - LC.PADDING
        x1 = LC.WIDTH - LC.PADDING
        y = graph_top

        def draw_section_header(text: str, current_y: int) -> int:
            draw.text((x0, current_y), text, font=header_font, fill=LC.COLOR_ACCENT)
            draw.line([(x0, current_y + 40), (x1, current_y + 40)], fill=LC.COLOR_ACCENT, width=2)
            return current_y + LC.HEADER_HEIGHT

        def draw_row(label: str, value: str, current_y: int) -> int:
            draw.text((x0, current_y), label, font=text_font, fill=LC.COLOR_SUB_TEXT)
            draw.text((x1, current_y), value, font=text_font, fill=LC.COLOR_TEXT, anchor="ra")
            return current_y + LC.ROW_HEIGHT

        y = draw_section_header(self._label("概要", "Summary"), y)
        y = draw_row(self._label("因果边数", "edges"), str(len(result.graph.edges)), y)
        y = draw_row(self._label("路径得分", "path score"), f"{result.path.path_score:.4f}", y)
        y = draw_row("ω1", f"{result.theta.omega1:.3f}", y)
        y += 10

        y = draw_section_header(self._label("攻击路径", "Attack path"), y)
        if not hops:
            y = draw_row(self._label("未检测到攻击路径", "no attack path"), "", y)
        for number, hop in enumerate(hops, 1):
            low, high = hop.interval
            y = draw_row(
                f"{number}. {hop.slice_id}  t={hop.timestamp:.2f}s",
                f"{hop.confidence:.3f} [{low:.2f}, {high:.2f}]",
                y,
            )
        y += 10

        if events:
            y = draw_section_header(self._label("事件时间线", "Events"), y)
            for event in events:
                y = draw_row(str(event.get("name", "")), f"{float(event.get('time', 0.0)):.2f}s", y)

        return image

    @staticmethod
    def save(image: Image.Image, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format="PNG")
        logger.info(f"已保存溯源结果图片: {path}")
        return path
