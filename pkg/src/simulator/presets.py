"""
预置场景
JSON 资源位于 src/assets/presets/
"""

from __future__ import annotations

from pathlib import Path

from ..common.errors import InputValidationError
from .scenario_spec import ScenarioSpec

PRESETS_DIR = Path(__file__).parent.parent / "assets" / "presets"
CASE_STUDY = "case_study"
DEFAULT_TEMPLATE = "default_template"


def available_presets() -> list[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.json") if p.stem in (CASE_STUDY, DEFAULT_TEMPLATE))


def load_preset(name: str, seed: int | None = None) -> ScenarioSpec:
    """
    读取预置场景

    Args:
        name: 预置名，接受 case-study / case_study 两种写法
        seed: 覆盖预置中的种子
    """
    normalized = name.replace("-", "_")
    path = PRESETS_DIR / f"{normalized}.json"
    if normalized not in (CASE_STUDY, DEFAULT_TEMPLATE) or not path.is_file():
        raise InputValidationError(f"未知的预置场景: {name}，可用: {available_presets()}")
    spec = ScenarioSpec.from_file(path)
    if seed is not None:
        spec = ScenarioSpec.from_data({**spec.model_dump(), "seed": seed}, str(path))
    return spec


def case_study_preset(seed: int | None = None) -> ScenarioSpec:
    """
    15 切片背景下的五跳攻击链：mMTC 源 → hybrid → eMBB → URLLC → URLLC 受害切片

    t=0 注入，CPU 利用率自 2.1 s 起由 0.15 爬升至 5.2 s 的 0.87，受害切片时延同期由 12 ms
    升至 48 ms，6.7 s 关停；tick 100 ms，窗口 30 s。分析时需 q ≥ 22（analysis_hints 给出 24）。
    """
    return load_preset(CASE_STUDY, seed)


def default_template() -> ScenarioSpec:
    """批量生成用的缺省模板"""
    return load_preset(DEFAULT_TEMPLATE)
