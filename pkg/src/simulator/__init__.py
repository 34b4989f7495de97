# 场景模拟模块
from .generator import GeneratedScenario, GroundTruth, batch_generate, generate
from .presets import case_study_preset, default_template, load_preset
from .scenario_spec import ChainSpec, ConfounderSpec, ScenarioSpec, TemplateBounds
from .scenario_store import load_corpus, load_scenario, write_corpus, write_scenario

__all__ = [
    "ChainSpec",
    "ConfounderSpec",
    "GeneratedScenario",
    "GroundTruth",
    "ScenarioSpec",
    "TemplateBounds",
    "batch_generate",
    "case_study_preset",
    "default_template",
    "generate",
    "load_corpus",
    "load_preset",
    "load_scenario",
    "write_corpus",
    "write_scenario",
]
