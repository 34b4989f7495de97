# 遥测模块
from .telemetry_io import ingest_telemetry, write_telemetry
from .telemetry_window import ModelConfig, TelemetryWindow, analysis_window, extract_window, zscore_normalize

__all__ = [
    "ModelConfig",
    "TelemetryWindow",
    "analysis_window",
    "extract_window",
    "ingest_telemetry",
    "write_telemetry",
    "zscore_normalize",
]
