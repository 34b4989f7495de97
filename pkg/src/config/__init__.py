# 运行配置模块
from .config_manager import EffectiveConfig, RunConfigModel, build_config, load_config_file

__all__ = ["EffectiveConfig", "RunConfigModel", "build_config", "load_config_file"]
