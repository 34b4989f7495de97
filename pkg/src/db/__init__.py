"""
数据库模块初始化文件
"""

from .database import PLUGIN_NAME, PLUGIN_PATH, CommonDatabase, plugin_data_dir
from .run_db_operations import RunDBOperations

__all__ = ["CommonDatabase", "PLUGIN_NAME", "PLUGIN_PATH", "RunDBOperations", "plugin_data_dir"]
