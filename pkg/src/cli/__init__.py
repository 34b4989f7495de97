# 命令行模块
from .commands import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main, parse_arguments

__all__ = ["EXIT_IO", "EXIT_NUMERICAL", "EXIT_OK", "EXIT_VALIDATION", "main", "parse_arguments"]
