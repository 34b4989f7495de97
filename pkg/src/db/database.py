"""
数据库交互模块
提供与业务无关的 sqlite 访问：线程局部连接、查询、更新与批量写入
"""

import sqlite3
import threading
from contextlib import contextmanager
from pathlib import Path

from astrbot.api import logger
from astrbot.api.star import StarTools

PLUGIN_NAME = "astrbot_plugin_slice_attribution"

# 插件根目录，即 src 的父目录
PLUGIN_PATH = Path(__file__).resolve().parent.parent.parent


def plugin_data_dir() -> Path:
    """插件数据目录（由宿主分配）"""
    return Path(StarTools.get_data_dir(PLUGIN_NAME))


class CommonDatabase:
    """通用数据库操作类"""

    def __init__(self, db_path: Path | str | None = None):
        """
        初始化数据库

        Args:
            db_path: 数据库文件路径，缺省为插件数据目录下的 slice_attribution.db
        """
        self.db_path = Path(db_path) if db_path is not None else plugin_data_dir() / "slice_attribution.db"
        self.db_path.parent.mkdir(parents=True, exist_ok=True)

        # 每个线程复用自己的连接
        self._local = threading.local()

    def _get_thread_local_connection(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            try:
                conn = sqlite3.connect(self.db_path)
                conn.row_factory = sqlite3.Row
                conn.execute("PRAGMA foreign_keys = ON")
                conn.execute("PRAGMA journal_mode = WAL")
            except sqlite3.Error as e:
                logger.error(f"数据库连接错误: {self.db_path}, {e}")
                raise
            self._local.conn = conn
        return conn

    def close_thread_local_connection(self):
        """关闭当前线程的数据库连接"""
        conn = getattr(self._local, "conn", None)
        if conn is None:
            return
        try:
            conn.close()
        except sqlite3.Error as e:
            logger.error(f"关闭数据库连接错误: {e}")
        finally:
            self._local.conn = None

    @contextmanager
    def get_connection(self):
        """获取当前线程的连接；出错时回滚，不关闭连接"""
        conn = self._get_thread_local_connection()
        try:
            yield conn
        except sqlite3.Error:
            conn.rollback()
            raise

    def execute_query(self, query: str, params: tuple = ()) -> list[sqlite3.Row]:
        """执行查询并返回全部结果行"""
        try:
            with self.get_connection() as conn:
                return conn.execute(query, params).fetchall()
        except sqlite3.Error as e:
            logger.error(f"查询执行错误: {e}, SQL: {query}, Params: {params}")
            raise

    def execute_query_single(self, query: str, params: tuple = ()) -> sqlite3.Row | None:
        """执行查询，返回第一行，无结果时返回 None"""
        rows = self.execute_query(query, params)
        return rows[0] if rows else None

    def execute_update(self, query: str, params: tuple = ()) -> int:
        """
        执行 INSERT / UPDATE / DELETE 并提交

        Returns:
            最后插入行的 rowid（INSERT）或影响行数
        """
        try:
            with self.get_connection() as conn:
                cursor = conn.execute(query, params)
                conn.commit()
                logger.debug(f"更新执行成功，影响行数: {cursor.rowcount}, SQL: {query.strip()[:60]}")
                return cursor.lastrowid if query.lstrip().upper().startswith("INSERT") else cursor.rowcount
        except sqlite3.Error as e:
            logger.error(f"更新执行错误: {e}, SQL: {query}")
            raise

    def execute_many(self, query: str, params_list: list[tuple]) -> int:
        """批量执行并提交，返回影响行数"""
        try:
            with self.get_connection() as conn:
                cursor = conn.executemany(query, params_list)
                conn.commit()
                logger.debug(f"批量执行成功，影响行数: {cursor.rowcount}")
                return cursor.rowcount
        except sqlite3.Error as e:
            logger.error(f"批量执行错误: {e}, SQL: {query}")
            raise

    def execute_script(self, script: str) -> None:
        """执行建表等多语句脚本"""
        try:
            with self.get_connection() as conn:
                conn.executescript(script)
                conn.commit()
        except sqlite3.Error as e:
            logger.error(f"SQL脚本执行错误: {e}")
            raise
