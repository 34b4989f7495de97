"""
溯源运行记录数据库操作模块
保存每次溯源 / 学习的摘要，供插件的溯源记录指令与命令行 --history-db 使用
"""

import json
from datetime import datetime
from typing import Any

from astrbot.api import logger

from .database import CommonDatabase


class RunDBOperations:
    """溯源运行记录的业务数据库操作"""

    def __init__(self, db: CommonDatabase | None = None):
        """
        Args:
            db: 数据库实例，缺省使用插件数据目录下的数据库
        """
        self.db = db if db is not None else CommonDatabase()
        self._init_business_tables()

    def _init_business_tables(self):
        """初始化业务表结构"""
        try:
            self.db.execute_script(
                """
                CREATE TABLE IF NOT EXISTS attribution_runs (
                    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    scenario TEXT,
                    seed INTEGER,
                    created_at TEXT NOT NULL,
                    edge_count INTEGER DEFAULT 0,
                    path_text TEXT DEFAULT '',
                    path_score REAL DEFAULT 0,
                    payload TEXT
                );
                CREATE TABLE IF NOT EXISTS training_iterations (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    iteration INTEGER NOT NULL,
                    log_likelihood REAL,
                    step REAL,
                    omega1 REAL,
                    FOREIGN KEY (run_id) REFERENCES attribution_runs (run_id) ON DELETE CASCADE
                );
                CREATE INDEX IF NOT EXISTS idx_runs_scenario ON attribution_runs(scenario);
                CREATE INDEX IF NOT EXISTS idx_training_run ON training_iterations(run_id);
                """
            )
            logger.debug("创建或验证 attribution_runs / training_iterations 表")
        except Exception as e:
            logger.error(f"初始化业务表失败: {e}")
            raise

    def record_run(
        self,
        command: str,
        scenario: str,
        seed: int | None,
        edge_count: int,
        path_text: str,
        path_score: float,
        payload: dict[str, Any] | None = None,
    ) -> int:
        """
        保存一次运行摘要

        Returns:
            新记录的 run_id
        """
        try:
            run_id = self.db.execute_update(
                """
                INSERT INTO attribution_runs
                (command, scenario, seed, created_at, edge_count, path_text, path_score, payload)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    command,
                    scenario,
                    seed,
                    datetime.now().isoformat(timespec="seconds"),
                    int(edge_count),
                    path_text,
                    float(path_score),
                    json.dumps(payload, ensure_ascii=False, sort_keys=True) if payload is not None else None,
                ),
            )
            logger.debug(f"保存运行记录: {command} {scenario} -> run_id={run_id}")
            return run_id
        except Exception as e:
            logger.error(f"保存运行记录失败: {scenario}, 错误: {e}")
            raise

    def record_training(self, run_id: int, history: list[dict[str, float]]) -> int:
        """批量保存学习过程的逐迭代日志"""
        rows = [
            (
                run_id,
                int(entry["iteration"]),
                float(entry["log_likelihood"]),
                float(entry.get("step", 0.0)),
                float(entry["omega1"]) if "omega1" in entry else None,
            )
            for entry in history
        ]
        if not rows:
            return 0
        try:
            return self.db.execute_many(
                """
                INSERT INTO training_iterations (run_id, iteration, log_likelihood, step, omega1)
                VALUES (?, ?, ?, ?, ?)
                """,
                rows,
            )
        except Exception as e:
            logger.error(f"保存训练日志失败: run_id={run_id}, 错误: {e}")
            raise

    def list_runs(self, limit: int = 10, offset: int = 0, command: str | None = None) -> list[dict[str, Any]]:
        """按时间倒序分页列出运行摘要（不含 payload）"""
        query = (
            "SELECT run_id, command, scenario, seed, created_at, edge_count, path_text, path_score "
            "FROM attribution_runs"
        )
        params: list[Any] = []
        if command:
            query += " WHERE command = ?"
            params.append(command)
        query += " ORDER BY run_id DESC LIMIT ? OFFSET ?"
        params.extend([int(limit), int(offset)])
        rows = self.db.execute_query(query, tuple(params))
        return [dict(row) for row in rows]

    def count_runs(self, command: str | None = None) -> int:
        if command:
            row = self.db.execute_query_single(
                "SELECT COUNT(*) AS total FROM attribution_runs WHERE command = ?", (command,)
            )
        else:
            row = self.db.execute_query_single("SELECT COUNT(*) AS total FROM attribution_runs")
        return row["total"] if row else 0

    def get_run(self, run_id: int) -> dict[str, Any] | None:
        """读取单条记录，payload 解析为字典"""
        row = self.db.execute_query_single("SELECT * FROM attribution_runs WHERE run_id = ?", (run_id,))
        if row is None:
            return None
        record = dict(row)
        record["payload"] = json.loads(record["payload"]) if record["payload"] else None
        return record

    def load_training(self, run_id: int) -> list[dict[str, Any]]:
        rows = self.db.execute_query(
            "SELECT iteration, log_likelihood, step, omega1 FROM training_iterations "
            "WHERE run_id = ? ORDER BY iteration",
            (run_id,),
        )
        return [dict(row) for row in rows]
