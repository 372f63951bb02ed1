import sqlite3
import pandas as pd
from datetime import datetime
from typing import List, Dict, Any, Optional
import os

RUN_COLUMNS = [
    'id', 'run_hash', 'command', 'status', 'row_count', 'error_message',
    'created_at', 'completed_at', 'report_path', 'attempts'
]


class Database:
    """Run log: one row per distinct (command, inputs, config) hash."""

    def __init__(self, db_path: str = None):
        if db_path is None:
            db_path = os.getenv('DATABASE_PATH', './data/runs.db')
        self.db_path = db_path
        os.makedirs(os.path.dirname(self.db_path) if os.path.dirname(self.db_path) else '.', exist_ok=True)
        self.init_database()

    def get_connection(self):
        return sqlite3.connect(self.db_path)

    def init_database(self) -> None:
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_hash TEXT UNIQUE NOT NULL,
                command TEXT NOT NULL,
                status TEXT NOT NULL,
                row_count INTEGER DEFAULT 0,
                error_message TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                completed_at TIMESTAMP,
                report_path TEXT,
                attempts INTEGER DEFAULT 1
            )
        """)

        cursor.execute("CREATE INDEX IF NOT EXISTS idx_run_hash ON runs(run_hash)")
        cursor.execute("CREATE INDEX IF NOT EXISTS idx_run_status ON runs(status)")

        conn.commit()
        conn.close()

    def log_run_start(self, run_hash: str, command: str) -> int:
        """Insert a 'processing' row, or reset an existing one and bump attempts."""
        conn = self.get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute("""
                INSERT INTO runs (run_hash, command, status, attempts)
                VALUES (?, ?, 'processing', 1)
            """, (run_hash, command))
            run_id = cursor.lastrowid
        except sqlite3.IntegrityError:
            cursor.execute("""
                UPDATE runs
                SET status = 'processing', error_message = NULL, completed_at = NULL,
                    attempts = attempts + 1
                WHERE run_hash = ?
            """, (run_hash,))
            cursor.execute("SELECT id FROM runs WHERE run_hash = ?", (run_hash,))
            run_id = cursor.fetchone()[0]

        conn.commit()
        conn.close()
        return run_id

    def log_run_complete(self, run_id: int, row_count: int, report_path: str = None) -> None:
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            UPDATE runs
            SET status = 'completed',
                row_count = ?,
                report_path = ?,
                completed_at = ?
            WHERE id = ?
        """, (row_count, report_path, datetime.now().isoformat(sep=' '), run_id))

        conn.commit()
        conn.close()

    def log_run_error(self, run_id: int, error: str) -> None:
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            UPDATE runs
            SET status = 'failed',
                error_message = ?,
                completed_at = ?
            WHERE id = ?
        """, (error, datetime.now().isoformat(sep=' '), run_id))

        conn.commit()
        conn.close()

    def get_run_history(self) -> pd.DataFrame:
        conn = self.get_connection()
        df = pd.read_sql_query(f"""
            SELECT {', '.join(RUN_COLUMNS)}
            FROM runs
            ORDER BY id DESC
        """, conn)
        conn.close()
        return df

    def get_run_by_id(self, run_id: int) -> Optional[Dict[str, Any]]:
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute(f"SELECT {', '.join(RUN_COLUMNS)} FROM runs WHERE id = ?", (run_id,))
        row = cursor.fetchone()
        conn.close()

        return dict(zip(RUN_COLUMNS, row)) if row else None

    def get_failed_runs(self) -> List[Dict[str, Any]]:
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute(f"""
            SELECT {', '.join(RUN_COLUMNS)} FROM runs
            WHERE status = 'failed'
            ORDER BY id DESC
        """)
        rows = cursor.fetchall()
        conn.close()

        return [dict(zip(RUN_COLUMNS, row)) for row in rows]

    def get_summary_stats(self) -> Dict[str, Any]:
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            SELECT
                COUNT(*) as total_runs,
                SUM(CASE WHEN status = 'completed' THEN 1 ELSE 0 END) as completed_runs,
                SUM(CASE WHEN status = 'failed' THEN 1 ELSE 0 END) as failed_runs,
                SUM(CASE WHEN status = 'processing' THEN 1 ELSE 0 END) as processing_runs,
                SUM(row_count) as total_rows
            FROM runs
        """)

        row = cursor.fetchone()
        conn.close()

        return {
            'total_runs': row[0] or 0,
            'completed_runs': row[1] or 0,
            'failed_runs': row[2] or 0,
            'processing_runs': row[3] or 0,
            'total_rows': row[4] or 0
        }
