import sqlite3
import json
from datetime import datetime, timezone
from typing import List, Dict, Optional
from app.storage.abstract import ReportStorageInterface

class SQLiteReportStore(ReportStorageInterface):
    def __init__(self, db_path: str = "reports.db"):
        self.db_path = db_path
        self._init_database()

    def _init_database(self):
        """Create the experiment_runs table"""
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS experiment_runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    kind TEXT NOT NULL,
                    name TEXT NOT NULL,
                    config TEXT NOT NULL,
                    rows TEXT NOT NULL,
                    created_at TEXT NOT NULL
                )
            """)
            conn.commit()

    def _row_to_dict(self, row) -> Dict:
        return {
            "id": row[0],
            "kind": row[1],
            "config": json.loads(row[3]),
            "rows": json.loads(row[4]),
            "created_at": row[5]
        }

    def get_all(self) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT * FROM experiment_runs ORDER BY id")
            return [self._row_to_dict(row) for row in cursor.fetchall()]

    def get_by_id(self, run_id: int) -> Optional[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT * FROM experiment_runs WHERE id = ?", (run_id,))
            row = cursor.fetchone()
            return self._row_to_dict(row) if row else None

    def create(self, run_data: Dict) -> Dict:
        created_at = run_data.get("created_at") or datetime.now(timezone.utc).isoformat()
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("""
                INSERT INTO experiment_runs (kind, name, config, rows, created_at)
                VALUES (?, ?, ?, ?, ?)
            """, (
                run_data["kind"],
                run_data["config"].get("name", ""),
                json.dumps(run_data["config"]),
                json.dumps(run_data["rows"]),
                created_at
            ))
            run_id = cursor.lastrowid
            conn.commit()
        return {**run_data, "id": run_id, "created_at": created_at}

    def delete(self, run_id: int) -> bool:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("DELETE FROM experiment_runs WHERE id = ?", (run_id,))
            rows_affected = cursor.rowcount
            conn.commit()
            return rows_affected > 0

    def find_by_name(self, name: str) -> List[Dict]:
        if not name:
            return []
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT * FROM experiment_runs WHERE name = ? ORDER BY id", (name,))
            return [self._row_to_dict(row) for row in cursor.fetchall()]
