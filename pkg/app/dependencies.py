from functools import lru_cache
import os
from app.storage.abstract import ReportStorageInterface
from app.storage.memory_store import MemoryReportStore
from app.storage.sqlite_store import SQLiteReportStore

@lru_cache()
def get_report_storage() -> ReportStorageInterface:
    """Dependency that provides experiment run storage (singleton)"""
    # SQLite for production, memory for testing
    if os.getenv("TESTING") == "true":
        return MemoryReportStore()
    return SQLiteReportStore(os.getenv("REPORTS_DB_PATH", "reports.db"))
