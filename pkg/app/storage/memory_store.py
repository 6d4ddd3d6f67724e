import copy
from datetime import datetime, timezone
from typing import List, Dict, Optional
from app.storage.abstract import ReportStorageInterface

class MemoryReportStore(ReportStorageInterface):
    def __init__(self):
        self.runs: List[Dict] = []
        self.next_id = 1

    def get_all(self) -> List[Dict]:
        return [copy.deepcopy(r) for r in self.runs]

    def get_by_id(self, run_id: int) -> Optional[Dict]:
        run = next((r for r in self.runs if r["id"] == run_id), None)
        return copy.deepcopy(run) if run else None

    def create(self, run_data: Dict) -> Dict:
        run_data = copy.deepcopy(run_data)
        run_data["id"] = self.next_id
        run_data.setdefault("created_at", datetime.now(timezone.utc).isoformat())
        self.runs.append(run_data)
        self.next_id += 1
        return copy.deepcopy(run_data)

    def delete(self, run_id: int) -> bool:
        for i, run in enumerate(self.runs):
            if run["id"] == run_id:
                self.runs.pop(i)
                return True
        return False

    def find_by_name(self, name: str) -> List[Dict]:
        if not name:
            return []
        return [copy.deepcopy(r) for r in self.runs if r["config"].get("name") == name]
