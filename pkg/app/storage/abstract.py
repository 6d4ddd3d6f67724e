from abc import ABC, abstractmethod
from typing import List, Dict, Optional

class ReportStorageInterface(ABC):
    """Abstract interface for experiment run storage"""

    @abstractmethod
    def get_all(self) -> List[Dict]:
        pass

    @abstractmethod
    def get_by_id(self, run_id: int) -> Optional[Dict]:
        pass

    @abstractmethod
    def create(self, run_data: Dict) -> Dict:
        pass

    @abstractmethod
    def delete(self, run_id: int) -> bool:
        pass

    @abstractmethod
    def find_by_name(self, name: str) -> List[Dict]:
        pass
