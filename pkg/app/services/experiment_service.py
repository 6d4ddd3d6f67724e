import logging
from typing import List, Optional

from app.models.experiment import ExperimentConfig, ExperimentKind, ExperimentRun, ReportRow
from app.services import harness_service
from app.services.cache_service import CacheService
from app.storage.abstract import ReportStorageInterface

logger = logging.getLogger(__name__)


class ExperimentService:
    """Runs experiment protocols, persists the runs and serves their reports"""

    def __init__(self, storage: ReportStorageInterface, cache: Optional[CacheService] = None):
        self.storage = storage
        self.cache = cache or CacheService()

    def run(self, kind: ExperimentKind, config: ExperimentConfig) -> ExperimentRun:
        config = harness_service.apply_preset(config)
        config_data = config.model_dump(mode="json")
        cached = self.cache.get_rows(kind.value, config_data)
        if cached is not None:
            rows = [ReportRow.model_validate(r) for r in cached]
        else:
            rows = harness_service.run_experiment(kind, config)
            # timed rows differ between runs, keep them out of the cache
            if not config.timing:
                self.cache.set_rows(kind.value, config_data, [r.model_dump(mode="json") for r in rows])

        stored = self.storage.create({
            "kind": kind.value,
            "config": config_data,
            "rows": [r.model_dump(mode="json") for r in rows],
        })
        run = ExperimentRun.model_validate(stored)
        if run.failed_cells:
            logger.warning(f"Experiment run {run.id}: {run.failed_cells} failed cells")
        return run

    def get_all_runs(self) -> List[ExperimentRun]:
        return [ExperimentRun.model_validate(r) for r in self.storage.get_all()]

    def get_run(self, run_id: int) -> Optional[ExperimentRun]:
        stored = self.storage.get_by_id(run_id)
        return ExperimentRun.model_validate(stored) if stored else None

    def find_runs(self, name: str) -> List[ExperimentRun]:
        return [ExperimentRun.model_validate(r) for r in self.storage.find_by_name(name)]

    def report_csv(self, run_id: int) -> Optional[str]:
        run = self.get_run(run_id)
        return harness_service.report_csv(run.rows) if run else None

    def delete_run(self, run_id: int) -> bool:
        return self.storage.delete(run_id)


def get_experiment_service(storage: ReportStorageInterface) -> ExperimentService:
    """Factory function for experiment service"""
    return ExperimentService(storage)
