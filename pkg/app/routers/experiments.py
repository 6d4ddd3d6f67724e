from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, Response, status

from app.dependencies import get_report_storage
from app.models.experiment import ExperimentConfig, ExperimentKind, ExperimentRun
from app.services.errors import ManifoldError
from app.services.experiment_service import ExperimentService, get_experiment_service
from app.storage.abstract import ReportStorageInterface

router = APIRouter(prefix="/experiments", tags=["experiments"])


def get_service(storage: ReportStorageInterface = Depends(get_report_storage)) -> ExperimentService:
    return get_experiment_service(storage)


@router.get("/", response_model=List[ExperimentRun])
def get_runs(name: Optional[str] = None, service: ExperimentService = Depends(get_service)):
    if name:
        return service.find_runs(name)
    return service.get_all_runs()


@router.post("/{kind}", response_model=ExperimentRun, status_code=status.HTTP_201_CREATED)
def run_experiment(kind: ExperimentKind, config: ExperimentConfig,
                   service: ExperimentService = Depends(get_service)):
    """Run split-sweep, retrain or scale-sweep with the given configuration"""
    try:
        return service.run(kind, config)
    except ManifoldError as e:
        raise HTTPException(status_code=422, detail=str(e))


@router.get("/{run_id}", response_model=ExperimentRun)
def get_run(run_id: int, service: ExperimentService = Depends(get_service)):
    run = service.get_run(run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Experiment run not found")
    return run


@router.get("/{run_id}/report.csv")
def get_report(run_id: int, service: ExperimentService = Depends(get_service)):
    csv_text = service.report_csv(run_id)
    if csv_text is None:
        raise HTTPException(status_code=404, detail="Experiment run not found")
    return Response(content=csv_text, media_type="text/csv")


@router.delete("/{run_id}", status_code=status.HTTP_204_NO_CONTENT)
def delete_run(run_id: int, service: ExperimentService = Depends(get_service)):
    if not service.delete_run(run_id):
        raise HTTPException(status_code=404, detail="Experiment run not found")
