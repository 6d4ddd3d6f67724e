from datetime import datetime
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator

from app.models.baseline import StrategyTag
from app.models.embedding import EmbeddingMethod
from app.models.sosi import SosiConfig


class ExperimentKind(str, Enum):
    SPLIT_SWEEP = "split-sweep"
    RETRAIN = "retrain"
    SCALE_SWEEP = "scale-sweep"


class DatasetKind(str, Enum):
    SYNTHETIC = "synthetic"
    IMAGES = "images"
    CSV = "csv"


class DatasetSpec(BaseModel):
    kind: DatasetKind = DatasetKind.SYNTHETIC
    preset: Optional[str] = None
    # synthetic curves
    classes: int = Field(default=2, ge=2)
    per_class: int = Field(default=30, ge=4)
    noise: float = Field(default=0.05, ge=0)
    gap: float = Field(default=3.0, gt=0)
    seed: int = 0
    # image directories
    root: Optional[str] = None
    resize: Optional[Tuple[int, int]] = None
    # CSV matrices
    features: Optional[str] = None
    labels: Optional[str] = None
    header: bool = False


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    dataset: DatasetSpec = DatasetSpec()
    knn: int = Field(default=7, ge=1)
    graph_sigma: Optional[float] = Field(default=None, gt=0)
    method: EmbeddingMethod = EmbeddingMethod.SUPERVISED_LAPLACIAN
    dim: int = Field(default=2, ge=1)
    mu: float = Field(default=0.01, ge=0)
    strategies: List[StrategyTag] = [StrategyTag.SOSI, StrategyTag.RBF_FIT, StrategyTag.LLE,
                                     StrategyTag.NYSTROM, StrategyTag.NN_AMBIENT, StrategyTag.SSL_GF]
    ratios: List[float] = [0.33]
    seeds: List[int] = [0]
    sosi: SosiConfig = SosiConfig()
    lle_neighbors: int = Field(default=5, ge=1)
    ridge: float = Field(default=0.0, ge=0)
    ssl_class_mass: bool = False
    sigma_sweep: Optional[List[float]] = None
    output: Optional[str] = None
    timing: bool = False

    @field_validator("ratios")
    @classmethod
    def _ratios_in_unit_interval(cls, ratios):
        if not ratios or any(not 0 < r < 1 for r in ratios):
            raise ValueError("labeled ratios must lie in (0, 1)")
        return ratios

    @field_validator("seeds")
    @classmethod
    def _at_least_one_seed(cls, seeds):
        if not seeds:
            raise ValueError("at least one seed is required")
        return seeds


class ReportRow(BaseModel):
    experiment: str
    strategy: str
    x: float
    seed: Optional[int] = None  # None marks a per-(strategy, x) mean row
    error_pct: Optional[float] = Field(default=None, ge=0, le=100)  # None marks a failed cell
    wall_ms: float = 0.0
    regularizer: Optional[float] = None

    @property
    def failed(self) -> bool:
        return self.seed is not None and self.error_pct is None


class ExperimentRun(BaseModel):
    id: Optional[int] = None
    kind: ExperimentKind
    config: ExperimentConfig
    rows: List[ReportRow]
    created_at: Optional[datetime] = None

    @property
    def failed_cells(self) -> int:
        return sum(1 for row in self.rows if row.failed)
