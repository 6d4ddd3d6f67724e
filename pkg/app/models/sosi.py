from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.rbf import FitReport, RbfInterpolator


class LabelState(BaseModel):
    """Estimated labels and confidence scores for all Q samples; training entries score +inf"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray
    scores: np.ndarray


class SosiConfig(BaseModel):
    schedule: Optional[List[int]] = None
    iterations: int = Field(default=5, ge=1)
    weight: float = Field(default=1.0, gt=0)
    knn: int = Field(default=7, ge=1)
    projection_neighbors: int = Field(default=5, ge=1)
    early_stop_fraction: float = Field(default=1.0, gt=0, le=1)
    reoptimize_scales: bool = False
    sigma_grid: Optional[List[float]] = None
    grid_size: int = Field(default=20, ge=1)
    fisher_threshold: float = Field(default=0.5, gt=0)

    @field_validator("schedule")
    @classmethod
    def _strictly_increasing(cls, schedule):
        if schedule is not None:
            if not schedule:
                raise ValueError("schedule must not be empty")
            if any(b <= a for a, b in zip(schedule, schedule[1:])):
                raise ValueError("schedule must be strictly increasing")
        return schedule

    @field_validator("sigma_grid")
    @classmethod
    def _ascending_positive(cls, grid):
        if grid is not None:
            if not grid or any(s <= 0 for s in grid):
                raise ValueError("sigma grid must be nonempty and positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError("sigma grid must be ascending")
        return grid


class ProjectionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    neighbors: np.ndarray
    weights: np.ndarray
    target: np.ndarray

    @model_validator(mode="after")
    def _on_simplex(self):
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("projection weights must lie on the simplex")
        return self


class IterationTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    iteration: int
    center_indices: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    scales: np.ndarray
    fit: List[FitReport]
    projections: List[ProjectionResult] = []

    @property
    def center_count(self) -> int:
        return int(self.center_indices.shape[0])


class SosiResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    interpolator: RbfInterpolator
    state: LabelState
    trace: List[IterationTrace]
