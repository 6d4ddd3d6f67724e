from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class RbfInterpolator(BaseModel):
    """Gaussian RBF map with centers shared across dimensions and one scale per dimension"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    centers: np.ndarray
    scales: np.ndarray
    coeffs: np.ndarray

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.centers.ndim != 2 or self.coeffs.ndim != 2:
            raise ValueError("centers and coeffs must be matrices")
        if self.coeffs.shape[0] != self.centers.shape[0]:
            raise ValueError("one coefficient row per center is required")
        if self.scales.shape != (self.coeffs.shape[1],):
            raise ValueError("one scale per output dimension is required")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        return self

    @property
    def center_count(self) -> int:
        return int(self.centers.shape[0])

    @property
    def dim(self) -> int:
        return int(self.coeffs.shape[1])


class FitReport(BaseModel):
    condition_estimate: float
    jitter: float = 0.0
    residual: float = 0.0


class RegularizerReport(BaseModel):
    gradient_terms: List[float]
    directional_terms: List[float]
    skipped_points: List[int]
    weight: float

    @property
    def total(self) -> float:
        return float(sum(g - self.weight * d for g, d in zip(self.gradient_terms, self.directional_terms)))


class ScaleCandidate(BaseModel):
    sigma: float
    gradient_term: float
    directional_term: float
    admissible: bool = True


class ScaleSelection(BaseModel):
    scales: List[float]
    raw_scales: List[float]
    candidates: List[List[ScaleCandidate]]
