from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class EmbeddingMethod(str, Enum):
    SUPERVISED_LAPLACIAN = "sup-laplacian"
    FISHER = "fisher"


class Embedding(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coordinates: np.ndarray
    method: EmbeddingMethod
    mu: float = 0.0
    eigenvalues: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.coordinates.shape[1])


class SeparablePairs(BaseModel):
    """Per dimension, the class pairs (m, p), m < p, with disjoint coordinate ranges"""

    pairs: List[List[Tuple[int, int]]]

    def at(self, k: int) -> List[Tuple[int, int]]:
        return self.pairs[k]


class EmbeddingSidecar(BaseModel):
    method: EmbeddingMethod
    mu: float
    dim: int
    eigenvalues: List[float]
