from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict


class NeighborTable(BaseModel):
    """K nearest neighbors of every row, sorted by ascending distance.

    ``class_indices[p]`` lists, for every row, its nearest labeled samples of
    class p (the row itself excluded); rows are padded with -1 when class p
    has fewer samples than requested.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indices: np.ndarray
    distances: np.ndarray
    class_indices: Dict[int, np.ndarray] = {}

    @property
    def k(self) -> int:
        return int(self.indices.shape[1])

    def class_neighbors(self, i: int, p: int) -> np.ndarray:
        table = self.class_indices.get(p)
        if table is None:
            return np.empty(0, dtype=int)
        row = table[i]
        return row[row >= 0]


class ClassGraphs(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    within: np.ndarray
    between: np.ndarray
    within_laplacian: np.ndarray
    between_laplacian: np.ndarray
    within_degree: np.ndarray
    kernel_scale: float

    @property
    def size(self) -> int:
        return int(self.within.shape[0])
