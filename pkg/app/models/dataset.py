from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

# Label value for samples whose class is not known to the learner
UNLABELED = 0


class Dataset(BaseModel):
    """Samples with a labeled prefix.

    ``labels`` has one entry per row; the first ``labeled_count`` entries are
    class ids in 1..class_count and the rest are ``UNLABELED``. ``truth``
    keeps the ground-truth class of every row when it is known, so that
    experiments can score the hidden part.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray
    labels: np.ndarray
    labeled_count: int
    class_count: int
    truth: Optional[np.ndarray] = None
    original_index: Optional[np.ndarray] = None
    class_names: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_invariants(self):
        samples, labels = self.samples, self.labels
        if samples.ndim != 2:
            raise ValueError("samples must be a Q x n matrix")
        q = samples.shape[0]
        if labels.shape != (q,):
            raise ValueError("labels must have one entry per sample")
        if not 1 <= self.labeled_count <= q:
            raise ValueError("labeled_count must lie in 1..Q")
        known = labels[: self.labeled_count]
        if np.any(known < 1) or np.any(known > self.class_count):
            raise ValueError("labeled entries must lie in 1..class_count")
        if np.any(labels[self.labeled_count:] != UNLABELED):
            raise ValueError("only the first labeled_count samples may carry labels")
        missing = set(range(1, self.class_count + 1)) - set(known.tolist())
        if missing:
            raise ValueError(f"classes without a labeled sample: {sorted(missing)}")
        if np.unique(samples, axis=0).shape[0] != q:
            raise ValueError("samples contain identical rows")
        if self.truth is not None and self.truth.shape != (q,):
            raise ValueError("truth must have one entry per sample")
        return self

    @property
    def sample_count(self) -> int:
        return int(self.samples.shape[0])

    @property
    def feature_count(self) -> int:
        return int(self.samples.shape[1])

    @property
    def training_samples(self) -> np.ndarray:
        return self.samples[: self.labeled_count]

    @property
    def training_labels(self) -> np.ndarray:
        return self.labels[: self.labeled_count]

    @property
    def unlabeled_samples(self) -> np.ndarray:
        return self.samples[self.labeled_count:]
