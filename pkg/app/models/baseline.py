from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class StrategyTag(str, Enum):
    SOSI = "sosi"
    RBF_FIT = "rbf-fit"
    LLE = "lle"
    NYSTROM = "nystrom"
    NN_AMBIENT = "nn"
    SSL_GF = "ssl-gf"
    KERNEL_RIDGE = "kridge"

    @classmethod
    def _missing_(cls, value):
        aliases = {"nn-ambient": cls.NN_AMBIENT, "kernel-ridge": cls.KERNEL_RIDGE}
        return aliases.get(str(value).lower())


class ExtensionStrategy(BaseModel):
    tag: StrategyTag
    neighbors: int = Field(default=5, ge=1)
    kernel_scale: Optional[float] = Field(default=None, gt=0)
    ridge: float = Field(default=0.0, ge=0)
    class_mass: bool = False
