"""
Domain entities for separator conditioning.
Conditioning vectors and the instrument vocabulary they index.
"""
from enum import Enum
from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.exceptions import ConditioningError, ValidationError
from app.domain.entities.audio import AudioClip


class VectorMode(str, Enum):
    """Kind of conditioning vector."""
    CLASS = "class"
    FEW_SHOT = "few-shot"


class ConditioningVector(BaseModel):
    """The vector z fed to the FiLM generator."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    mode: VectorMode

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        array = np.array(v, dtype=np.float64, copy=True)
        if array.ndim != 1 or array.shape[0] == 0:
            raise ValidationError(f"Conditioning vector must be a non-empty 1-D array, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("Conditioning vector contains NaN or Inf")
        array.setflags(write=False)
        return array

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class InstrumentVocabulary(BaseModel):
    """Ordered, unique class names; indices are stable across save and load."""
    model_config = ConfigDict(frozen=True)

    names: List[str] = Field(..., min_length=1)

    @field_validator("names")
    @classmethod
    def validate_names(cls, v: List[str]) -> List[str]:
        if len(set(v)) != len(v):
            raise ValidationError(f"Vocabulary names must be unique: {v}")
        return list(v)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        """
        Position of `name`.

        Raises:
            ConditioningError: unknown class, message lists the vocabulary
        """
        try:
            return self.names.index(name)
        except ValueError:
            raise ConditioningError(
                f"Unknown instrument class '{name}'. Vocabulary: {', '.join(self.names)}",
                details={"vocabulary": list(self.names)},
            )


class ConditioningRequest(BaseModel):
    """
    What the caller supplies to condition a separation: a class name for
    class-conditioned checkpoints, example clips for few-shot ones.
    """
    model_config = ConfigDict(frozen=True)

    class_name: Optional[str] = None
    positives: List[AudioClip] = Field(default_factory=list)
    negatives: List[AudioClip] = Field(default_factory=list)
