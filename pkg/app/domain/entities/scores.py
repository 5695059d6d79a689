"""
Domain entities for losses and separation scores.
Plain-float records used for logging and reports.
"""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import ValidationError


class LossBreakdown(BaseModel):
    """Composite training objective split into its terms."""
    model_config = ConfigDict(frozen=True)

    sdr_term: float
    mag_mae_term: float
    total: float
    weights: Tuple[float, float] = (1.0, 1.0)
    silent_targets: int = Field(default=0, ge=0, description="Batch items whose SDR term was skipped")

    @model_validator(mode="after")
    def validate_total(self) -> "LossBreakdown":
        """total = w_sdr * sdr_term + w_mae * mag_mae_term, all finite."""
        values = (self.sdr_term, self.mag_mae_term, self.total)
        if not all(np.isfinite(values)):
            raise ValidationError(f"Non-finite loss breakdown: {values}")
        expected = self.weights[0] * self.sdr_term + self.weights[1] * self.mag_mae_term
        if not np.isclose(self.total, expected, rtol=1e-6, atol=1e-9):
            raise ValidationError(f"total {self.total} != weighted sum {expected}")
        return self


class SdrMeasurement(BaseModel):
    """Framewise SDR of one estimate against one reference."""
    model_config = ConfigDict(frozen=True)

    sdr_db: float = Field(..., description="Median over non-silent windows, capped")
    capped: bool = Field(default=False, description="True when the raw value was +inf or above the cap")
    windows_used: int = Field(..., ge=1)
    windows_total: int = Field(..., ge=1)


class TrackScore(BaseModel):
    """SDR of one (track, target class) pair over all evaluation iterations."""
    model_config = ConfigDict(frozen=True)

    track_id: str
    target_class: str
    sdr_per_iteration: List[float] = Field(..., min_length=1)
    capped_iterations: int = Field(default=0, ge=0)
    mixture_sdr: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.sdr_per_iteration))

    @property
    def std(self) -> float:
        """Population standard deviation over iterations."""
        return float(np.std(self.sdr_per_iteration))

    @property
    def improvement(self) -> float:
        return self.mean - self.mixture_sdr


class IterationRecord(BaseModel):
    """One report line: a single (class, track, iteration) score."""
    record: str = "iteration"
    target_class: str
    track_id: str
    iteration: int
    sdr_db: float
    capped: bool


class TrackRecord(BaseModel):
    """One report line: per-track aggregate."""
    record: str = "track"
    target_class: str
    track_id: str
    mean_sdr_db: float
    std_sdr_db: float
    mixture_sdr_db: float
    improvement_db: float
    iterations: int


class ClassSummary(BaseModel):
    """One report line: per-class aggregate over tracks."""
    record: str = "summary"
    target_class: str
    tracks: int
    mean_sdr_db: float = Field(..., description="Mean of track means")
    median_sdr_db: float = Field(..., description="Median of track means")
    mean_std_db: float = Field(..., description="Per-track std averaged over tracks")
    std_of_means_db: float = Field(..., description="Std over tracks of track means")
    mean_mixture_sdr_db: float
    mean_improvement_db: float


class EvaluationReport(BaseModel):
    """Everything evaluate_corpus produces."""
    scores: List[TrackScore]
    summaries: List[ClassSummary]
    protocol: dict
    checkpoint_mode: str

    def summary_for(self, target_class: str) -> Optional[ClassSummary]:
        for summary in self.summaries:
            if summary.target_class == target_class:
                return summary
        return None
