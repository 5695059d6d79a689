"""
Custom exceptions for the few-shot separation toolkit.
Specific, meaningful exception types so callers can react per failure class.
"""
from typing import Optional, Dict, Any


class FewShotSeparationError(Exception):
    """Base exception for all toolkit errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}


class ConfigurationError(FewShotSeparationError):
    """Raised when configuration is invalid."""
    pass


class ValidationError(FewShotSeparationError):
    """Raised when a value violates a domain invariant."""
    pass


class ShapeMismatchError(ValidationError):
    """Raised when arrays that must align have different shapes."""
    pass


class AudioIOError(FewShotSeparationError):
    """Raised when reading or writing audio fails."""
    pass


class CorpusError(FewShotSeparationError):
    """Raised when a multitrack corpus cannot be built or loaded."""
    pass


class SamplingError(FewShotSeparationError):
    """Raised when no example satisfies the sampling constraints."""
    pass


class ConditioningError(FewShotSeparationError):
    """Raised when conditioning input does not fit the model or vocabulary."""
    pass


class CheckpointError(FewShotSeparationError):
    """Raised when a checkpoint cannot be written, read or validated."""
    pass


class EvaluationError(FewShotSeparationError):
    """Raised when scoring or an evaluation protocol cannot be carried out."""
    pass
