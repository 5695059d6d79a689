"""
Domain entities for time-domain and time-frequency audio.
Immutable value objects validated on construction.
"""
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import StftConfig
from app.core.exceptions import ShapeMismatchError, ValidationError


def _frozen_array(value: Any, dtype: Any, ndim: int, what: str) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    if array.ndim != ndim:
        raise ShapeMismatchError(f"{what} must be {ndim}-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{what} contains NaN or Inf")
    array.setflags(write=False)
    return array


class AudioClip(BaseModel):
    """
    Mono waveform with its sample rate.

    The unit of all time-domain I/O: mixtures, targets, conditioning examples
    and separated outputs.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray = Field(..., description="Real amplitudes, nominal range [-1, 1]")
    sample_rate: int = Field(..., gt=0, description="Sample rate in Hz")

    @field_validator("samples", mode="before")
    @classmethod
    def validate_samples(cls, v: Any) -> np.ndarray:
        """Store samples as a read-only finite float64 vector."""
        return _frozen_array(v, np.float64, 1, "samples")

    @classmethod
    def silence(cls, num_samples: int, sample_rate: int) -> "AudioClip":
        """All-zero clip."""
        return cls(samples=np.zeros(num_samples), sample_rate=sample_rate)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        """Duration in seconds."""
        return self.num_samples / self.sample_rate

    def rms(self) -> float:
        if self.num_samples == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def peak(self) -> float:
        if self.num_samples == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))

    def segment(self, offset: int, length: int) -> "AudioClip":
        """
        Cut `length` samples starting at `offset`, zero-padding past the end.

        Args:
            offset: first sample, must be >= 0
            length: output length in samples
        """
        if offset < 0 or length < 0:
            raise ValidationError(f"Invalid segment offset={offset}, length={length}")
        out = np.zeros(length)
        available = self.samples[offset:offset + length]
        out[:available.shape[0]] = available
        return AudioClip(samples=out, sample_rate=self.sample_rate)

    def padded_to(self, length: int) -> "AudioClip":
        """Zero-pad (or truncate) to exactly `length` samples."""
        return self.segment(0, length)

    def scaled(self, gain: float) -> "AudioClip":
        return AudioClip(samples=self.samples * gain, sample_rate=self.sample_rate)

    def __add__(self, other: "AudioClip") -> "AudioClip":
        if other.sample_rate != self.sample_rate or other.num_samples != self.num_samples:
            raise ShapeMismatchError(
                f"Cannot add clips of ({self.num_samples}, {self.sample_rate} Hz) and "
                f"({other.num_samples}, {other.sample_rate} Hz)"
            )
        return AudioClip(samples=self.samples + other.samples, sample_rate=self.sample_rate)

    def __str__(self) -> str:
        return f"AudioClip(samples={self.num_samples}, rate={self.sample_rate})"


class ComplexSpectrogram(BaseModel):
    """Complex time-frequency representation [freq_bins x frames] with its STFT parameters."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    config: StftConfig
    sample_rate: int = Field(..., gt=0)
    num_samples: Optional[int] = Field(
        default=None, ge=0, description="Length of the analysed signal, used by istft"
    )

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        return _frozen_array(v, np.complex128, 2, "spectrogram")

    @model_validator(mode="after")
    def validate_bins(self) -> "ComplexSpectrogram":
        """Bin count must match fft_size / 2 + 1."""
        if self.data.shape[0] != self.config.freq_bins:
            raise ShapeMismatchError(
                f"Spectrogram has {self.data.shape[0]} bins, expected {self.config.freq_bins} "
                f"for fft_size={self.config.fft_size}"
            )
        return self

    @property
    def shape(self) -> tuple:
        return tuple(self.data.shape)

    def with_data(self, data: np.ndarray) -> "ComplexSpectrogram":
        """Same parameters, new values."""
        return ComplexSpectrogram(
            data=data, config=self.config, sample_rate=self.sample_rate,
            num_samples=self.num_samples,
        )


class ComplexMask(BaseModel):
    """
    Complex time-frequency mask stored as two real channels (real, imaginary).

    Network masks have every magnitude in (0, 1); externally built masks may
    reach magnitude 1 exactly (the unit mask).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray = Field(..., description="Shape [2, freq_bins, frames]")

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v: Any) -> np.ndarray:
        array = _frozen_array(v, np.float64, 3, "mask")
        if array.shape[0] != 2:
            raise ShapeMismatchError(f"Mask needs 2 channels (real, imag), got {array.shape[0]}")
        magnitude = np.hypot(array[0], array[1])
        if np.any(magnitude > 1.0 + 1e-9):
            raise ValidationError(f"Mask magnitude exceeds 1 (max {magnitude.max():.6f})")
        return array

    @classmethod
    def from_complex(cls, values: np.ndarray) -> "ComplexMask":
        values = np.asarray(values, dtype=np.complex128)
        return cls(data=np.stack([values.real, values.imag]))

    @property
    def complex(self) -> np.ndarray:
        return self.data[0] + 1j * self.data[1]

    @property
    def shape(self) -> tuple:
        """Shape of the complex matrix [freq_bins, frames]."""
        return tuple(self.data.shape[1:])
