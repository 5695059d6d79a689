"""
Configuration management for the few-shot separation toolkit.
Every tunable of the pipeline lives in one RunConfig, loaded from a TOML file
with environment-variable overrides.
"""
import re
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource
from scipy.signal import check_COLA, get_window

from app.core.exceptions import ConfigurationError


SAMPLE_RATE = 22050
CHUNK_SECONDS = 3.0
CHUNK_SAMPLES = int(SAMPLE_RATE * CHUNK_SECONDS)

# Windowed-sinc resampler: zero crossings kept on each side of the kernel
# (per polyphase branch) and the Kaiser shape parameter. 32 crossings gives
# at least 65 taps for every rate pair.
RESAMPLER_ZERO_CROSSINGS = 32
RESAMPLER_KAISER_BETA = 8.6
RESAMPLER_ROLLOFF = 0.95

DEFAULT_VOCABULARY: List[str] = [
    "vocals",
    "drums",
    "bass",
    "guitar",
    "piano",
    "keyboards",
    "synthesizer",
    "strings",
    "brass",
    "woodwinds",
    "reeds",
    "accordion",
    "percussion",
    "plucked_strings",
    "mallets",
    "pipe_organ",
    "bagpipes",
    "whistling",
]


class ConditioningMode(str, Enum):
    """How the separator learns which source to extract."""
    CLASS = "class"
    FEW_SHOT = "few-shot"
    FEW_SHOT_NEG = "few-shot+neg"


class ConditioningSource(str, Enum):
    """Where conditioning examples are drawn from at evaluation time."""
    SAME_TRACK = "same_track"
    CROSS_TRACK = "cross_track"


class ConditioningPurity(str, Enum):
    """Whether conditioning examples may contain a second instrument."""
    SINGLE_SOURCE = "single_source"
    MULTI_SOURCE = "multi_source"


class Archetype(str, Enum):
    """Timbre families of the synthetic instrument generator."""
    HARMONIC_STACK = "harmonic_stack"
    FILTERED_NOISE = "filtered_noise"
    PLUCKED_DECAY = "plucked_decay"


class LogFormat(str, Enum):
    """Supported log output formats."""
    JSON = "json"
    TEXT = "text"


class WavSubtype(str, Enum):
    """RIFF WAV sample encodings the toolkit writes."""
    PCM_16 = "PCM_16"
    FLOAT = "FLOAT"


_SUPPORTED_WINDOWS = {"hann", "hamming", "boxcar"}


class StftConfig(BaseModel):
    """STFT parameters shared by the separator, the encoder and the loss."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    fft_size: int = Field(default=1024, gt=1, description="FFT size in samples")
    hop: int = Field(default=256, gt=0, description="Hop size in samples")
    window: str = Field(default="hann", description="Analysis window name")
    centered: bool = Field(default=True, description="Reflect-pad so frames are centered")

    @model_validator(mode="after")
    def validate_cola(self) -> "StftConfig":
        """Reject window/hop pairs that cannot be inverted by overlap-add."""
        if self.fft_size & (self.fft_size - 1):
            raise ConfigurationError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.hop > self.fft_size:
            raise ConfigurationError(
                f"hop ({self.hop}) must not exceed fft_size ({self.fft_size})"
            )
        if self.window not in _SUPPORTED_WINDOWS:
            raise ConfigurationError(
                f"Unsupported window '{self.window}'. Supported: {sorted(_SUPPORTED_WINDOWS)}"
            )
        window = get_window(self.window, self.fft_size)
        if not check_COLA(window, self.fft_size, self.fft_size - self.hop):
            raise ConfigurationError(
                f"Window '{self.window}' is not COLA at fft_size={self.fft_size}, hop={self.hop}"
            )
        return self

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        """Number of frames the STFT produces for a signal of n_samples."""
        if self.centered:
            return n_samples // self.hop + 1
        return max(0, (n_samples - self.fft_size) // self.hop + 1)

    def analysis_window(self) -> np.ndarray:
        """Periodic analysis window as float64."""
        return _window(self.window, self.fft_size)


@lru_cache(maxsize=16)
def _window(name: str, size: int) -> np.ndarray:
    window = get_window(name, size, fftbins=True).astype(np.float64)
    window.setflags(write=False)
    return window


class UNetConfig(BaseModel):
    """Shape of the conditioned U-Net."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    depth: int = Field(default=6, ge=1)
    base_channels: int = Field(default=16, ge=1)
    kernel: Tuple[int, int] = (5, 5)
    stride: Tuple[int, int] = (2, 2)
    leaky_slope: float = Field(default=0.2, ge=0.0)
    in_freq: int = Field(default=512, gt=0)
    in_frames: int = Field(default=256, gt=0)
    input_channels: int = Field(default=2, description="Real and imaginary parts")
    mask_channels: int = Field(default=2, description="Real and imaginary mask parts")
    batch_norm_momentum: float = Field(
        default=0.99, gt=0.0, lt=1.0,
        description="Running-average decay: running = m * running + (1 - m) * batch"
    )
    mask_epsilon: float = Field(default=1e-12, gt=0.0)

    @model_validator(mode="after")
    def validate_shapes(self) -> "UNetConfig":
        """Every layer must halve the input exactly."""
        for name, size, stride in (
            ("in_freq", self.in_freq, self.stride[0]),
            ("in_frames", self.in_frames, self.stride[1]),
        ):
            if size % (stride ** self.depth):
                raise ConfigurationError(
                    f"{name}={size} is not divisible by {stride}^{self.depth}"
                )
        if self.kernel[0] % 2 == 0 or self.kernel[1] % 2 == 0:
            raise ConfigurationError(f"kernel must be odd in both axes, got {self.kernel}")
        return self

    def channels(self, layer: int) -> int:
        """Output channel count of encoder layer `layer`."""
        return self.base_channels * 2 ** layer

    @property
    def bottleneck_channels(self) -> int:
        return self.channels(self.depth - 1)


class EncoderConfig(BaseModel):
    """Few-shot conditioning encoder."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    blocks: int = Field(default=4, ge=1)
    filters: int = Field(default=64, ge=1)
    kernel: Tuple[int, int] = (3, 3)
    pool: Tuple[int, int] = (2, 2)
    input_bands: int = Field(default=128, ge=1, description="Mel bands")
    embedding_dim: int = Field(default=512, ge=1)
    fmin: float = Field(default=0.0, ge=0.0)
    fmax: float = Field(default=11025.0, gt=0.0)
    min_example_seconds: float = Field(default=0.5, gt=0.0)

    @model_validator(mode="after")
    def validate_embedding(self) -> "EncoderConfig":
        """Flattening the pooled map has to give exactly embedding_dim values."""
        residual_bands = self.input_bands // self.pool[0] ** self.blocks
        if residual_bands * self.filters != self.embedding_dim:
            raise ConfigurationError(
                f"input_bands / pool^blocks x filters = {residual_bands} x {self.filters} "
                f"!= embedding_dim {self.embedding_dim}"
            )
        if self.fmin >= self.fmax:
            raise ConfigurationError(f"fmin ({self.fmin}) must be below fmax ({self.fmax})")
        return self


class LossConfig(BaseModel):
    """Weights and guards of the composite objective."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    sdr_epsilon: float = Field(default=1e-8, gt=0.0)
    w_sdr: float = Field(default=1.0, ge=0.0)
    w_mae: float = Field(default=1.0, ge=0.0)


class SamplerConfig(BaseModel):
    """Training-example sampling."""
    model_config = ConfigDict(extra="forbid")

    n_shots: int = Field(default=5, ge=1, le=5)
    chunk_seconds: float = Field(default=CHUNK_SECONDS, gt=0.0)
    multi_source_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    cross_track: bool = False
    use_negatives: bool = False
    rng_seed: int = 0
    holdout_classes: List[str] = Field(default_factory=list)
    max_retries: int = Field(default=64, ge=1)
    silence_dbfs: float = Field(default=-60.0, le=0.0)
    corpus_weights: Dict[str, float] = Field(
        default_factory=dict, description="Per-corpus sampling weight; missing names weigh 1"
    )

    @field_validator("corpus_weights")
    @classmethod
    def validate_weights(cls, v: Dict[str, float]) -> Dict[str, float]:
        if any(w < 0 for w in v.values()):
            raise ConfigurationError(f"corpus weights must be non-negative, got {v}")
        return v

    def chunk_samples(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(self.chunk_seconds * sample_rate))


class TrainingConfig(BaseModel):
    """Optimizer, schedule and early stopping."""
    model_config = ConfigDict(extra="forbid")

    conditioning_mode: ConditioningMode = ConditioningMode.FEW_SHOT
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=0.001, gt=0.0)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    max_steps: int = Field(default=5000, ge=1)
    validation_every: int = Field(default=200, ge=1)
    validation_batches: int = Field(default=4, ge=1)
    validation_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    patience: int = Field(default=10, ge=1, description="Validations without improvement")
    log_every: int = Field(default=10, ge=1)
    num_threads: Optional[int] = Field(default=None, ge=1)


class EvalProtocol(BaseModel):
    """Multi-iteration evaluation protocol."""
    model_config = ConfigDict(extra="forbid")

    n_shots: int = Field(default=5, ge=1, le=5)
    iterations: int = Field(default=10, ge=1)
    conditioning_source: ConditioningSource = ConditioningSource.SAME_TRACK
    conditioning_purity: ConditioningPurity = ConditioningPurity.SINGLE_SOURCE
    multi_source_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    use_negatives: bool = False
    seed: int = 0
    example_seconds: float = Field(default=CHUNK_SECONDS, gt=0.0)
    overlap: float = Field(default=0.5, ge=0.0, lt=1.0)
    window_seconds: float = Field(default=1.0, gt=0.0)
    sdr_cap_db: float = Field(default=60.0, gt=0.0)
    peak_level: float = Field(default=0.9, gt=0.0, le=1.0)
    classes: Optional[List[str]] = None
    workers: int = Field(default=1, ge=1)
    one_stem_per_class: bool = False


class SynthClassSpec(BaseModel):
    """Timbre recipe for one synthetic instrument class."""
    model_config = ConfigDict(extra="forbid")

    name: str
    archetype: Archetype
    pitch_range_hz: Tuple[float, float]
    note_density: float = Field(default=2.0, gt=0.0, description="Notes per second")
    note_seconds: Tuple[float, float] = (0.15, 0.6)
    harmonics: int = Field(default=8, ge=1)
    band_hz: Tuple[float, float] = Field(
        default=(2000.0, 8000.0), description="Pass band of the filtered-noise archetype"
    )
    centroid_band_hz: Tuple[float, float] = Field(
        ..., description="Documented spectral-centroid range of the generated class"
    )


def _default_synth_classes() -> List[SynthClassSpec]:
    return [
        SynthClassSpec(
            name="vocals", archetype=Archetype.HARMONIC_STACK,
            pitch_range_hz=(200.0, 450.0), note_density=1.5, note_seconds=(0.3, 0.9),
            harmonics=8, centroid_band_hz=(500.0, 1800.0),
        ),
        SynthClassSpec(
            name="drums", archetype=Archetype.FILTERED_NOISE,
            pitch_range_hz=(60.0, 200.0), note_density=4.0, note_seconds=(0.05, 0.2),
            band_hz=(2000.0, 8000.0), centroid_band_hz=(2500.0, 8000.0),
        ),
        SynthClassSpec(
            name="bass", archetype=Archetype.PLUCKED_DECAY,
            pitch_range_hz=(40.0, 110.0), note_density=2.0, note_seconds=(0.2, 0.7),
            harmonics=6, centroid_band_hz=(40.0, 400.0),
        ),
    ]


class SynthSpec(BaseModel):
    """Deterministic synthetic multitrack corpus."""
    model_config = ConfigDict(extra="forbid")

    classes: List[SynthClassSpec] = Field(default_factory=_default_synth_classes)
    n_tracks: int = Field(default=40, ge=1)
    duration_seconds: float = Field(default=30.0, gt=0.0)
    min_stems: int = Field(default=2, ge=1)
    max_stems: int = Field(default=5, ge=1)
    sample_rate: int = Field(default=SAMPLE_RATE, gt=0)
    class_gap_hz: float = Field(default=100.0, ge=0.0)
    mixture_peak: float = Field(default=0.9, gt=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def validate_classes(self) -> "SynthSpec":
        """Class names must be unique and centroid bands disjoint by class_gap_hz."""
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"Duplicate synthetic class names: {names}")
        if self.min_stems > self.max_stems:
            raise ConfigurationError(
                f"min_stems ({self.min_stems}) exceeds max_stems ({self.max_stems})"
            )
        bands = sorted(c.centroid_band_hz for c in self.classes)
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            if lo - hi < self.class_gap_hz:
                raise ConfigurationError(
                    f"Centroid bands closer than class_gap_hz={self.class_gap_hz}: {bands}"
                )
        return self


class PathConfig(BaseModel):
    """Filesystem locations."""
    model_config = ConfigDict(extra="forbid")

    corpus_dir: Optional[Path] = None
    stem_mapping: Optional[Path] = None
    output_dir: Path = Path("runs/default")
    best_checkpoint: str = "best.ckpt"
    last_checkpoint: str = "last.ckpt"
    train_log: str = "train_log.jsonl"
    eval_report: str = "eval_report.jsonl"


class LoggingConfig(BaseModel):
    """Log level and format."""
    model_config = ConfigDict(extra="forbid")

    level: str = "INFO"
    format: LogFormat = LogFormat.JSON
    service: str = "fewshot-separation"


class RunConfig(BaseSettings):
    """Complete, reproducible description of a run."""

    seed: int = 0
    vocabulary: List[str] = Field(default_factory=lambda: list(DEFAULT_VOCABULARY))
    stft: StftConfig = Field(default_factory=StftConfig)
    unet: UNetConfig = Field(default_factory=UNetConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    eval: EvalProtocol = Field(default_factory=EvalProtocol)
    synth: SynthSpec = Field(default_factory=SynthSpec)
    paths: PathConfig = Field(default_factory=PathConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    model_config = SettingsConfigDict(
        env_prefix="FSMSS_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
    )

    @field_validator("vocabulary")
    @classmethod
    def validate_vocabulary(cls, v: List[str]) -> List[str]:
        if not v:
            raise ConfigurationError("vocabulary cannot be empty")
        if len(set(v)) != len(v):
            raise ConfigurationError(f"vocabulary names must be unique: {v}")
        return v

    @model_validator(mode="after")
    def validate_cross_section(self) -> "RunConfig":
        """Checks that span sections."""
        expected_freq = self.stft.fft_size // 2
        if self.unet.in_freq != expected_freq:
            raise ConfigurationError(
                f"unet.in_freq ({self.unet.in_freq}) must equal fft_size/2 ({expected_freq})"
            )
        chunk = self.sampler.chunk_samples()
        if self.stft.frame_count(chunk) < self.unet.in_frames:
            raise ConfigurationError(
                f"{chunk}-sample chunks give {self.stft.frame_count(chunk)} frames, "
                f"fewer than unet.in_frames={self.unet.in_frames}"
            )
        unknown = set(self.sampler.holdout_classes) - set(self.vocabulary)
        if unknown:
            raise ConfigurationError(f"holdout classes not in vocabulary: {sorted(unknown)}")
        return self

    @classmethod
    def from_file(cls, path: Optional[Path]) -> "RunConfig":
        """
        Load a run configuration from a TOML file.

        Args:
            path: TOML file; None gives defaults plus environment overrides

        Returns:
            RunConfig: validated configuration

        Raises:
            ConfigurationError: if the file is missing or invalid
        """
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            file_values = TomlConfigSettingsSource(cls, toml_file=path)()
            return cls(**file_values)
        except ConfigurationError:
            raise
        except Exception as e:
            raise ConfigurationError(f"Invalid config file {path}: {e}") from e


class StemMapping(BaseModel):
    """User-editable table mapping stem file names to vocabulary classes."""
    model_config = ConfigDict(extra="forbid")

    classes: Dict[str, str] = Field(default_factory=dict)
    ignore: List[str] = Field(default_factory=lambda: ["mixture", "accompaniment"])

    @classmethod
    def from_file(cls, path: Path) -> "StemMapping":
        """Load a mapping table from TOML (`[classes]` table, `ignore` list)."""
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Stem mapping file not found: {path}")
        try:
            data = TomlConfigSettingsSource(RunConfig, toml_file=path)()
            return cls(**data)
        except Exception as e:
            raise ConfigurationError(f"Invalid stem mapping {path}: {e}") from e

    def resolve(self, stem_name: str) -> Optional[str]:
        """
        Map a file stem to its class.

        Returns:
            The class name, or None when the stem is listed in `ignore`.

        Raises:
            ConfigurationError: if the stem has no mapping
        """
        key = stem_name.lower()
        if key in (name.lower() for name in self.ignore):
            return None
        lowered = {k.lower(): v for k, v in self.classes.items()}
        if key not in lowered:
            # repeated stems are written as <name>_2, <name>_3, ...
            key = re.sub(r"_\d+$", "", key)
        if key not in lowered:
            raise ConfigurationError(
                f"No class mapping for stem '{stem_name}'. Mapping table: {self.classes}, "
                f"ignored: {self.ignore}"
            )
        return lowered[key]
