"""
Shared fixtures: a miniature run configuration and dense multitrack corpora
small enough for CPU unit tests.
"""
from typing import Callable, Dict, List, Sequence

import numpy as np
import pytest
import torch

from app.core.config import (
    SAMPLE_RATE,
    ConditioningMode,
    EncoderConfig,
    EvalProtocol,
    PathConfig,
    RunConfig,
    SamplerConfig,
    StftConfig,
    SynthSpec,
    TrainingConfig,
    UNetConfig,
)
from app.domain.entities.audio import AudioClip
from app.domain.entities.multitrack import MultiTrack, Stem
from app.services.model.checkpoint import ModelCheckpoint

TINY_CHUNK = 128
TINY_CLASSES = ["vocals", "drums", "bass"]
CLASS_FREQS: Dict[str, float] = {"vocals": 880.0, "drums": 3300.0, "bass": 110.0}


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def tiny_stft() -> StftConfig:
    return StftConfig(fft_size=32, hop=8)


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    """Depth-2 U-Net on a 16x16 input; 128-sample chunks."""
    chunk_seconds = TINY_CHUNK / SAMPLE_RATE
    return RunConfig(
        seed=0,
        vocabulary=list(TINY_CLASSES),
        stft=StftConfig(fft_size=32, hop=8),
        unet=UNetConfig(depth=2, base_channels=2, in_freq=16, in_frames=16),
        encoder=EncoderConfig(
            blocks=1, filters=4, input_bands=8, embedding_dim=16, min_example_seconds=0.001
        ),
        sampler=SamplerConfig(n_shots=2, chunk_seconds=chunk_seconds),
        training=TrainingConfig(
            batch_size=2, max_steps=4, validation_every=2, validation_batches=1,
            validation_fraction=0.25, log_every=1, patience=10,
        ),
        eval=EvalProtocol(n_shots=2, iterations=2, example_seconds=chunk_seconds),
        synth=SynthSpec(n_tracks=3, duration_seconds=0.25),
        paths=PathConfig(output_dir=tmp_path / "run"),
    )


def tone(freq: float, n: int, amplitude: float = 0.3, phase: float = 0.0,
         sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(n) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t + phase)


@pytest.fixture
def make_track() -> Callable[..., MultiTrack]:
    """Track of steady tones, one per class, with a per-track phase."""

    def _make(track_id: str, classes: Sequence[str], n: int = 1024, phase: float = 0.0) -> MultiTrack:
        stems = [
            Stem(class_name=c, clip=AudioClip(samples=tone(CLASS_FREQS[c], n, phase=phase),
                                               sample_rate=SAMPLE_RATE))
            for c in classes
        ]
        return MultiTrack(id=track_id, stems=stems)

    return _make


@pytest.fixture
def tiny_corpus(make_track) -> List[MultiTrack]:
    layouts = [
        ["vocals", "drums", "bass"],
        ["vocals", "bass"],
        ["drums", "bass"],
        ["vocals", "drums"],
        ["vocals", "drums", "bass"],
        ["vocals", "bass"],
        ["drums", "vocals"],
        ["bass", "drums"],
    ]
    return [make_track(f"track_{i}", layout, phase=0.3 * i) for i, layout in enumerate(layouts)]


@pytest.fixture
def make_checkpoint(tiny_config) -> Callable[[ConditioningMode], ModelCheckpoint]:
    def _make(mode: ConditioningMode) -> ModelCheckpoint:
        return ModelCheckpoint.create(tiny_config, mode)

    return _make


@pytest.fixture
def make_tone() -> Callable[..., np.ndarray]:
    return tone
