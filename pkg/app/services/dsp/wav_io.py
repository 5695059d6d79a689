"""
RIFF WAV reading and writing (PCM 16-bit and IEEE float 32-bit).
"""
from pathlib import Path
from typing import Tuple

import numpy as np
import soundfile as sf

from app.core.config import WavSubtype
from app.core.exceptions import AudioIOError
from app.domain.entities.audio import AudioClip
from app.services.dsp.resampling import downmix


def read_wav_channels(path: Path) -> Tuple[AudioClip, int]:
    """
    Read a WAV file and downmix it to mono.

    Returns:
        (mono clip, channel count of the file)

    Raises:
        AudioIOError: unreadable file
    """
    try:
        frames, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError, sf.LibsndfileError) as e:
        raise AudioIOError(f"Cannot read audio file {path}: {e}") from e
    return AudioClip(samples=downmix(frames), sample_rate=int(sample_rate)), int(frames.shape[1])


def read_wav(path: Path) -> AudioClip:
    """Read a WAV file as a mono clip."""
    return read_wav_channels(path)[0]


def write_wav(path: Path, clip: AudioClip, subtype: WavSubtype = WavSubtype.FLOAT,
              channels: int = 1) -> None:
    """
    Write a clip, duplicating mono into `channels` channels.

    Raises:
        AudioIOError: unwritable destination
    """
    path = Path(path)
    data = np.repeat(clip.samples[:, None], channels, axis=1) if channels > 1 else clip.samples
    if subtype == WavSubtype.PCM_16:
        data = np.clip(data, -1.0, 1.0)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), data, clip.sample_rate, subtype=WavSubtype(subtype).value, format="WAV")
    except (RuntimeError, OSError, sf.LibsndfileError) as e:
        raise AudioIOError(f"Cannot write audio file {path}: {e}") from e
