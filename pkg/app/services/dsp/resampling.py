"""
Band-limited sample-rate conversion and channel downmix.

Windowed-sinc polyphase resampling: a Kaiser-windowed sinc low-pass with
RESAMPLER_ZERO_CROSSINGS zero crossings per side of each polyphase branch
(at least 65 taps), cut off at RESAMPLER_ROLLOFF of the lower Nyquist rate.
Pass-band ripple is about 1e-4.
"""
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.signal import firwin, resample_poly

from app.core.config import (
    RESAMPLER_KAISER_BETA,
    RESAMPLER_ROLLOFF,
    RESAMPLER_ZERO_CROSSINGS,
)
from app.core.exceptions import ValidationError
from app.domain.entities.audio import AudioClip


@lru_cache(maxsize=32)
def _sinc_kernel(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = RESAMPLER_ZERO_CROSSINGS * max_rate
    kernel = firwin(
        2 * half_len + 1,
        RESAMPLER_ROLLOFF / max_rate,
        window=("kaiser", RESAMPLER_KAISER_BETA),
    )
    kernel.setflags(write=False)
    return kernel


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """
    Convert a clip to `target_rate`.

    Args:
        clip: non-empty input clip
        target_rate: output sample rate in Hz

    Returns:
        AudioClip: ceil(len * target / source) samples; an identical copy when
        the rates already match

    Raises:
        ValidationError: empty input or non-positive rate
    """
    if target_rate <= 0:
        raise ValidationError(f"target_rate must be positive, got {target_rate}")
    if clip.num_samples == 0:
        raise ValidationError("Cannot resample an empty clip")
    if target_rate == clip.sample_rate:
        return AudioClip(samples=clip.samples, sample_rate=clip.sample_rate)

    common = gcd(clip.sample_rate, target_rate)
    up, down = target_rate // common, clip.sample_rate // common
    # resample_poly copies the kernel before scaling it
    samples = resample_poly(clip.samples, up, down, window=_sinc_kernel(up, down))
    return AudioClip(samples=samples, sample_rate=target_rate)


def downmix(frames: np.ndarray) -> np.ndarray:
    """Average channels of a [samples, channels] array into mono."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        return frames
    if frames.ndim != 2:
        raise ValidationError(f"Expected [samples, channels] audio, got shape {frames.shape}")
    return frames.mean(axis=1)
