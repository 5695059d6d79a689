"""
STFT analysis/synthesis, log-magnitude compression and complex masking.

Tensor functions (`*_tensor`) work on batched torch tensors and are
differentiable; the clip-level functions wrap them for AudioClip and
ComplexSpectrogram values. All functions are pure.
"""
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from app.core.config import StftConfig
from app.core.exceptions import ShapeMismatchError, ValidationError
from app.domain.entities.audio import AudioClip, ComplexMask, ComplexSpectrogram


def window_tensor(cfg: StftConfig, dtype: torch.dtype = torch.float64,
                  device: Optional[torch.device] = None) -> Tensor:
    """Analysis (and synthesis) window as a tensor."""
    return torch.as_tensor(cfg.analysis_window(), dtype=dtype, device=device)


def stft_tensor(signal: Tensor, cfg: StftConfig) -> Tensor:
    """
    Short-time Fourier transform of real signals.

    Args:
        signal: real tensor [..., samples]
        cfg: STFT parameters

    Returns:
        complex tensor [..., fft_size // 2 + 1, frames]
    """
    if signal.shape[-1] < 1:
        raise ValidationError("Cannot analyse an empty signal")
    batch_shape = signal.shape[:-1]
    flat = signal.reshape(-1, signal.shape[-1])
    # reflection needs more samples than the pad width
    pad_mode = "reflect" if flat.shape[-1] > cfg.fft_size // 2 else "constant"
    spec = torch.stft(
        flat,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop,
        win_length=cfg.fft_size,
        window=window_tensor(cfg, flat.dtype, flat.device),
        center=cfg.centered,
        pad_mode=pad_mode,
        normalized=False,
        onesided=True,
        return_complex=True,
    )
    return spec.reshape(*batch_shape, spec.shape[-2], spec.shape[-1])


def istft_tensor(spec: Tensor, cfg: StftConfig, length: int) -> Tensor:
    """
    Inverse STFT with window-normalized overlap-add.

    Args:
        spec: complex tensor [..., freq_bins, frames]
        cfg: STFT parameters used for analysis
        length: output length in samples

    Returns:
        real tensor [..., length]
    """
    if spec.shape[-2] != cfg.freq_bins:
        raise ShapeMismatchError(
            f"Spectrogram has {spec.shape[-2]} bins, expected {cfg.freq_bins}"
        )
    batch_shape = spec.shape[:-2]
    flat = spec.reshape(-1, spec.shape[-2], spec.shape[-1])
    real_dtype = torch.float64 if flat.dtype == torch.complex128 else torch.float32
    try:
        signal = torch.istft(
            flat,
            n_fft=cfg.fft_size,
            hop_length=cfg.hop,
            win_length=cfg.fft_size,
            window=window_tensor(cfg, real_dtype, flat.device),
            center=cfg.centered,
            normalized=False,
            onesided=True,
            length=length,
            return_complex=False,
        )
    except RuntimeError as e:
        raise ValidationError(f"Spectrogram cannot be inverted with {cfg}: {e}") from e
    return signal.reshape(*batch_shape, length)


def compress_tensor(spec: Tensor) -> Tensor:
    """Map every magnitude m to log(1 + m), keeping the phase."""
    magnitude = spec.abs()
    nonzero = magnitude > 0
    safe = torch.where(nonzero, magnitude, torch.ones_like(magnitude))
    scale = torch.where(nonzero, torch.log1p(safe) / safe, torch.ones_like(magnitude))
    return spec * scale


def decompress_tensor(spec: Tensor) -> Tensor:
    """Exact inverse of compress_tensor: magnitude m to exp(m) - 1, phase kept."""
    magnitude = spec.abs()
    nonzero = magnitude > 0
    safe = torch.where(nonzero, magnitude, torch.ones_like(magnitude))
    scale = torch.where(nonzero, torch.expm1(safe) / safe, torch.ones_like(magnitude))
    return spec * scale


def apply_mask_tensor(spec: Tensor, mask: Tensor) -> Tensor:
    """Elementwise complex product of a spectrogram and a complex mask."""
    if spec.shape != mask.shape:
        raise ShapeMismatchError(
            f"Mask shape {tuple(mask.shape)} does not match spectrogram {tuple(spec.shape)}"
        )
    return spec * mask


def stft(clip: AudioClip, cfg: StftConfig) -> ComplexSpectrogram:
    """
    Analyse a clip.

    For centered frames the result has floor(len / hop) + 1 frames.
    """
    if clip.num_samples < 1:
        raise ValidationError("stft needs at least one sample")
    spec = stft_tensor(torch.from_numpy(np.array(clip.samples)), cfg)
    return ComplexSpectrogram(
        data=spec.numpy(), config=cfg, sample_rate=clip.sample_rate, num_samples=clip.num_samples
    )


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Resynthesize a clip; its length is the analysed length when known."""
    length = spec.num_samples
    if length is None:
        length = (spec.data.shape[1] - 1) * spec.config.hop
    signal = istft_tensor(torch.from_numpy(np.array(spec.data)), spec.config, length)
    return AudioClip(samples=signal.numpy(), sample_rate=spec.sample_rate)


def compress(spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Log-compress magnitudes, phase preserved."""
    return spec.with_data(compress_tensor(torch.from_numpy(np.array(spec.data))).numpy())


def decompress(spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Undo compress."""
    return spec.with_data(decompress_tensor(torch.from_numpy(np.array(spec.data))).numpy())


def apply_mask(spec: ComplexSpectrogram, mask: ComplexMask) -> ComplexSpectrogram:
    """Multiply a spectrogram by a complex mask of the same shape."""
    if spec.shape != mask.shape:
        raise ShapeMismatchError(f"Mask shape {mask.shape} does not match spectrogram {spec.shape}")
    return spec.with_data(spec.data * mask.complex)
