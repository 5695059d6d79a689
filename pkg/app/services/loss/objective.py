"""
Composite training objective: negative squared-correlation SDR on waveforms
plus mean absolute error on compressed spectrogram magnitudes.
"""
from typing import NamedTuple, Tuple

import numpy as np
import torch
from torch import Tensor

from app.core.config import LossConfig, StftConfig
from app.core.exceptions import ShapeMismatchError
from app.core.logging import get_logger
from app.domain.entities.audio import AudioClip, ComplexSpectrogram
from app.domain.entities.scores import LossBreakdown
from app.services.dsp.spectral import compress_tensor, stft_tensor

logger = get_logger(__name__)


class LossTerms(NamedTuple):
    """Batch-mean loss terms as tensors."""
    sdr: Tensor
    mag_mae: Tensor
    total: Tensor
    silent_targets: int

    def breakdown(self, cfg: LossConfig) -> LossBreakdown:
        sdr, mae = float(self.sdr.detach()), float(self.mag_mae.detach())
        return LossBreakdown(
            sdr_term=sdr,
            mag_mae_term=mae,
            total=cfg.w_sdr * sdr + cfg.w_mae * mae,
            weights=(cfg.w_sdr, cfg.w_mae),
            silent_targets=self.silent_targets,
        )


def _check_shapes(estimate: Tensor, reference: Tensor) -> None:
    if estimate.shape != reference.shape:
        raise ShapeMismatchError(
            f"Estimate shape {tuple(estimate.shape)} does not match reference {tuple(reference.shape)}"
        )


def sdr_loss_tensor(estimate: Tensor, reference: Tensor, epsilon: float = 1e-8) -> Tuple[Tensor, Tensor]:
    """
    -<s, s^>^2 / (|s|^2 |s^|^2 - <s, s^>^2 + eps) per item.

    Args:
        estimate: [..., samples]
        reference: [..., samples]

    Returns:
        (loss per item, silent-reference flags); silent references contribute 0
    """
    _check_shapes(estimate, reference)
    dot = (reference * estimate).sum(dim=-1)
    ref_energy = (reference * reference).sum(dim=-1)
    est_energy = (estimate * estimate).sum(dim=-1)
    # Cauchy-Schwarz keeps this >= 0 up to rounding
    residual = torch.clamp(ref_energy * est_energy - dot * dot, min=0.0)
    loss = -(dot * dot) / (residual + epsilon)
    silent = ref_energy <= torch.finfo(ref_energy.dtype).tiny
    return torch.where(silent, torch.zeros_like(loss), loss), silent


def mag_mae_tensor(estimate_spec: Tensor, reference_spec: Tensor) -> Tensor:
    """Mean | |S^| - |S| | over all bins and frames of already-compressed spectrograms."""
    _check_shapes(estimate_spec, reference_spec)
    return (estimate_spec.abs() - reference_spec.abs()).abs().mean()


def composite_loss(estimate: Tensor, reference: Tensor, stft_config: StftConfig,
                   cfg: LossConfig) -> LossTerms:
    """
    Batch objective for training.

    Args:
        estimate: [B, samples]
        reference: [B, samples]
    """
    sdr_items, silent = sdr_loss_tensor(estimate, reference, cfg.sdr_epsilon)
    silent_count = int(silent.sum())
    if silent_count:
        logger.warning("Silent targets skipped by the SDR term", extra={"silent_targets": silent_count})
    sdr = sdr_items.mean()
    mae = mag_mae_tensor(
        compress_tensor(stft_tensor(estimate, stft_config)),
        compress_tensor(stft_tensor(reference, stft_config)),
    )
    return LossTerms(
        sdr=sdr, mag_mae=mae, total=cfg.w_sdr * sdr + cfg.w_mae * mae, silent_targets=silent_count
    )


def sdr_loss(estimate: AudioClip, reference: AudioClip, epsilon: float = 1e-8) -> float:
    """
    SDR term for one clip pair, in [-1/eps, 0].

    An all-zero reference gives 0 and a warning.
    """
    est = torch.from_numpy(np.array(estimate.samples))
    ref = torch.from_numpy(np.array(reference.samples))
    value, silent = sdr_loss_tensor(est, ref, epsilon)
    if bool(silent):
        logger.warning("All-zero reference, SDR term skipped")
    return float(value)


def mag_mae(estimate_spec: ComplexSpectrogram, reference_spec: ComplexSpectrogram) -> float:
    """Magnitude MAE between two compressed spectrograms."""
    if estimate_spec.shape != reference_spec.shape:
        raise ShapeMismatchError(
            f"Spectrogram shapes differ: {estimate_spec.shape} vs {reference_spec.shape}"
        )
    return float(np.mean(np.abs(np.abs(estimate_spec.data) - np.abs(reference_spec.data))))


def total_loss(estimate: AudioClip, reference: AudioClip, cfg: LossConfig,
               stft_config: StftConfig = StftConfig()) -> LossBreakdown:
    """Composite objective for one clip pair, split into its terms."""
    if estimate.num_samples != reference.num_samples:
        raise ShapeMismatchError(
            f"Estimate has {estimate.num_samples} samples, reference {reference.num_samples}"
        )
    est = torch.from_numpy(np.array(estimate.samples)).unsqueeze(0)
    ref = torch.from_numpy(np.array(reference.samples)).unsqueeze(0)
    return composite_loss(est, ref, stft_config, cfg).breakdown(cfg)
