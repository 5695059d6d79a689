"""
End-to-end separation network: waveform in, conditioned waveform estimate out.
"""
from typing import Optional

import torch
from torch import Tensor, nn

from app.core.config import ConditioningMode, EncoderConfig, StftConfig, UNetConfig
from app.core.exceptions import ConditioningError, ShapeMismatchError
from app.services.dsp.spectral import (
    apply_mask_tensor,
    compress_tensor,
    decompress_tensor,
    istft_tensor,
    stft_tensor,
)
from app.services.model.encoder import FewShotEncoder, PosNegFusion
from app.services.model.film import FilmGenerator
from app.services.model.unet import ConditionedUNet, bounded_complex_mask


class SeparationNetwork(nn.Module):
    """
    Conditioned U-Net plus whatever produces its conditioning vector.

    Class mode conditions on one-hot vectors of the vocabulary size. Few-shot
    modes carry the example encoder; few-shot+neg also carries the fusion layer.
    """

    def __init__(
        self,
        mode: ConditioningMode,
        vocabulary_size: int,
        unet_config: UNetConfig,
        encoder_config: EncoderConfig,
        stft_config: StftConfig,
        sample_rate: int,
    ):
        super().__init__()
        self.mode = ConditioningMode(mode)
        self.unet_config = unet_config
        self.stft_config = stft_config

        if self.mode == ConditioningMode.CLASS:
            self.condition_dim = vocabulary_size
            self.example_encoder: Optional[FewShotEncoder] = None
        else:
            self.condition_dim = encoder_config.embedding_dim
            self.example_encoder = FewShotEncoder(
                encoder_config, stft_config, sample_rate, unet_config.batch_norm_momentum
            )
        self.fusion = (
            PosNegFusion(encoder_config.embedding_dim)
            if self.mode == ConditioningMode.FEW_SHOT_NEG else None
        )
        self.film_generator = FilmGenerator(self.condition_dim, unet_config.bottleneck_channels)
        self.unet = ConditionedUNet(unet_config)

    def _require_encoder(self) -> FewShotEncoder:
        if self.example_encoder is None:
            raise ConditioningError("A class-conditioned network has no example encoder")
        return self.example_encoder

    def embed(self, examples: Tensor) -> Tensor:
        """
        Mean embedding of a set of examples.

        Args:
            examples: [B, n, samples]

        Returns:
            [B, embedding_dim]
        """
        encoder = self._require_encoder()
        batch, shots, samples = examples.shape
        embeddings = encoder(examples.reshape(batch * shots, samples))
        return embeddings.reshape(batch, shots, -1).mean(dim=1)

    def condition(self, positives: Tensor, negatives: Optional[Tensor] = None) -> Tensor:
        """Conditioning vector z [B, D] from positive (and negative) examples."""
        positive = self.embed(positives)
        if self.fusion is None:
            return positive
        if negatives is None:
            raise ConditioningError("few-shot+neg conditioning needs negative examples")
        return self.fusion(positive, self.embed(negatives))

    def crop(self, spec: Tensor) -> Tensor:
        """Drop the Nyquist bin and trailing frames: [B, F', T'] -> [B, in_freq, in_frames]."""
        cfg = self.unet_config
        if spec.shape[-2] < cfg.in_freq or spec.shape[-1] < cfg.in_frames:
            raise ShapeMismatchError(
                f"Spectrogram {tuple(spec.shape[-2:])} is smaller than the U-Net input "
                f"({cfg.in_freq}, {cfg.in_frames})"
            )
        return spec[..., :cfg.in_freq, :cfg.in_frames]

    def uncrop(self, cropped: Tensor, bins: int, frames: int) -> Tensor:
        """Zero-fill the bins and frames removed by crop."""
        batch = cropped.shape[0]
        missing_bins = bins - cropped.shape[-2]
        if missing_bins:
            cropped = torch.cat(
                [cropped, cropped.new_zeros(batch, missing_bins, cropped.shape[-1])], dim=-2
            )
        missing_frames = frames - cropped.shape[-1]
        if missing_frames:
            cropped = torch.cat(
                [cropped, cropped.new_zeros(batch, bins, missing_frames)], dim=-1
            )
        return cropped

    def mask(self, compressed: Tensor, z: Tensor) -> Tensor:
        """
        Complex mask for cropped compressed spectrograms.

        Args:
            compressed: complex [B, in_freq, in_frames]
            z: [B, D]

        Returns:
            complex [B, in_freq, in_frames]
        """
        features = torch.stack([compressed.real, compressed.imag], dim=1)
        raw = self.unet(features, self.film_generator(z))
        return bounded_complex_mask(raw, self.unet_config.mask_epsilon)

    def forward(self, mixture: Tensor, z: Tensor) -> Tensor:
        """
        Separate the conditioned source from a batch of mixtures.

        Args:
            mixture: [B, samples]
            z: [B, D]

        Returns:
            estimate [B, samples]
        """
        compressed = compress_tensor(stft_tensor(mixture, self.stft_config))
        bins, frames = compressed.shape[-2], compressed.shape[-1]
        cropped = self.crop(compressed)
        masked = apply_mask_tensor(cropped, self.mask(cropped, z))
        estimate_spec = decompress_tensor(self.uncrop(masked, bins, frames))
        return istft_tensor(estimate_spec, self.stft_config, mixture.shape[-1])
