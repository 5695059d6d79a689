"""
Conditioned U-Net: strided-convolution encoder, FiLM at the bottleneck,
mirrored transpose-convolution decoder with concatenated skip connections,
and the sigmoid-magnitude complex mask.
"""
from typing import List

import torch
from torch import Tensor, nn

from app.core.config import UNetConfig
from app.core.exceptions import ConfigurationError, ShapeMismatchError
from app.services.model.film import FilmParams, film


def _momentum(cfg: UNetConfig) -> float:
    # torch weighs the new batch statistic by `momentum`
    return 1.0 - cfg.batch_norm_momentum


class EncoderBlock(nn.Sequential):
    """Conv (stride 2) -> batch norm -> Leaky ReLU."""

    def __init__(self, in_channels: int, out_channels: int, cfg: UNetConfig):
        super().__init__(
            nn.Conv2d(
                in_channels, out_channels, kernel_size=cfg.kernel, stride=cfg.stride,
                padding=(cfg.kernel[0] // 2, cfg.kernel[1] // 2),
            ),
            nn.BatchNorm2d(out_channels, momentum=_momentum(cfg)),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.in_channels = in_channels
        self.out_channels = out_channels


class DecoderBlock(nn.Sequential):
    """Transpose conv (stride 2) -> batch norm -> ReLU; the last block is linear."""

    def __init__(self, in_channels: int, out_channels: int, cfg: UNetConfig, final: bool):
        layers: List[nn.Module] = [
            nn.ConvTranspose2d(
                in_channels, out_channels, kernel_size=cfg.kernel, stride=cfg.stride,
                padding=(cfg.kernel[0] // 2, cfg.kernel[1] // 2),
                output_padding=(cfg.stride[0] - 1, cfg.stride[1] - 1),
            )
        ]
        if not final:
            layers += [nn.BatchNorm2d(out_channels, momentum=_momentum(cfg)), nn.ReLU()]
        super().__init__(*layers)
        self.in_channels = in_channels
        self.out_channels = out_channels


class ConditionedUNet(nn.Module):
    """
    U-Net over [B, 2, in_freq, in_frames] compressed spectrogram features.

    Encoder layer i has base_channels * 2^i channels. Decoder layer k
    upsamples and is concatenated with encoder layer depth - 2 - k, so every
    decoder input after the first has twice the mirrored channel count.
    """

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        depth = cfg.depth

        self.encoder = nn.ModuleList()
        in_channels = cfg.input_channels
        for layer in range(depth):
            self.encoder.append(EncoderBlock(in_channels, cfg.channels(layer), cfg))
            in_channels = cfg.channels(layer)

        self.decoder = nn.ModuleList()
        for k in range(depth):
            final = k == depth - 1
            block_in = cfg.bottleneck_channels if k == 0 else 2 * cfg.channels(depth - 1 - k)
            block_out = cfg.mask_channels if final else cfg.channels(depth - 2 - k)
            self.decoder.append(DecoderBlock(block_in, block_out, cfg, final))

        self._verify_skip_channels()

    def _verify_skip_channels(self) -> None:
        """Decoder input = previous decoder output + mirrored encoder output."""
        depth = self.cfg.depth
        for k in range(1, depth):
            upsampled = self.decoder[k - 1].out_channels
            mirrored = self.encoder[depth - 1 - k].out_channels
            if self.decoder[k].in_channels != upsampled + mirrored:
                raise ConfigurationError(
                    f"Decoder layer {k} takes {self.decoder[k].in_channels} channels, "
                    f"expected {upsampled} + {mirrored}"
                )

    def encode(self, features: Tensor) -> List[Tensor]:
        """Outputs of every encoder layer, the last one being the bottleneck."""
        expected = (self.cfg.input_channels, self.cfg.in_freq, self.cfg.in_frames)
        if tuple(features.shape[1:]) != expected:
            raise ShapeMismatchError(
                f"U-Net input has shape {tuple(features.shape[1:])}, expected {expected}"
            )
        outputs = []
        hidden = features
        for block in self.encoder:
            hidden = block(hidden)
            outputs.append(hidden)
        return outputs

    def forward(self, features: Tensor, params: FilmParams) -> Tensor:
        """
        Raw decoder output.

        Args:
            features: [B, input_channels, in_freq, in_frames]
            params: FiLM parameters, [B, bottleneck_channels] each

        Returns:
            [B, mask_channels, in_freq, in_frames]
        """
        skips = self.encode(features)
        hidden = film(skips[-1], params)
        depth = self.cfg.depth
        for k, block in enumerate(self.decoder):
            hidden = block(hidden)
            if k < depth - 1:
                hidden = torch.cat([hidden, skips[depth - 2 - k]], dim=1)
        return hidden


def bounded_complex_mask(raw: Tensor, epsilon: float = 1e-12) -> Tensor:
    """
    Turn raw two-channel output (a, b) into a complex mask.

    r = sqrt(a^2 + b^2 + eps); mask = sigmoid(r) * (a, b) / r. Where a = b = 0
    the mask is sigmoid(0) = 0.5 with phase (1, 0).

    Args:
        raw: [B, 2, F, T]

    Returns:
        complex tensor [B, F, T], every magnitude in (0, 1)
    """
    real, imag = raw[:, 0], raw[:, 1]
    squared = real * real + imag * imag
    radius = torch.sqrt(squared + epsilon)
    nonzero = squared > 0
    # sigmoid saturates to exactly 1 in float32 past r ~ 17
    ceiling = 1.0 - 4 * torch.finfo(raw.dtype).eps
    magnitude = torch.sigmoid(radius).clamp(max=ceiling)
    unit_real = torch.where(nonzero, real / radius, torch.ones_like(real))
    unit_imag = torch.where(nonzero, imag / radius, torch.zeros_like(imag))
    norm = torch.sqrt(unit_real * unit_real + unit_imag * unit_imag).clamp(min=1.0)
    unit_real, unit_imag = unit_real / norm, unit_imag / norm
    return torch.complex(magnitude * unit_real, magnitude * unit_imag)
