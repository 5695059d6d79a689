"""
Few-shot conditioning encoder: log-mel spectrogram, convolution blocks,
global max-pooling over time.
"""
import librosa
import torch
from torch import Tensor, nn

from app.core.config import EncoderConfig, StftConfig
from app.core.exceptions import ConditioningError
from app.services.dsp.spectral import stft_tensor


class ConvBlock(nn.Sequential):
    """Conv 3x3 -> batch norm -> ReLU -> 2x2 max-pool."""

    def __init__(self, in_channels: int, out_channels: int, cfg: EncoderConfig, momentum: float):
        super().__init__(
            nn.Conv2d(
                in_channels, out_channels, kernel_size=cfg.kernel,
                padding=(cfg.kernel[0] // 2, cfg.kernel[1] // 2),
            ),
            nn.BatchNorm2d(out_channels, momentum=momentum),
            nn.ReLU(),
            nn.MaxPool2d(cfg.pool),
        )


class FewShotEncoder(nn.Module):
    """
    Maps example waveforms [N, samples] to embeddings [N, embedding_dim].

    The mel filterbank is rebuilt from the config and never saved.
    """

    def __init__(self, cfg: EncoderConfig, stft_config: StftConfig, sample_rate: int,
                 batch_norm_momentum: float = 0.99):
        super().__init__()
        self.cfg = cfg
        self.stft_config = stft_config
        self.sample_rate = sample_rate

        mel = librosa.filters.mel(
            sr=sample_rate, n_fft=stft_config.fft_size, n_mels=cfg.input_bands,
            fmin=cfg.fmin, fmax=cfg.fmax, norm="slaney", htk=False,
        )
        self.register_buffer("mel_basis", torch.from_numpy(mel).float(), persistent=False)

        blocks = []
        in_channels = 1
        for _ in range(cfg.blocks):
            blocks.append(ConvBlock(in_channels, cfg.filters, cfg, 1.0 - batch_norm_momentum))
            in_channels = cfg.filters
        self.blocks = nn.Sequential(*blocks)

    @property
    def min_frames(self) -> int:
        return self.cfg.pool[1] ** self.cfg.blocks

    def log_mel(self, examples: Tensor) -> Tensor:
        """[N, samples] -> [N, input_bands, frames]"""
        magnitude = stft_tensor(examples, self.stft_config).abs()
        mel = torch.matmul(self.mel_basis.to(magnitude.dtype), magnitude)
        return torch.log1p(mel)

    def forward(self, examples: Tensor) -> Tensor:
        features = self.log_mel(examples)
        if features.shape[-1] < self.min_frames:
            raise ConditioningError(
                f"Conditioning example gives {features.shape[-1]} frames, "
                f"the encoder needs at least {self.min_frames}"
            )
        pooled = self.blocks(features.unsqueeze(1))
        # global max over time, then flatten [filters, residual bands]
        return pooled.amax(dim=-1).flatten(start_dim=1)


class PosNegFusion(nn.Module):
    """relu(W [p ; n] + b): fuses positive and negative embeddings."""

    def __init__(self, embedding_dim: int):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.linear = nn.Linear(2 * embedding_dim, embedding_dim)

    def forward(self, positive: Tensor, negative: Tensor) -> Tensor:
        if positive.shape[-1] != self.embedding_dim or negative.shape[-1] != self.embedding_dim:
            raise ConditioningError(
                f"Fusion expects {self.embedding_dim}-dimensional embeddings, got "
                f"{positive.shape[-1]} and {negative.shape[-1]}"
            )
        return torch.relu(self.linear(torch.cat([positive, negative], dim=-1)))
