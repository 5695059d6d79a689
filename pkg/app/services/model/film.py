"""
Feature-wise linear modulation of the U-Net bottleneck.
"""
from typing import NamedTuple

import torch
from torch import Tensor, nn

from app.core.exceptions import ConditioningError, ShapeMismatchError


class FilmParams(NamedTuple):
    """Per-channel scale and shift, shape [C] or [B, C]."""
    gamma: Tensor
    beta: Tensor


def film(features: Tensor, params: FilmParams) -> Tensor:
    """
    Scale and shift every channel: out[c, f, t] = gamma[c] * x[c, f, t] + beta[c].

    Args:
        features: [C, F, T] or [B, C, F, T]
        params: gamma and beta of length C (batched as [B, C] for 4-D input)
    """
    channels = features.shape[-3]
    if params.gamma.shape[-1] != channels or params.beta.shape[-1] != channels:
        raise ShapeMismatchError(
            f"FiLM parameters have length {params.gamma.shape[-1]}/{params.beta.shape[-1]}, "
            f"features have {channels} channels"
        )
    gamma = params.gamma[..., :, None, None]
    beta = params.beta[..., :, None, None]
    return gamma * features + beta


class FilmGenerator(nn.Module):
    """
    Two affine heads mapping z to gamma and beta.

    Heads start with zero weights, gamma bias 1 and beta bias 0, so a fresh
    model applies the identity modulation whatever z is.
    """

    def __init__(self, condition_dim: int, channels: int):
        super().__init__()
        self.condition_dim = condition_dim
        self.channels = channels
        self.gamma_head = nn.Linear(condition_dim, channels)
        self.beta_head = nn.Linear(condition_dim, channels)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        nn.init.zeros_(self.gamma_head.weight)
        nn.init.ones_(self.gamma_head.bias)
        nn.init.zeros_(self.beta_head.weight)
        nn.init.zeros_(self.beta_head.bias)

    def forward(self, z: Tensor) -> FilmParams:
        if z.shape[-1] != self.condition_dim:
            raise ConditioningError(
                f"Conditioning vector has dimension {z.shape[-1]}, "
                f"FiLM generator expects {self.condition_dim}"
            )
        return FilmParams(gamma=self.gamma_head(z), beta=self.beta_head(z))


def identity_params(channels: int, dtype: torch.dtype = torch.float32) -> FilmParams:
    """gamma = 1, beta = 0."""
    return FilmParams(gamma=torch.ones(channels, dtype=dtype), beta=torch.zeros(channels, dtype=dtype))
