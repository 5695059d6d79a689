"""Deterministic signal processing."""
from app.services.dsp.chunking import chunk, overlap_add
from app.services.dsp.resampling import downmix, resample
from app.services.dsp.spectral import (
    apply_mask,
    apply_mask_tensor,
    compress,
    compress_tensor,
    decompress,
    decompress_tensor,
    istft,
    istft_tensor,
    stft,
    stft_tensor,
)
from app.services.dsp.wav_io import read_wav, read_wav_channels, write_wav

__all__ = [
    "apply_mask",
    "apply_mask_tensor",
    "chunk",
    "compress",
    "compress_tensor",
    "decompress",
    "decompress_tensor",
    "downmix",
    "istft",
    "istft_tensor",
    "overlap_add",
    "read_wav",
    "read_wav_channels",
    "resample",
    "stft",
    "stft_tensor",
    "write_wav",
]
