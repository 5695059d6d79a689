"""
Inference entry points over a checkpoint.
"""
from typing import List, Sequence

import numpy as np
import torch

from app.core.exceptions import ShapeMismatchError, ValidationError
from app.domain.entities.audio import AudioClip, ComplexMask, ComplexSpectrogram
from app.domain.entities.conditioning import ConditioningVector
from app.services.model.checkpoint import ModelCheckpoint


def _z_tensor(z: ConditioningVector, checkpoint: ModelCheckpoint, batch: int) -> torch.Tensor:
    checkpoint.check_vector(z)
    return torch.from_numpy(np.array(z.values, dtype=np.float32)).unsqueeze(0).expand(batch, -1)


def unet_forward(spec_compressed: ComplexSpectrogram, z: ConditioningVector,
                 checkpoint: ModelCheckpoint) -> ComplexMask:
    """
    Mask predicted for one compressed mixture spectrogram.

    The spectrogram is cropped to the U-Net input (Nyquist bin and trailing
    frames dropped); the mask covers the cropped region only.

    Raises:
        ShapeMismatchError: spectrogram smaller than the U-Net input
        ConditioningError: z does not fit the checkpoint
    """
    network = checkpoint.network
    z_tensor = _z_tensor(z, checkpoint, 1)
    spec = torch.from_numpy(np.array(spec_compressed.data, dtype=np.complex64)).unsqueeze(0)
    network.eval()
    with torch.inference_mode():
        mask = network.mask(network.crop(spec), z_tensor)[0]
    return ComplexMask.from_complex(mask.numpy().astype(np.complex128))


def separate_chunks(chunks: Sequence[AudioClip], z: ConditioningVector,
                    checkpoint: ModelCheckpoint, batch_size: int = 8) -> List[AudioClip]:
    """
    Separate equal-rate chunks in batches, each padded to the checkpoint's
    chunk length and trimmed back afterwards.

    Raises:
        ValidationError: wrong sample rate or chunk longer than the model input
    """
    chunk_len = checkpoint.chunk_samples
    for piece in chunks:
        if piece.sample_rate != checkpoint.sample_rate:
            raise ValidationError(
                f"Chunk sample rate {piece.sample_rate} Hz, model runs at {checkpoint.sample_rate} Hz"
            )
        if piece.num_samples > chunk_len:
            raise ShapeMismatchError(
                f"Chunk has {piece.num_samples} samples, the model takes at most {chunk_len}"
            )

    network = checkpoint.network
    network.eval()
    outputs: List[AudioClip] = []
    for start in range(0, len(chunks), batch_size):
        batch = chunks[start:start + batch_size]
        mixtures = torch.from_numpy(
            np.stack([piece.padded_to(chunk_len).samples for piece in batch]).astype(np.float32)
        )
        with torch.inference_mode():
            estimates = network(mixtures, _z_tensor(z, checkpoint, len(batch))).double().numpy()
        outputs.extend(
            AudioClip(samples=estimate[:piece.num_samples], sample_rate=piece.sample_rate)
            for estimate, piece in zip(estimates, batch)
        )
    return outputs


def separate_chunk(mix: AudioClip, z: ConditioningVector, checkpoint: ModelCheckpoint) -> AudioClip:
    """Estimate of the conditioned source in one chunk; same length as `mix`."""
    return separate_chunks([mix], z, checkpoint, batch_size=1)[0]
