"""
Fixed-length chunking and cross-faded overlap-add reconstruction.
"""
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from scipy.signal.windows import triang

from app.core.exceptions import ValidationError
from app.domain.entities.audio import AudioClip


@lru_cache(maxsize=8)
def _crossfade(length: int) -> np.ndarray:
    # triang has non-zero end points, so a lone chunk still has weight everywhere
    window = triang(length).astype(np.float64)
    window.setflags(write=False)
    return window


def chunk(clip: AudioClip, chunk_len: int, overlap: float) -> List[Tuple[int, AudioClip]]:
    """
    Cut a clip into chunks of `chunk_len` samples.

    Offsets advance by chunk_len * (1 - overlap); the last chunk is zero-padded
    so every input sample is covered.

    Args:
        clip: input clip
        chunk_len: chunk length in samples
        overlap: fraction in [0, 1)

    Returns:
        list of (offset, chunk) pairs
    """
    if chunk_len <= 0:
        raise ValidationError(f"chunk_len must be positive, got {chunk_len}")
    if not 0.0 <= overlap < 1.0:
        raise ValidationError(f"overlap must be in [0, 1), got {overlap}")

    step = max(1, int(round(chunk_len * (1.0 - overlap))))
    offsets = [0]
    while offsets[-1] + chunk_len < clip.num_samples:
        offsets.append(offsets[-1] + step)
    return [(offset, clip.segment(offset, chunk_len)) for offset in offsets]


def overlap_add(chunks: Sequence[Tuple[int, AudioClip]], total_len: int) -> AudioClip:
    """
    Stitch chunks back into one signal of `total_len` samples.

    Each chunk is weighted by a triangular cross-fade and the sum is divided by
    the summed weights, so weights form a partition of unity and unmodified
    chunks reconstruct the original exactly.

    Raises:
        ValidationError: no chunks, mixed sample rates, or uncovered samples
    """
    if not chunks:
        raise ValidationError("overlap_add needs at least one chunk")
    sample_rate = chunks[0][1].sample_rate
    accumulated = np.zeros(total_len)
    weights = np.zeros(total_len)

    for offset, piece in chunks:
        if piece.sample_rate != sample_rate:
            raise ValidationError(
                f"Chunk at offset {offset} has rate {piece.sample_rate}, expected {sample_rate}"
            )
        if offset < 0:
            raise ValidationError(f"Negative chunk offset {offset}")
        if offset >= total_len or piece.num_samples == 0:
            continue
        span = min(piece.num_samples, total_len - offset)
        window = _crossfade(piece.num_samples)[:span]
        accumulated[offset:offset + span] += window * piece.samples[:span]
        weights[offset:offset + span] += window

    uncovered = np.flatnonzero(weights <= 0.0)
    if uncovered.size:
        raise ValidationError(
            f"Chunks leave {uncovered.size} samples uncovered, first at sample {uncovered[0]}",
            details={"first_gap": int(uncovered[0])},
        )
    return AudioClip(samples=accumulated / weights, sample_rate=sample_rate)
