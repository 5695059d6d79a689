"""
Conditioning vector operations: one-hot class vectors, example embeddings,
aggregation and positive/negative fusion.
"""
from typing import Sequence

import numpy as np
import torch

from app.core.config import ConditioningMode
from app.core.exceptions import ConditioningError, ShapeMismatchError
from app.domain.entities.audio import AudioClip
from app.domain.entities.conditioning import ConditioningVector, InstrumentVocabulary, VectorMode
from app.services.dsp.resampling import resample
from app.services.model.checkpoint import ModelCheckpoint


def one_hot(class_name: str, vocabulary: InstrumentVocabulary) -> ConditioningVector:
    """
    Class-conditioning vector.

    Raises:
        ConditioningError: unknown class, message lists the vocabulary
    """
    values = np.zeros(len(vocabulary))
    values[vocabulary.index(class_name)] = 1.0
    return ConditioningVector(values=values, mode=VectorMode.CLASS)


def _few_shot_network(checkpoint: ModelCheckpoint):
    if checkpoint.mode == ConditioningMode.CLASS:
        raise ConditioningError(
            "Checkpoint is class-conditioned; it cannot embed conditioning examples"
        )
    return checkpoint.network


def check_example_length(example: AudioClip, checkpoint: ModelCheckpoint) -> None:
    """
    Raises:
        ConditioningError: example shorter than the encoder minimum
    """
    minimum = checkpoint.encoder_config.min_example_seconds
    if example.duration < minimum:
        raise ConditioningError(
            f"Conditioning example is too short: {example.duration:.3f} s, minimum {minimum} s",
            details={"duration": example.duration, "minimum": minimum},
        )


def encode_example(example: AudioClip, checkpoint: ModelCheckpoint) -> ConditioningVector:
    """
    Embed one conditioning example with the checkpoint's encoder.

    Examples at another rate are resampled first.

    Raises:
        ConditioningError: class-conditioned checkpoint or example too short
    """
    network = _few_shot_network(checkpoint)
    check_example_length(example, checkpoint)
    if example.sample_rate != checkpoint.sample_rate:
        example = resample(example, checkpoint.sample_rate)

    encoder = network.example_encoder
    encoder.eval()
    signal = torch.from_numpy(np.array(example.samples, dtype=np.float32)).unsqueeze(0)
    with torch.inference_mode():
        embedding = encoder(signal)[0].double().numpy()
    return ConditioningVector(values=embedding, mode=VectorMode.FEW_SHOT)


def aggregate(vectors: Sequence[ConditioningVector]) -> ConditioningVector:
    """
    Mean of few-shot embeddings.

    Raises:
        ConditioningError: no vectors, or a class vector among them
        ShapeMismatchError: dimensions differ
    """
    if not vectors:
        raise ConditioningError("Cannot aggregate an empty set of conditioning vectors")
    if any(v.mode != VectorMode.FEW_SHOT for v in vectors):
        raise ConditioningError("Only few-shot embeddings can be aggregated")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise ShapeMismatchError(f"Embeddings have different dimensions: {sorted(dims)}")
    stacked = np.stack([v.values for v in vectors])
    # canonical row order: the mean is bit-identical for any input order
    stacked = stacked[np.lexsort(stacked.T[::-1])]
    return ConditioningVector(values=stacked.mean(axis=0), mode=VectorMode.FEW_SHOT)


def fuse_pos_neg(positive: ConditioningVector, negative: ConditioningVector,
                 checkpoint: ModelCheckpoint) -> ConditioningVector:
    """
    Combine aggregated positive and negative embeddings through the
    checkpoint's fusion layer.

    Raises:
        ConditioningError: checkpoint not trained with negatives, or bad inputs
    """
    network = _few_shot_network(checkpoint)
    if network.fusion is None:
        raise ConditioningError(
            f"Checkpoint trained in '{checkpoint.mode.value}' mode has no fusion layer; "
            f"negative examples need a '{ConditioningMode.FEW_SHOT_NEG.value}' checkpoint"
        )
    for vector in (positive, negative):
        if vector.mode != VectorMode.FEW_SHOT:
            raise ConditioningError("Fusion takes few-shot embeddings")

    network.fusion.eval()
    pos = torch.from_numpy(np.array(positive.values, dtype=np.float32)).unsqueeze(0)
    neg = torch.from_numpy(np.array(negative.values, dtype=np.float32)).unsqueeze(0)
    with torch.inference_mode():
        fused = network.fusion(pos, neg)[0].double().numpy()
    return ConditioningVector(values=fused, mode=VectorMode.FEW_SHOT)
