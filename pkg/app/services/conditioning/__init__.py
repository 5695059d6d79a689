"""Conditioning vectors: one-hot classes and few-shot example embeddings."""
from app.services.conditioning.conditioners import (
    ClassConditioner,
    FewShotConditioner,
    PosNegConditioner,
)
from app.services.conditioning.factory import ConditionerFactoryImpl, create_conditioner
from app.services.conditioning.vectors import aggregate, encode_example, fuse_pos_neg, one_hot

__all__ = [
    "ClassConditioner",
    "ConditionerFactoryImpl",
    "FewShotConditioner",
    "PosNegConditioner",
    "aggregate",
    "create_conditioner",
    "encode_example",
    "fuse_pos_neg",
    "one_hot",
]
