"""
Conditioners for the three conditioning modes.
"""
from app.core.config import ConditioningMode
from app.core.exceptions import ConditioningError
from app.core.logging import LoggerMixin
from app.domain.entities.conditioning import ConditioningRequest, ConditioningVector
from app.domain.interfaces.conditioner import Conditioner
from app.services.conditioning.vectors import (
    aggregate,
    check_example_length,
    encode_example,
    fuse_pos_neg,
    one_hot,
)
from app.services.model.checkpoint import ModelCheckpoint


class ClassConditioner(Conditioner, LoggerMixin):
    """One-hot conditioning on a vocabulary class."""

    def __init__(self, checkpoint: ModelCheckpoint):
        self.checkpoint = checkpoint

    def get_mode(self) -> ConditioningMode:
        return ConditioningMode.CLASS

    def validate(self, request: ConditioningRequest) -> None:
        if request.class_name is None:
            raise ConditioningError(
                "Class-conditioned checkpoint needs a class name. "
                f"Vocabulary: {', '.join(self.checkpoint.vocabulary.names)}"
            )
        if request.positives or request.negatives:
            raise ConditioningError(
                "Class-conditioned checkpoint takes a class name, not conditioning examples"
            )
        self.checkpoint.vocabulary.index(request.class_name)

    def build(self, request: ConditioningRequest) -> ConditioningVector:
        self.validate(request)
        return one_hot(request.class_name, self.checkpoint.vocabulary)


class FewShotConditioner(Conditioner, LoggerMixin):
    """Mean embedding of positive examples."""

    def __init__(self, checkpoint: ModelCheckpoint):
        self.checkpoint = checkpoint

    def get_mode(self) -> ConditioningMode:
        return ConditioningMode.FEW_SHOT

    def _reject_class_name(self, request: ConditioningRequest) -> None:
        if request.class_name is not None:
            raise ConditioningError(
                f"Checkpoint trained in '{self.get_mode().value}' mode is conditioned on audio "
                f"examples, not a class name ('{request.class_name}'); it needs a "
                f"'{ConditioningMode.CLASS.value}' checkpoint"
            )

    def validate(self, request: ConditioningRequest) -> None:
        self._reject_class_name(request)
        if not request.positives:
            raise ConditioningError(
                f"'{self.get_mode().value}' checkpoint needs at least one conditioning example"
            )
        if request.negatives:
            raise ConditioningError(
                f"Checkpoint trained in '{self.get_mode().value}' mode does not use negative "
                f"examples; they need a '{ConditioningMode.FEW_SHOT_NEG.value}' checkpoint"
            )
        for example in request.positives:
            check_example_length(example, self.checkpoint)

    def build(self, request: ConditioningRequest) -> ConditioningVector:
        self.validate(request)
        return aggregate([encode_example(p, self.checkpoint) for p in request.positives])


class PosNegConditioner(FewShotConditioner):
    """Positive and negative mean embeddings fused by the trained layer."""

    def get_mode(self) -> ConditioningMode:
        return ConditioningMode.FEW_SHOT_NEG

    def validate(self, request: ConditioningRequest) -> None:
        self._reject_class_name(request)
        if not request.positives or not request.negatives:
            raise ConditioningError(
                f"'{self.get_mode().value}' checkpoint needs both positive and negative "
                f"examples (got {len(request.positives)} and {len(request.negatives)})"
            )
        for example in [*request.positives, *request.negatives]:
            check_example_length(example, self.checkpoint)

    def build(self, request: ConditioningRequest) -> ConditioningVector:
        self.validate(request)
        positive = aggregate([encode_example(p, self.checkpoint) for p in request.positives])
        negative = aggregate([encode_example(n, self.checkpoint) for n in request.negatives])
        return fuse_pos_neg(positive, negative, self.checkpoint)
