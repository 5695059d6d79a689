"""
Factory for creating conditioners.
"""
from typing import Dict, List, Type

from app.core.config import ConditioningMode
from app.core.exceptions import ConfigurationError
from app.core.logging import LoggerMixin
from app.domain.interfaces.conditioner import Conditioner, ConditionerFactory
from app.services.conditioning.conditioners import (
    ClassConditioner,
    FewShotConditioner,
    PosNegConditioner,
)
from app.services.model.checkpoint import ModelCheckpoint


class ConditionerFactoryImpl(ConditionerFactory, LoggerMixin):
    """Picks the conditioner for a checkpoint's mode."""

    def __init__(self):
        self._conditioners: Dict[ConditioningMode, Type[Conditioner]] = {
            ConditioningMode.CLASS: ClassConditioner,
            ConditioningMode.FEW_SHOT: FewShotConditioner,
            ConditioningMode.FEW_SHOT_NEG: PosNegConditioner,
        }

    def create_conditioner(self, checkpoint: ModelCheckpoint) -> Conditioner:
        mode = checkpoint.mode
        if mode not in self._conditioners:
            raise ConfigurationError(
                f"No conditioner for mode '{mode.value}'. "
                f"Supported: {[m.value for m in self._conditioners]}"
            )
        conditioner = self._conditioners[mode](checkpoint)
        self.logger.debug(f"Created {type(conditioner).__name__} for mode {mode.value}")
        return conditioner

    def get_supported_modes(self) -> List[ConditioningMode]:
        return list(self._conditioners)

    def register_conditioner(self, mode: ConditioningMode, conditioner_class: Type[Conditioner]) -> None:
        """
        Register a conditioner for a mode.

        Args:
            mode: conditioning mode
            conditioner_class: class taking the checkpoint as its only argument
        """
        self._conditioners[mode] = conditioner_class
        self.logger.info(f"Registered conditioner for mode: {mode.value}")


def create_conditioner(checkpoint: ModelCheckpoint) -> Conditioner:
    """Conditioner for a checkpoint, using the default registry."""
    return ConditionerFactoryImpl().create_conditioner(checkpoint)
