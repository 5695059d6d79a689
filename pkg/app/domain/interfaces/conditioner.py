"""
Interfaces for turning a conditioning request into the vector z.
"""
from abc import ABC, abstractmethod
from typing import List

from app.core.config import ConditioningMode
from app.domain.entities.conditioning import ConditioningRequest, ConditioningVector


class Conditioner(ABC):
    """
    Builds conditioning vectors for one checkpoint.

    One implementation per conditioning mode; each checks the request fits
    its mode before any network is run.
    """

    @abstractmethod
    def get_mode(self) -> ConditioningMode:
        """
        Get the conditioning mode this conditioner serves.

        Returns:
            ConditioningMode: the checkpoint's mode
        """
        pass

    @abstractmethod
    def validate(self, request: ConditioningRequest) -> None:
        """
        Check the request carries what this mode needs.

        Args:
            request: class name and/or example clips

        Raises:
            ConditioningError: if the request does not fit the mode
        """
        pass

    @abstractmethod
    def build(self, request: ConditioningRequest) -> ConditioningVector:
        """
        Compute the conditioning vector.

        Args:
            request: validated conditioning request

        Returns:
            ConditioningVector: z for the FiLM generator
        """
        pass


class ConditionerFactory(ABC):
    """
    Factory interface for creating conditioners.
    """

    @abstractmethod
    def create_conditioner(self, checkpoint) -> Conditioner:
        """
        Create the conditioner matching a checkpoint's mode.

        Args:
            checkpoint: loaded ModelCheckpoint

        Returns:
            Conditioner: conditioner bound to the checkpoint

        Raises:
            ConfigurationError: if the mode has no registered conditioner
        """
        pass

    @abstractmethod
    def get_supported_modes(self) -> List[ConditioningMode]:
        """Modes with a registered conditioner."""
        pass
