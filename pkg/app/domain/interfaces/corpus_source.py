"""
Interface for multitrack corpus sources.
"""
from abc import ABC, abstractmethod
from typing import List

from app.domain.entities.multitrack import MultiTrack


class CorpusSource(ABC):
    """
    Something that yields aligned multitrack recordings: a directory of
    stems on disk or the synthetic generator.
    """

    @abstractmethod
    def get_name(self) -> str:
        """Corpus name used for sampling weights and reports."""
        pass

    @abstractmethod
    def load(self) -> List[MultiTrack]:
        """
        Load every track of the corpus.

        Returns:
            List[MultiTrack]: tracks in a deterministic order

        Raises:
            CorpusError: if the corpus is empty or inconsistent
        """
        pass
