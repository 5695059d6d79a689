"""
Domain entities for multitrack corpora and sampled training examples.
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import CorpusError
from app.domain.entities.audio import AudioClip


class Stem(BaseModel):
    """One solo-instrument recording of a multitrack."""
    model_config = ConfigDict(frozen=True)

    class_name: str
    clip: AudioClip


class MultiTrack(BaseModel):
    """
    Aligned solo-instrument stems of one song.

    The mixture is the sample-wise sum of the stems.
    """
    model_config = ConfigDict(frozen=True)

    id: str
    stems: List[Stem] = Field(..., min_length=1)

    @model_validator(mode="after")
    def validate_alignment(self) -> "MultiTrack":
        """All stems share length and sample rate."""
        first = self.stems[0].clip
        for stem in self.stems[1:]:
            if stem.clip.num_samples != first.num_samples or stem.clip.sample_rate != first.sample_rate:
                raise CorpusError(
                    f"Track '{self.id}': stem '{stem.class_name}' has "
                    f"{stem.clip.num_samples} samples @ {stem.clip.sample_rate} Hz, expected "
                    f"{first.num_samples} @ {first.sample_rate} Hz"
                )
        return self

    @property
    def num_samples(self) -> int:
        return self.stems[0].clip.num_samples

    @property
    def sample_rate(self) -> int:
        return self.stems[0].clip.sample_rate

    @property
    def classes(self) -> List[str]:
        return [stem.class_name for stem in self.stems]

    def has_class(self, class_name: str) -> bool:
        return class_name in self.classes

    def stem(self, class_name: str) -> Stem:
        """First stem of the given class."""
        for stem in self.stems:
            if stem.class_name == class_name:
                return stem
        raise CorpusError(f"Track '{self.id}' has no '{class_name}' stem (has {self.classes})")

    def mixture(self) -> AudioClip:
        """Sample-wise sum of all stems."""
        total = np.zeros(self.num_samples)
        for stem in self.stems:
            total = total + stem.clip.samples
        return AudioClip(samples=total, sample_rate=self.sample_rate)

    def mixture_segment(self, offset: int, length: int) -> AudioClip:
        """Mixture of the stem chunks at [offset, offset + length)."""
        total = np.zeros(length)
        for stem in self.stems:
            total = total + stem.clip.segment(offset, length).samples
        return AudioClip(samples=total, sample_rate=self.sample_rate)


class WeightedCorpus(BaseModel):
    """A named corpus and its sampling weight."""
    model_config = ConfigDict(frozen=True)

    name: str
    tracks: List[MultiTrack] = Field(..., min_length=1)
    weight: float = Field(default=1.0, ge=0.0)


class ChunkRef(BaseModel):
    """Where a chunk came from."""
    model_config = ConfigDict(frozen=True)

    track_id: str
    class_name: str
    offset: int
    length: int
    extra_class: Optional[str] = Field(
        default=None, description="Non-target instrument mixed in (multi-sourced example)"
    )

    @property
    def end(self) -> int:
        return self.offset + self.length

    def overlaps(self, other: "ChunkRef") -> bool:
        """Same track and intersecting sample intervals."""
        return (
            self.track_id == other.track_id
            and self.offset < other.end
            and other.offset < self.end
        )


class ExampleProvenance(BaseModel):
    """Offsets and stem ids that reproduce a training example."""
    model_config = ConfigDict(frozen=True)

    corpus: str
    target: ChunkRef
    mixture_classes: List[str]
    positives: List[ChunkRef] = Field(default_factory=list)
    negatives: List[ChunkRef] = Field(default_factory=list)


class TrainingExample(BaseModel):
    """One (mixture, target, conditioning) training item."""
    model_config = ConfigDict(frozen=True)

    mixture: AudioClip
    target: AudioClip
    target_class: str
    positive_examples: List[AudioClip] = Field(default_factory=list)
    negative_examples: List[AudioClip] = Field(default_factory=list)
    provenance: ExampleProvenance

    def multi_sourced_positives(self) -> int:
        return sum(ref.extra_class is not None for ref in self.provenance.positives)
