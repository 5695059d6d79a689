"""
Corpus-level helpers: building multitracks from solo recordings, thinning
tracks to one stem per class, and class statistics.
"""
from collections import Counter
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import SamplingError
from app.domain.entities.audio import AudioClip
from app.domain.entities.multitrack import MultiTrack, Stem


def class_distribution(corpus: Sequence[MultiTrack]) -> Dict[str, int]:
    """Stem count per class, sorted by class name."""
    counts = Counter(stem.class_name for track in corpus for stem in track.stems)
    return dict(sorted(counts.items()))


def one_stem_per_class(track: MultiTrack, rng: np.random.Generator) -> MultiTrack:
    """Keep one randomly chosen stem of every class; stem order is preserved."""
    by_class: Dict[str, List[int]] = {}
    for index, stem in enumerate(track.stems):
        by_class.setdefault(stem.class_name, []).append(index)
    keep = sorted(
        indices[int(rng.integers(len(indices)))] if len(indices) > 1 else indices[0]
        for indices in by_class.values()
    )
    return MultiTrack(id=track.id, stems=[track.stems[i] for i in keep])


def combine_solo_recordings(solos: Sequence[Tuple[str, AudioClip]], n_tracks: int,
                            max_stems: int = 5, seed: int = 0,
                            mixture_peak: float = 0.9) -> List[MultiTrack]:
    """
    Random multitracks from unrelated solo recordings.

    Each track draws 2..max_stems solos of distinct classes, crops them to
    the shortest and peak-normalizes each to mixture_peak / n_stems.

    Raises:
        SamplingError: fewer than two distinct classes, or mixed sample rates
    """
    by_class: Dict[str, List[AudioClip]] = {}
    for class_name, clip in solos:
        by_class.setdefault(class_name, []).append(clip)
    classes = sorted(by_class)
    if len(classes) < 2:
        raise SamplingError(
            f"Combining solo recordings needs at least two classes, got {classes}"
        )
    rates = {clip.sample_rate for _, clip in solos}
    if len(rates) > 1:
        raise SamplingError(f"Solo recordings have mixed sample rates: {sorted(rates)}")

    tracks = []
    for index in range(n_tracks):
        rng = np.random.default_rng([seed, index])
        n_stems = int(rng.integers(2, min(max_stems, len(classes)) + 1))
        chosen = sorted(rng.choice(len(classes), size=n_stems, replace=False).tolist())
        clips = [
            by_class[classes[c]][int(rng.integers(len(by_class[classes[c]])))] for c in chosen
        ]
        length = min(clip.num_samples for clip in clips)
        stems = []
        for c, clip in zip(chosen, clips):
            samples = clip.samples[:length]
            peak = np.max(np.abs(samples)) if length else 0.0
            if peak > 0:
                samples = samples * (mixture_peak / n_stems / peak)
            stems.append(Stem(
                class_name=classes[c],
                clip=AudioClip(samples=samples, sample_rate=clip.sample_rate),
            ))
        tracks.append(MultiTrack(id=f"combo_{index:04d}", stems=stems))
    return tracks
