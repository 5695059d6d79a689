"""
Loading multitrack corpora from disk and writing them back.

A corpus directory holds one sub-directory per track with one WAV file per
stem. File stems map to vocabulary classes through a StemMapping.
"""
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel

from app.core.config import SAMPLE_RATE, StemMapping, SynthSpec, WavSubtype
from app.core.exceptions import CorpusError
from app.core.logging import LoggerMixin, get_logger
from app.domain.entities.multitrack import MultiTrack, Stem
from app.domain.interfaces.corpus_source import CorpusSource
from app.services.data.corpus_tools import class_distribution
from app.services.data.synthetic import generate_synthetic_corpus
from app.services.dsp.resampling import resample
from app.services.dsp.wav_io import read_wav, write_wav

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"


class TrackManifest(BaseModel):
    id: str
    stems: List[str]
    num_samples: int


class CorpusManifest(BaseModel):
    """Index written next to a saved corpus."""
    sample_rate: int
    tracks: List[TrackManifest]
    class_counts: Dict[str, int]
    seed: Optional[int] = None


def identity_mapping(vocabulary: List[str]) -> StemMapping:
    """Stem files named after vocabulary classes."""
    return StemMapping(classes={name: name for name in vocabulary})


def load_multitrack_dir(path: Path, mapping: StemMapping,
                        sample_rate: int = SAMPLE_RATE) -> MultiTrack:
    """
    Load one track directory.

    Every stem is downmixed to mono and resampled to `sample_rate`.

    Raises:
        CorpusError: no mapped stems or stems of different lengths
        ConfigurationError: a stem has no mapping
        AudioIOError: unreadable file
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".wav")
    stems = []
    sources = []
    for wav in files:
        class_name = mapping.resolve(wav.stem)
        if class_name is None:
            continue
        clip = read_wav(wav)
        if clip.sample_rate != sample_rate:
            clip = resample(clip, sample_rate)
        stems.append(Stem(class_name=class_name, clip=clip))
        sources.append(wav.stem)
    if not stems:
        raise CorpusError(f"Track directory {path} has no mapped stems")

    lengths = {s.clip.num_samples for s in stems}
    if len(lengths) > 1:
        raise CorpusError(
            f"Stems of track {path.name} have different lengths: "
            + ", ".join(f"{name}={s.clip.num_samples}" for name, s in zip(sources, stems))
        )
    return MultiTrack(id=path.name, stems=stems)


def load_corpus_dir(root: Path, mapping: StemMapping,
                    sample_rate: int = SAMPLE_RATE) -> List[MultiTrack]:
    """
    Load every track directory under `root`, sorted by name.

    Raises:
        CorpusError: missing directory or no tracks
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"Corpus directory not found: {root}")
    tracks = [
        load_multitrack_dir(d, mapping, sample_rate)
        for d in sorted(root.iterdir()) if d.is_dir()
    ]
    if not tracks:
        raise CorpusError(f"Corpus directory {root} contains no track directories")
    logger.info("Corpus loaded", extra={"root": str(root), "tracks": len(tracks)})
    return tracks


def write_corpus(tracks: List[MultiTrack], root: Path, seed: Optional[int] = None,
                 subtype: WavSubtype = WavSubtype.FLOAT) -> CorpusManifest:
    """
    Write tracks as stem WAV files plus a manifest.

    Stems of a repeated class in one track get a numeric suffix.
    """
    root = Path(root)
    entries = []
    for track in tracks:
        names: List[str] = []
        for stem in track.stems:
            name = stem.class_name
            if name in names:
                name = f"{stem.class_name}_{names.count(stem.class_name) + 1}"
            names.append(name)
            write_wav(root / track.id / f"{name}.wav", stem.clip, subtype)
        entries.append(TrackManifest(id=track.id, stems=names, num_samples=track.num_samples))

    manifest = CorpusManifest(
        sample_rate=tracks[0].sample_rate if tracks else SAMPLE_RATE,
        tracks=entries,
        class_counts=class_distribution(tracks),
        seed=seed,
    )
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"Cannot write corpus manifest under {root}: {e}") from e
    logger.info("Corpus written", extra={"root": str(root), "tracks": len(tracks)})
    return manifest


class DirectoryCorpusSource(CorpusSource, LoggerMixin):
    """Stems on disk."""

    def __init__(self, root: Path, mapping: StemMapping, name: Optional[str] = None):
        self.root = Path(root)
        self.mapping = mapping
        self.name = name or self.root.name

    def get_name(self) -> str:
        return self.name

    def load(self) -> List[MultiTrack]:
        return load_corpus_dir(self.root, self.mapping)


class SyntheticCorpusSource(CorpusSource, LoggerMixin):
    """Tracks rendered in memory from a SynthSpec."""

    def __init__(self, spec: SynthSpec, name: str = "synthetic"):
        self.spec = spec
        self.name = name

    def get_name(self) -> str:
        return self.name

    def load(self) -> List[MultiTrack]:
        return generate_synthetic_corpus(self.spec)
