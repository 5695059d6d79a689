"""
Training-example sampling.

An example is a mixture chunk, the matching chunk of one target class and
conditioning chunks of that class (positives) and of other instruments in
the same mixture (negatives). ConditioningDrawer draws the conditioning
chunks and is shared with evaluation.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import SAMPLE_RATE, ConditioningMode, SamplerConfig
from app.core.exceptions import SamplingError
from app.core.logging import LoggerMixin
from app.domain.entities.audio import AudioClip
from app.domain.entities.multitrack import (
    ChunkRef,
    ExampleProvenance,
    MultiTrack,
    TrainingExample,
    WeightedCorpus,
)


class RetriesExhausted(Exception):
    """A draw found no valid chunk within its retry budget."""


def class_segment(track: MultiTrack, class_name: str, offset: int, length: int) -> AudioClip:
    """Sum of every stem of `class_name` over [offset, offset + length)."""
    total = np.zeros(length)
    for stem in track.stems:
        if stem.class_name == class_name:
            total = total + stem.clip.segment(offset, length).samples
    return AudioClip(samples=total, sample_rate=track.sample_rate)


class ConditioningDrawer:
    """Draws non-silent conditioning chunks of a fixed length."""

    def __init__(self, chunk_len: int, silence_dbfs: float = -60.0, max_retries: int = 64):
        self.chunk_len = chunk_len
        self.silence_dbfs = silence_dbfs
        self.max_retries = max_retries

    def is_silent(self, clip: AudioClip) -> bool:
        rms = clip.rms()
        return rms == 0.0 or 20.0 * np.log10(rms) < self.silence_dbfs

    def _offset(self, track: MultiTrack, class_name: str, rng: np.random.Generator,
                avoid: Optional[ChunkRef]) -> int:
        """Offset of a non-silent chunk of `class_name` that does not overlap `avoid`."""
        span = max(1, track.num_samples - self.chunk_len + 1)
        for _ in range(self.max_retries):
            offset = int(rng.integers(span))
            candidate = ChunkRef(
                track_id=track.id, class_name=class_name, offset=offset, length=self.chunk_len
            )
            if avoid is not None and candidate.overlaps(avoid):
                continue
            if self.is_silent(class_segment(track, class_name, offset, self.chunk_len)):
                continue
            return offset
        raise RetriesExhausted(f"no valid '{class_name}' chunk in track '{track.id}'")

    def _sources(self, track: MultiTrack, class_name: str, n: int, rng: np.random.Generator,
                 cross_pool: Optional[Sequence[MultiTrack]]) -> List[MultiTrack]:
        if cross_pool is None:
            return [track] * n
        others = [t for t in cross_pool if t.id != track.id and t.has_class(class_name)]
        if not others:
            raise SamplingError(
                f"Cross-track conditioning needs another track containing '{class_name}'"
            )
        picks = rng.choice(len(others), size=n, replace=len(others) < n)
        return [others[int(i)] for i in picks]

    def positives(
        self,
        track: MultiTrack,
        class_name: str,
        n: int,
        rng: np.random.Generator,
        avoid: Optional[ChunkRef] = None,
        cross_pool: Optional[Sequence[MultiTrack]] = None,
        multi_source_prob: float = 0.0,
    ) -> Tuple[List[AudioClip], List[ChunkRef]]:
        """
        n examples of `class_name`.

        Args:
            track: track the target comes from
            avoid: target chunk; same-track positives never overlap it
            cross_pool: draw from other tracks of this pool instead of `track`
            multi_source_prob: chance that a positive also contains one other
                instrument of its track

        Raises:
            RetriesExhausted: no valid chunk found
            SamplingError: cross-track draw without another track of the class
        """
        refs: List[ChunkRef] = []
        for source in self._sources(track, class_name, n, rng, cross_pool):
            offset = self._offset(source, class_name, rng, avoid)
            extra = None
            if multi_source_prob > 0.0:
                others = sorted({c for c in source.classes if c != class_name})
                if others and rng.random() < multi_source_prob:
                    extra = others[int(rng.integers(len(others)))]
            refs.append(ChunkRef(
                track_id=source.id, class_name=class_name, offset=offset,
                length=self.chunk_len, extra_class=extra,
            ))

        refs = self._diversify(refs, class_name, track, cross_pool, rng)
        by_id = {t.id: t for t in (cross_pool or [])}
        by_id[track.id] = track
        clips = [self._render(by_id[ref.track_id], ref) for ref in refs]
        return clips, refs

    def _diversify(self, refs: List[ChunkRef], class_name: str, track: MultiTrack,
                   cross_pool: Optional[Sequence[MultiTrack]],
                   rng: np.random.Generator) -> List[ChunkRef]:
        """
        With two or more positives all multi-sourced with the same extra
        instrument, the last one gets a different extra instrument, taken
        from its own track or, cross-track, from another pool track that
        has one. Which positives are multi-sourced never changes; a layout
        with no alternative anywhere keeps the shared extra.
        """
        extras = {ref.extra_class for ref in refs}
        if len(refs) < 2 or None in extras or len(extras) != 1:
            return refs
        shared = next(iter(extras))
        last = refs[-1]
        by_id = {t.id: t for t in (cross_pool or [])}
        by_id[track.id] = track

        def alternatives(source: MultiTrack) -> List[str]:
            return sorted({c for c in source.classes if c not in (class_name, shared)})

        own = alternatives(by_id[last.track_id])
        if own:
            extra = own[int(rng.integers(len(own)))]
            return refs[:-1] + [last.model_copy(update={"extra_class": extra})]
        if cross_pool is None:
            return refs

        sources = [
            t for t in cross_pool
            if t.id not in (track.id, last.track_id) and t.has_class(class_name)
            and t.num_samples >= self.chunk_len and alternatives(t)
        ]
        for i in rng.permutation(len(sources)):
            source = sources[int(i)]
            try:
                offset = self._offset(source, class_name, rng, None)
            except RetriesExhausted:
                continue
            options = alternatives(source)
            replacement = ChunkRef(
                track_id=source.id, class_name=class_name, offset=offset,
                length=self.chunk_len, extra_class=options[int(rng.integers(len(options)))],
            )
            return refs[:-1] + [replacement]
        return refs

    def _render(self, track: MultiTrack, ref: ChunkRef) -> AudioClip:
        clip = class_segment(track, ref.class_name, ref.offset, ref.length)
        if ref.extra_class is not None:
            clip = clip + class_segment(track, ref.extra_class, ref.offset, ref.length)
        return clip

    def negatives(self, track: MultiTrack, class_name: str, n: int, rng: np.random.Generator,
                  avoid: Optional[ChunkRef] = None) -> Tuple[List[AudioClip], List[ChunkRef]]:
        """
        n chunks of instruments of `track` other than `class_name`.

        Raises:
            SamplingError: the track has no other instrument
            RetriesExhausted: no valid chunk found
        """
        others = sorted({c for c in track.classes if c != class_name})
        if not others:
            raise SamplingError(
                f"Track '{track.id}' has no instrument besides '{class_name}' to use as a negative"
            )
        clips, refs = [], []
        for _ in range(n):
            other = others[int(rng.integers(len(others)))]
            offset = self._offset(track, other, rng, avoid)
            ref = ChunkRef(track_id=track.id, class_name=other, offset=offset, length=self.chunk_len)
            refs.append(ref)
            clips.append(self._render(track, ref))
        return clips, refs


class TrainingExampleSampler(LoggerMixin):
    """
    Draws training examples from weighted corpora.

    A corpus is drawn by weight, then a (track, stem) pair uniformly among
    the pairs that satisfy every sampling constraint, then a chunk offset.
    Silent targets and failed conditioning draws are redrawn up to
    cfg.max_retries times.
    """

    def __init__(self, corpora: Sequence[WeightedCorpus], cfg: SamplerConfig,
                 draw_conditioning: bool = True, sample_rate: int = SAMPLE_RATE):
        self.corpora = list(corpora)
        self.cfg = cfg
        self.draw_conditioning = draw_conditioning
        self.chunk_len = cfg.chunk_samples(sample_rate)
        self.drawer = ConditioningDrawer(self.chunk_len, cfg.silence_dbfs, cfg.max_retries)
        self._candidates = [self._eligible(corpus) for corpus in self.corpora]

        weights = np.array([
            cfg.corpus_weights.get(corpus.name, corpus.weight) if candidates else 0.0
            for corpus, candidates in zip(self.corpora, self._candidates)
        ])
        if not weights.sum() > 0:
            raise SamplingError(
                "No track satisfies the sampling constraints: "
                f"chunk of {self.chunk_len} samples, holdout {cfg.holdout_classes}, "
                f"cross_track={cfg.cross_track}, use_negatives={cfg.use_negatives}"
            )
        self._weights = weights / weights.sum()

    def _eligible(self, corpus: WeightedCorpus) -> List[Tuple[int, int]]:
        """(track, stem) index pairs usable as targets."""
        cfg = self.cfg
        holdout = set(cfg.holdout_classes)
        pairs = []
        for t, track in enumerate(corpus.tracks):
            if track.num_samples < self.chunk_len:
                continue
            for s, stem in enumerate(track.stems):
                if stem.class_name in holdout:
                    continue
                if self.draw_conditioning and not self._has_conditioning(corpus, track, stem.class_name):
                    continue
                pairs.append((t, s))
        return pairs

    def _has_conditioning(self, corpus: WeightedCorpus, track: MultiTrack, class_name: str) -> bool:
        if self.cfg.cross_track:
            if not any(
                other.id != track.id and other.has_class(class_name)
                and other.num_samples >= self.chunk_len
                for other in corpus.tracks
            ):
                return False
        elif track.num_samples < 2 * self.chunk_len:
            # same-track positives must fit beside the target
            return False
        if self.cfg.use_negatives and set(track.classes) == {class_name}:
            return False
        return True

    def sample(self, rng: np.random.Generator) -> TrainingExample:
        """
        Draw one example.

        Raises:
            SamplingError: retry budget exhausted
        """
        cfg = self.cfg
        L = self.chunk_len
        for _ in range(cfg.max_retries):
            c = int(rng.choice(len(self.corpora), p=self._weights))
            corpus, candidates = self.corpora[c], self._candidates[c]
            t, s = candidates[int(rng.integers(len(candidates)))]
            track = corpus.tracks[t]
            class_name = track.stems[s].class_name

            offset = int(rng.integers(track.num_samples - L + 1))
            target = class_segment(track, class_name, offset, L)
            if self.drawer.is_silent(target):
                continue
            target_ref = ChunkRef(track_id=track.id, class_name=class_name, offset=offset, length=L)

            positives: List[AudioClip] = []
            negatives: List[AudioClip] = []
            pos_refs: List[ChunkRef] = []
            neg_refs: List[ChunkRef] = []
            if self.draw_conditioning:
                try:
                    positives, pos_refs = self.drawer.positives(
                        track, class_name, cfg.n_shots, rng, avoid=target_ref,
                        cross_pool=corpus.tracks if cfg.cross_track else None,
                        multi_source_prob=cfg.multi_source_prob,
                    )
                    if cfg.use_negatives:
                        negatives, neg_refs = self.drawer.negatives(
                            track, class_name, cfg.n_shots, rng, avoid=target_ref
                        )
                except RetriesExhausted:
                    continue

            return TrainingExample(
                mixture=track.mixture_segment(offset, L),
                target=target,
                target_class=class_name,
                positive_examples=positives,
                negative_examples=negatives,
                provenance=ExampleProvenance(
                    corpus=corpus.name,
                    target=target_ref,
                    mixture_classes=list(track.classes),
                    positives=pos_refs,
                    negatives=neg_refs,
                ),
            )
        raise SamplingError(
            f"No valid training example after {cfg.max_retries} attempts "
            f"(silent targets or conditioning chunks); check silence_dbfs={cfg.silence_dbfs}"
        )

    def sample_batch(self, rng: np.random.Generator, size: int) -> List[TrainingExample]:
        return [self.sample(rng) for _ in range(size)]


def sample_training_example(
    corpus: Union[Sequence[MultiTrack], Sequence[WeightedCorpus]],
    cfg: SamplerConfig,
    rng: np.random.Generator,
    mode: ConditioningMode = ConditioningMode.FEW_SHOT,
) -> TrainingExample:
    """
    One training example from a corpus (plain track list or weighted corpora).

    Class mode skips conditioning chunks; few-shot+neg always draws negatives.
    """
    corpora = list(corpus)
    if corpora and isinstance(corpora[0], MultiTrack):
        corpora = [WeightedCorpus(name="corpus", tracks=corpora)]
    if mode == ConditioningMode.FEW_SHOT_NEG and not cfg.use_negatives:
        cfg = cfg.model_copy(update={"use_negatives": True})
    sampler = TrainingExampleSampler(corpora, cfg, draw_conditioning=mode != ConditioningMode.CLASS)
    return sampler.sample(rng)
