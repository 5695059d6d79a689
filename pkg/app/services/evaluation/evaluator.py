"""
Full-track separation and the multi-iteration evaluation protocol.
"""
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import ConditioningMode, ConditioningPurity, ConditioningSource, EvalProtocol
from app.core.exceptions import EvaluationError
from app.core.logging import LoggerMixin
from app.domain.entities.audio import AudioClip
from app.domain.entities.conditioning import ConditioningRequest, ConditioningVector
from app.domain.entities.multitrack import MultiTrack
from app.domain.entities.scores import ClassSummary, EvaluationReport, TrackScore
from app.domain.interfaces.conditioner import Conditioner
from app.services.conditioning.factory import create_conditioner
from app.services.data.corpus_tools import class_distribution, one_stem_per_class
from app.services.data.sampler import ConditioningDrawer, RetriesExhausted, class_segment
from app.services.dsp.chunking import chunk, overlap_add
from app.services.dsp.resampling import resample
from app.services.evaluation.sdr import measure_sdr
from app.services.model.checkpoint import ModelCheckpoint
from app.services.model.inference import separate_chunks


def separate_track(mix: AudioClip, conditioning: ConditioningVector, checkpoint: ModelCheckpoint,
                   overlap: float = 0.5, batch_size: int = 8) -> AudioClip:
    """
    Separate a mixture of any length.

    The mixture is brought to the model rate, cut into model-length chunks
    with `overlap`, separated with one conditioning vector, stitched by
    overlap-add and brought back to the input rate and length.
    """
    work = mix if mix.sample_rate == checkpoint.sample_rate else resample(mix, checkpoint.sample_rate)
    pieces = chunk(work, checkpoint.chunk_samples, overlap)
    separated = separate_chunks([p for _, p in pieces], conditioning, checkpoint, batch_size)
    joined = overlap_add([(offset, s) for (offset, _), s in zip(pieces, separated)], work.num_samples)
    if joined.sample_rate != mix.sample_rate:
        joined = resample(joined, mix.sample_rate)
    return joined.padded_to(mix.num_samples)


def _iteration_rng(protocol: EvalProtocol, track_id: str, target_class: str,
                   iteration: int) -> np.random.Generator:
    return np.random.default_rng([
        protocol.seed, zlib.crc32(track_id.encode()), zlib.crc32(target_class.encode()), iteration,
    ])


class TrackEvaluator(LoggerMixin):
    """Scores (track, class) pairs of one corpus against one checkpoint."""

    def __init__(self, checkpoint: ModelCheckpoint, protocol: EvalProtocol,
                 corpus: Optional[Sequence[MultiTrack]] = None,
                 conditioner: Optional[Conditioner] = None):
        self.checkpoint = checkpoint
        self.protocol = protocol
        self.corpus = list(corpus) if corpus is not None else []
        self.conditioner = conditioner or create_conditioner(checkpoint)
        self.drawer = ConditioningDrawer(
            chunk_len=int(round(protocol.example_seconds * checkpoint.sample_rate))
        )

    @property
    def needs_negatives(self) -> bool:
        return self.protocol.use_negatives or self.checkpoint.mode == ConditioningMode.FEW_SHOT_NEG

    def _cross_pool(self, track: MultiTrack, target_class: str) -> Optional[List[MultiTrack]]:
        if self.protocol.conditioning_source != ConditioningSource.CROSS_TRACK:
            return None
        pool = [t for t in self.corpus if t.id != track.id and t.has_class(target_class)]
        if not pool:
            raise EvaluationError(
                f"Cross-track conditioning for '{target_class}' on track '{track.id}' needs "
                f"another track of that class in the evaluation corpus"
            )
        return pool

    def _request(self, track: MultiTrack, target_class: str, gain: float,
                 rng: np.random.Generator, cross_pool: Optional[List[MultiTrack]]) -> ConditioningRequest:
        if self.checkpoint.mode == ConditioningMode.CLASS:
            return ConditioningRequest(class_name=target_class)
        protocol = self.protocol
        multi_prob = (
            protocol.multi_source_prob
            if protocol.conditioning_purity == ConditioningPurity.MULTI_SOURCE else 0.0
        )
        try:
            positives, _ = self.drawer.positives(
                track, target_class, protocol.n_shots, rng,
                cross_pool=cross_pool, multi_source_prob=multi_prob,
            )
            negatives: List[AudioClip] = []
            if self.needs_negatives:
                negatives, _ = self.drawer.negatives(track, target_class, protocol.n_shots, rng)
        except RetriesExhausted as e:
            raise EvaluationError(f"Cannot draw conditioning examples: {e}") from e
        return ConditioningRequest(
            positives=[p.scaled(gain) for p in positives],
            negatives=[n.scaled(gain) for n in negatives],
        )

    def evaluate_track(self, track: MultiTrack, target_class: str) -> TrackScore:
        """
        Score one (track, class) pair over protocol.iterations draws.

        Mixture and reference share one gain that brings the mixture peak to
        protocol.peak_level.

        Raises:
            EvaluationError: class missing or protocol unsatisfiable
        """
        protocol = self.protocol
        if not track.has_class(target_class):
            raise EvaluationError(f"Track '{track.id}' has no '{target_class}' stem")
        cross_pool = self._cross_pool(track, target_class)

        mixture = track.mixture()
        peak = mixture.peak()
        gain = protocol.peak_level / peak if peak > 0 else 1.0
        mixture = mixture.scaled(gain)
        reference = class_segment(track, target_class, 0, track.num_samples).scaled(gain)

        baseline = measure_sdr(mixture, reference, protocol.window_seconds, protocol.sdr_cap_db)
        sdrs: List[float] = []
        capped = 0
        previous: Optional[Tuple[np.ndarray, AudioClip]] = None
        for iteration in range(protocol.iterations):
            rng = _iteration_rng(protocol, track.id, target_class, iteration)
            z = self.conditioner.build(self._request(track, target_class, gain, rng, cross_pool))
            if previous is not None and np.array_equal(previous[0], z.values):
                estimate = previous[1]
            else:
                estimate = separate_track(mixture, z, self.checkpoint, protocol.overlap)
                previous = (z.values, estimate)
            measured = measure_sdr(estimate, reference, protocol.window_seconds, protocol.sdr_cap_db)
            sdrs.append(measured.sdr_db)
            capped += int(measured.capped)

        score = TrackScore(
            track_id=track.id,
            target_class=target_class,
            sdr_per_iteration=sdrs,
            capped_iterations=capped,
            mixture_sdr=baseline.sdr_db,
        )
        self.logger.info(
            "Track evaluated",
            extra={"track": track.id, "target_class": target_class, "mean_sdr_db": score.mean,
                   "std_sdr_db": score.std, "mixture_sdr_db": score.mixture_sdr},
        )
        return score


def evaluate_track(track: MultiTrack, target_class: str, checkpoint: ModelCheckpoint,
                   protocol: EvalProtocol,
                   corpus: Optional[Sequence[MultiTrack]] = None) -> TrackScore:
    """Score one (track, class) pair; `corpus` supplies cross-track conditioning."""
    return TrackEvaluator(checkpoint, protocol, corpus).evaluate_track(track, target_class)


def summarize(scores: Sequence[TrackScore], classes: Sequence[str]) -> List[ClassSummary]:
    """Per-class aggregates over track means."""
    summaries = []
    for target_class in classes:
        rows = [s for s in scores if s.target_class == target_class]
        if not rows:
            continue
        means = np.array([s.mean for s in rows])
        summaries.append(ClassSummary(
            target_class=target_class,
            tracks=len(rows),
            mean_sdr_db=float(means.mean()),
            median_sdr_db=float(np.median(means)),
            mean_std_db=float(np.mean([s.std for s in rows])),
            std_of_means_db=float(means.std()),
            mean_mixture_sdr_db=float(np.mean([s.mixture_sdr for s in rows])),
            mean_improvement_db=float(np.mean([s.improvement for s in rows])),
        ))
    return summaries


def evaluate_corpus(corpus: Sequence[MultiTrack], classes: Optional[Sequence[str]],
                    checkpoint: ModelCheckpoint, protocol: EvalProtocol) -> EvaluationReport:
    """
    Score every (class, track) pair of a corpus.

    Pairs run on protocol.workers threads; results are ordered by class,
    then track, whatever the completion order.

    Raises:
        EvaluationError: empty corpus, repeated track ids or no track holds
            a requested class
    """
    tracks = list(corpus)
    if not tracks:
        raise EvaluationError("Evaluation corpus is empty")
    duplicated = sorted(i for i, n in Counter(t.id for t in tracks).items() if n > 1)
    if duplicated:
        raise EvaluationError(
            f"Evaluation track ids must be unique; repeated: {', '.join(duplicated)}",
            details={"duplicated": duplicated},
        )
    if protocol.one_stem_per_class:
        tracks = [
            one_stem_per_class(t, np.random.default_rng([protocol.seed, zlib.crc32(t.id.encode())]))
            for t in tracks
        ]
    classes = list(classes or protocol.classes or class_distribution(tracks))
    pairs = [(c, t) for c in classes for t in tracks if t.has_class(c)]
    if not pairs:
        raise EvaluationError(f"No evaluation track contains any of {classes}")

    evaluator = TrackEvaluator(checkpoint, protocol, tracks)
    results: Dict[Tuple[str, str], TrackScore] = {}
    with ThreadPoolExecutor(max_workers=protocol.workers) as pool:
        futures = {
            (c, t.id): pool.submit(evaluator.evaluate_track, t, c) for c, t in pairs
        }
        for key, future in futures.items():
            results[key] = future.result()

    scores = [results[(c, t.id)] for c, t in pairs]
    return EvaluationReport(
        scores=scores,
        summaries=summarize(scores, classes),
        protocol=protocol.model_dump(mode="json"),
        checkpoint_mode=checkpoint.mode.value,
    )
