"""
Training loop: sampled batches, Adam updates, periodic validation on a
held-out split, early stopping, best and last checkpoints.
"""
import copy
import time
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.model_selection import train_test_split

from app.core.config import ConditioningMode, RunConfig
from app.core.exceptions import ConfigurationError, CorpusError
from app.core.logging import EventLog, LoggerMixin, log_performance
from app.domain.entities.conditioning import InstrumentVocabulary
from app.domain.entities.multitrack import TrainingExample, WeightedCorpus
from app.domain.entities.scores import LossBreakdown
from app.services.data.corpus_tools import class_distribution
from app.services.data.sampler import TrainingExampleSampler
from app.services.loss.objective import composite_loss
from app.services.model.checkpoint import ModelCheckpoint


class Batch(NamedTuple):
    """Stacked training examples as float32 tensors."""
    mixture: torch.Tensor
    target: torch.Tensor
    class_index: torch.Tensor
    positives: Optional[torch.Tensor]
    negatives: Optional[torch.Tensor]


def _stack(clips) -> torch.Tensor:
    return torch.from_numpy(np.stack([c.samples for c in clips]).astype(np.float32))


def collate(examples: Sequence[TrainingExample], vocabulary: InstrumentVocabulary) -> Batch:
    positives = negatives = None
    if examples[0].positive_examples:
        positives = torch.stack([_stack(e.positive_examples) for e in examples])
    if examples[0].negative_examples:
        negatives = torch.stack([_stack(e.negative_examples) for e in examples])
    return Batch(
        mixture=_stack([e.mixture for e in examples]),
        target=_stack([e.target for e in examples]),
        class_index=torch.tensor([vocabulary.index(e.target_class) for e in examples]),
        positives=positives,
        negatives=negatives,
    )


def split_corpus(corpus: WeightedCorpus, fraction: float,
                 seed: int) -> Tuple[WeightedCorpus, WeightedCorpus]:
    """
    Seeded track-level split into (train, validation).

    Raises:
        CorpusError: fewer than two tracks
    """
    if len(corpus.tracks) < 2:
        raise CorpusError(
            f"Corpus '{corpus.name}' has {len(corpus.tracks)} track(s); "
            f"at least two are needed to hold out a validation split"
        )
    train_tracks, val_tracks = train_test_split(
        corpus.tracks, test_size=fraction, random_state=seed, shuffle=True
    )
    return (
        WeightedCorpus(name=corpus.name, tracks=train_tracks, weight=corpus.weight),
        WeightedCorpus(name=corpus.name, tracks=val_tracks, weight=corpus.weight),
    )


class Trainer(LoggerMixin):
    """
    Trains one checkpoint in place.

    The checkpoint carries the step counter, early-stopping state and Adam
    moments, so a saved `last` checkpoint resumes where it stopped.
    """

    def __init__(self, config: RunConfig, checkpoint: ModelCheckpoint,
                 corpora: Sequence[WeightedCorpus], output_dir: Path,
                 event_log: Optional[EventLog] = None):
        self.config = config
        self.checkpoint = checkpoint
        self.network = checkpoint.network
        self.output_dir = Path(output_dir)
        self.event_log = event_log
        mode = checkpoint.mode

        sampler_cfg = config.sampler
        if mode == ConditioningMode.FEW_SHOT_NEG and not sampler_cfg.use_negatives:
            sampler_cfg = sampler_cfg.model_copy(update={"use_negatives": True})
        draw_conditioning = mode != ConditioningMode.CLASS

        splits = [split_corpus(c, config.training.validation_fraction, config.seed) for c in corpora]
        self.train_sampler = TrainingExampleSampler(
            [train for train, _ in splits], sampler_cfg, draw_conditioning, checkpoint.sample_rate
        )
        self.validation_sampler = TrainingExampleSampler(
            [val for _, val in splits], sampler_cfg, draw_conditioning, checkpoint.sample_rate
        )
        self.validation_batches = self._validation_set()

        self.optimizer = torch.optim.Adam(
            self.network.parameters(),
            lr=config.training.learning_rate,
            betas=tuple(config.training.adam_betas),
        )
        if checkpoint.optimizer_state is not None:
            self.optimizer.load_state_dict(checkpoint.optimizer_state)

        self.logger.info(
            "Trainer initialized",
            extra={
                "mode": mode.value,
                "train_tracks": sum(len(t.tracks) for t, _ in splits),
                "validation_tracks": sum(len(v.tracks) for _, v in splits),
                "class_distribution": class_distribution([t for c in corpora for t in c.tracks]),
                "start_step": checkpoint.training.step,
            },
        )

    def _rng(self, *stream: int) -> np.random.Generator:
        """Sampler stream seeded by the run seed and sampler.rng_seed."""
        return np.random.default_rng([self.config.seed, self.config.sampler.rng_seed, *stream])

    def _validation_set(self) -> List[Batch]:
        """Fixed validation batches, drawn once."""
        rng = self._rng(1)
        size = self.config.training.batch_size
        return [
            collate(self.validation_sampler.sample_batch(rng, size), self.checkpoint.vocabulary)
            for _ in range(self.config.training.validation_batches)
        ]

    def _conditioning(self, batch: Batch) -> torch.Tensor:
        if self.checkpoint.mode == ConditioningMode.CLASS:
            return torch.nn.functional.one_hot(
                batch.class_index, num_classes=len(self.checkpoint.vocabulary)
            ).to(batch.mixture.dtype)
        return self.network.condition(batch.positives, batch.negatives)

    def _loss(self, batch: Batch):
        estimate = self.network(batch.mixture, self._conditioning(batch))
        return composite_loss(estimate, batch.target, self.network.stft_config, self.config.loss)

    def train_step(self, batch: Batch) -> LossBreakdown:
        """One Adam update on one batch."""
        self.network.train()
        terms = self._loss(batch)
        self.optimizer.zero_grad()
        terms.total.backward()
        self.optimizer.step()
        return terms.breakdown(self.config.loss)

    def validate(self) -> float:
        """Mean total loss over the validation batches, batch norm in inference mode."""
        self.network.eval()
        with torch.no_grad():
            totals = [float(self._loss(batch).total) for batch in self.validation_batches]
        return float(np.mean(totals))

    def _emit(self, event: str, **fields) -> None:
        if self.event_log is not None:
            self.event_log.emit(event, **fields)

    def _save(self, name: str) -> Path:
        self.checkpoint.optimizer_state = self.optimizer.state_dict()
        path = self.output_dir / name
        self.checkpoint.save(path)
        self._emit("checkpoint", step=self.checkpoint.training.step, path=str(path))
        return path

    def fit(self) -> ModelCheckpoint:
        """
        Train until max_steps or early stopping, then restore the best weights.

        Returns:
            the checkpoint, holding the best validated weights
        """
        cfg = self.config.training
        paths = self.config.paths
        meta = self.checkpoint.training
        rng = self._rng(0, meta.step)
        best_state = None
        started = time.perf_counter()

        while meta.step < cfg.max_steps:
            examples = self.train_sampler.sample_batch(rng, cfg.batch_size)
            breakdown = self.train_step(collate(examples, self.checkpoint.vocabulary))
            meta.step += 1

            if meta.step == 1 or meta.step % cfg.log_every == 0:
                self._emit("train_step", step=meta.step, **breakdown.model_dump())

            if meta.step % cfg.validation_every and meta.step != cfg.max_steps:
                continue

            validation_loss = self.validate()
            improved = meta.best_validation_loss is None or validation_loss < meta.best_validation_loss
            if improved:
                meta.best_validation_loss = validation_loss
                meta.best_step = meta.step
                meta.validations_without_improvement = 0
                best_state = copy.deepcopy(self.network.state_dict())
                self._save(paths.best_checkpoint)
            else:
                meta.validations_without_improvement += 1
            self._emit(
                "validation", step=meta.step, validation_loss=validation_loss, improved=improved,
                best_validation_loss=meta.best_validation_loss,
            )

            if meta.validations_without_improvement >= cfg.patience:
                meta.stopped_early = True
                self._emit("early_stop", step=meta.step, best_step=meta.best_step)
                self.logger.info(
                    "Early stopping",
                    extra={"step": meta.step, "best_step": meta.best_step},
                )
            self._save(paths.last_checkpoint)
            if meta.stopped_early:
                break

        if best_state is None and meta.best_step is not None:
            # resumed run without a new best: the best weights are on disk
            best_path = self.output_dir / paths.best_checkpoint
            if best_path.is_file():
                best_state = ModelCheckpoint.load(best_path).network.state_dict()
        if best_state is not None:
            self.network.load_state_dict(best_state)
        log_performance(
            "training", (time.perf_counter() - started) * 1000,
            steps=meta.step, best_step=meta.best_step, mode=self.checkpoint.mode.value,
        )
        return self.checkpoint


def check_resume(checkpoint: ModelCheckpoint, config: RunConfig) -> None:
    """
    Raises:
        ConfigurationError: the checkpoint was built with another conditioning
            mode, architecture, vocabulary or chunk length than the config
    """
    pairs = {
        "training.conditioning_mode": (checkpoint.mode, config.training.conditioning_mode),
        "unet": (checkpoint.unet_config, config.unet),
        "encoder": (checkpoint.encoder_config, config.encoder),
        "stft": (checkpoint.stft_config, config.stft),
        "vocabulary": (list(checkpoint.vocabulary.names), list(config.vocabulary)),
        "sampler.chunk_seconds": (
            checkpoint.chunk_samples, config.sampler.chunk_samples(checkpoint.sample_rate)
        ),
    }
    mismatched = {
        key: {"checkpoint": str(stored), "config": str(wanted)}
        for key, (stored, wanted) in pairs.items() if stored != wanted
    }
    if mismatched:
        raise ConfigurationError(
            f"Cannot resume: checkpoint and config disagree on {', '.join(mismatched)}",
            details=mismatched,
        )


def train(config: RunConfig, corpora: Sequence[WeightedCorpus],
          resume: Optional[Path] = None) -> ModelCheckpoint:
    """
    Train a fresh checkpoint, or resume one, writing checkpoints and the
    event log under config.paths.output_dir.
    """
    if config.training.num_threads is not None:
        torch.set_num_threads(config.training.num_threads)
    if resume is not None:
        checkpoint = ModelCheckpoint.load(resume)
        check_resume(checkpoint, config)
    else:
        checkpoint = ModelCheckpoint.create(config)
    output_dir = Path(config.paths.output_dir)
    with EventLog(output_dir / config.paths.train_log, name="train") as event_log:
        trainer = Trainer(config, checkpoint, corpora, output_dir, event_log)
        return trainer.fit()
