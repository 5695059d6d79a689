import json
from pathlib import Path

import numpy as np
import pytest
import torch

from app.core.config import ConditioningMode, RunConfig, UNetConfig
from app.core.exceptions import ConfigurationError, CorpusError
from app.domain.entities.multitrack import WeightedCorpus
from app.services.data import TrainingExampleSampler
from app.services.model.checkpoint import ModelCheckpoint
from app.services.training import Trainer, check_resume, collate, split_corpus, train


def with_training(config: RunConfig, **updates) -> RunConfig:
    return config.model_copy(update={"training": config.training.model_copy(update=updates)})


def read_events(path: Path):
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.fixture
def corpora(tiny_corpus):
    return [WeightedCorpus(name="tiny", tracks=tiny_corpus)]


class TestSplit:
    def test_disjoint_and_seeded(self, corpora):
        train_part, val_part = split_corpus(corpora[0], 0.25, seed=3)
        assert len(train_part.tracks) == 6 and len(val_part.tracks) == 2
        assert not {t.id for t in train_part.tracks} & {t.id for t in val_part.tracks}
        again, _ = split_corpus(corpora[0], 0.25, seed=3)
        assert [t.id for t in again.tracks] == [t.id for t in train_part.tracks]

    def test_needs_two_tracks(self, tiny_corpus):
        with pytest.raises(CorpusError):
            split_corpus(WeightedCorpus(name="one", tracks=tiny_corpus[:1]), 0.25, seed=0)


class TestCollate:
    def test_few_shot_batch(self, tiny_config, corpora, make_checkpoint):
        sampler = TrainingExampleSampler(corpora, tiny_config.sampler)
        batch = collate(sampler.sample_batch(np.random.default_rng(0), 3),
                        make_checkpoint(ConditioningMode.FEW_SHOT).vocabulary)
        assert batch.mixture.shape == (3, 128) and batch.mixture.dtype == torch.float32
        assert batch.positives.shape == (3, 2, 128)
        assert batch.negatives is None
        assert batch.class_index.shape == (3,)

    def test_class_batch_has_no_examples(self, tiny_config, corpora, make_checkpoint):
        sampler = TrainingExampleSampler(corpora, tiny_config.sampler, draw_conditioning=False)
        batch = collate(sampler.sample_batch(np.random.default_rng(0), 2),
                        make_checkpoint(ConditioningMode.CLASS).vocabulary)
        assert batch.positives is None and batch.negatives is None


class TestTrainer:
    @pytest.mark.parametrize("mode", list(ConditioningMode))
    def test_train_step_updates_weights(self, tiny_config, corpora, make_checkpoint, tmp_path, mode):
        checkpoint = make_checkpoint(mode)
        trainer = Trainer(tiny_config, checkpoint, corpora, tmp_path)
        before = [p.detach().clone() for p in checkpoint.network.parameters()]
        examples = trainer.train_sampler.sample_batch(np.random.default_rng(0), 2)
        breakdown = trainer.train_step(collate(examples, checkpoint.vocabulary))
        assert np.isfinite(breakdown.total)
        after = list(checkpoint.network.parameters())
        assert any(not torch.equal(a, b) for a, b in zip(before, after))

    def test_validation_set_is_fixed(self, tiny_config, corpora, make_checkpoint, tmp_path):
        checkpoint = make_checkpoint(ConditioningMode.FEW_SHOT)
        trainer = Trainer(tiny_config, checkpoint, corpora, tmp_path)
        assert trainer.validate() == trainer.validate()

    def test_sampler_seed_selects_the_validation_draw(self, tiny_config, corpora, make_checkpoint, tmp_path):
        def validation_targets(config: RunConfig):
            trainer = Trainer(config, make_checkpoint(ConditioningMode.FEW_SHOT), corpora, tmp_path)
            return [batch.target.numpy() for batch in trainer.validation_batches]

        reseeded = tiny_config.model_copy(
            update={"sampler": tiny_config.sampler.model_copy(update={"rng_seed": 5})}
        )
        first = validation_targets(tiny_config)
        assert all(np.array_equal(a, b) for a, b in zip(first, validation_targets(tiny_config)))
        assert not all(np.array_equal(a, b) for a, b in zip(first, validation_targets(reseeded)))

    def test_fit_writes_checkpoints_and_events(self, tiny_config, corpora):
        checkpoint = train(tiny_config, corpora)
        out = tiny_config.paths.output_dir
        assert (out / "best.ckpt").is_file() and (out / "last.ckpt").is_file()
        assert checkpoint.training.step == 4
        assert checkpoint.training.best_step in (2, 4)

        events = read_events(out / "train_log.jsonl")
        kinds = [e["event"] for e in events]
        assert kinds.count("train_step") == 4
        assert [e["step"] for e in events if e["event"] == "validation"] == [2, 4]
        assert "checkpoint" in kinds
        first = events[0]
        assert {"sdr_term", "mag_mae_term", "total", "timestamp"} <= set(first)

    def test_resume_continues_the_step_count(self, tiny_config, corpora):
        short = with_training(tiny_config, max_steps=2)
        train(short, corpora)
        last = tiny_config.paths.output_dir / "last.ckpt"
        assert ModelCheckpoint.load(last).training.step == 2

        resumed = train(tiny_config, corpora, resume=last)
        assert resumed.training.step == 4
        steps = [e["step"] for e in read_events(tiny_config.paths.output_dir / "train_log.jsonl")
                 if e["event"] == "train_step"]
        assert steps == [1, 2, 3, 4]

    def test_resume_rejects_another_mode(self, tiny_config, corpora):
        train(with_training(tiny_config, max_steps=2), corpora)
        last = tiny_config.paths.output_dir / "last.ckpt"
        with pytest.raises(ConfigurationError, match="conditioning_mode"):
            train(with_training(tiny_config, conditioning_mode=ConditioningMode.CLASS), corpora, resume=last)

    def test_resume_rejects_another_architecture(self, tiny_config, make_checkpoint):
        checkpoint = make_checkpoint(ConditioningMode.FEW_SHOT)
        check_resume(checkpoint, tiny_config)
        wider = tiny_config.model_copy(update={"unet": UNetConfig(depth=2, base_channels=4, in_freq=16, in_frames=16)})
        with pytest.raises(ConfigurationError, match="unet") as excinfo:
            check_resume(checkpoint, wider)
        assert set(excinfo.value.details) == {"unet"}

    def test_early_stop_restores_best(self, tiny_config, corpora, monkeypatch):
        losses = iter([1.0, 2.0, 3.0, 4.0])
        monkeypatch.setattr(Trainer, "validate", lambda self: next(losses))
        config = with_training(tiny_config, max_steps=20, validation_every=1, patience=2)

        checkpoint = train(config, corpora)
        meta = checkpoint.training
        assert meta.stopped_early and meta.step == 3 and meta.best_step == 1

        best = ModelCheckpoint.load(config.paths.output_dir / "best.ckpt")
        for name, tensor in best.network.state_dict().items():
            assert torch.equal(tensor, checkpoint.network.state_dict()[name]), name
        events = read_events(config.paths.output_dir / "train_log.jsonl")
        assert events[-2]["event"] == "early_stop"
