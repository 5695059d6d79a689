import json
import logging
from pathlib import Path

import pytest
import soundfile as sf

from app.core.config import SAMPLE_RATE, ConditioningMode, RunConfig
from app.core.exceptions import ConfigurationError
from app.domain.entities.audio import AudioClip
from app.main import apply_overrides, build_parser, corpus_sources, main
from app.services.data import DirectoryCorpusSource, SyntheticCorpusSource, write_corpus
from app.services.dsp import write_wav
from app.services.model.checkpoint import ModelCheckpoint

TINY_TOML = """\
seed = 0
vocabulary = ["vocals", "drums", "bass"]

[stft]
fft_size = 32
hop = 8

[unet]
depth = 2
base_channels = 2
in_freq = 16
in_frames = 16

[encoder]
blocks = 1
filters = 4
input_bands = 8
embedding_dim = 16
min_example_seconds = 0.001

[sampler]
n_shots = 2
chunk_seconds = {chunk!r}

[training]
batch_size = 2
max_steps = 2
validation_every = 2
validation_batches = 1
validation_fraction = 0.25
log_every = 1

[eval]
n_shots = 2
iterations = 2
example_seconds = {chunk!r}

[synth]
n_tracks = 3
duration_seconds = 0.25

[paths]
output_dir = "{out}"

[logging]
format = "text"
"""


@pytest.fixture(autouse=True)
def _restore_root_handlers():
    handlers, level = logging.root.handlers[:], logging.root.level
    yield
    logging.root.handlers = handlers
    logging.root.setLevel(level)


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "tiny.toml"
    out = (tmp_path / "run").as_posix()
    path.write_text(TINY_TOML.format(chunk=128 / SAMPLE_RATE, out=out))
    return path


@pytest.fixture
def corpus_dir(tmp_path, tiny_corpus) -> Path:
    root = tmp_path / "corpus"
    write_corpus(tiny_corpus, root)
    return root


@pytest.fixture
def wav(tmp_path, make_tone):
    def _write(name: str, n: int, freq: float = 440.0) -> Path:
        path = tmp_path / name
        write_wav(path, AudioClip(samples=make_tone(freq, n), sample_rate=SAMPLE_RATE))
        return path

    return _write


class TestConfigFile:
    def test_file_matches_fixture_config(self, config_file, tiny_config):
        loaded = RunConfig.from_file(config_file)
        assert loaded.unet == tiny_config.unet
        assert loaded.sampler.chunk_samples() == 128


class TestOverrides:
    def test_none_is_skipped(self, tiny_config):
        updated = apply_overrides(tiny_config, {"eval": {"iterations": 7, "seed": None}})
        assert updated.eval.iterations == 7
        assert updated.eval.seed == tiny_config.eval.seed

    def test_invalid_value(self, tiny_config):
        with pytest.raises(ConfigurationError):
            apply_overrides(tiny_config, {"sampler": {"n_shots": 9}})


class TestCorpusSources:
    def test_synthetic_without_directories(self, tiny_config):
        sources = corpus_sources(tiny_config, [])
        assert [type(s) for s in sources] == [SyntheticCorpusSource]
        assert sources[0].get_name() == "synthetic"

    def test_one_named_source_per_directory(self, tiny_config, corpus_dir, tmp_path):
        second = tmp_path / "second"
        write_corpus(SyntheticCorpusSource(tiny_config.synth).load(), second)
        sources = corpus_sources(tiny_config, [corpus_dir, second])
        assert all(isinstance(s, DirectoryCorpusSource) for s in sources)
        assert [s.get_name() for s in sources] == ["corpus", "second"]
        assert len(sources[0].load()) == 8


class TestParser:
    def test_separate_arguments(self):
        args = build_parser().parse_args(
            ["separate", "m.ckpt", "mix.wav", "out.wav", "--examples", "a.wav", "b.wav", "--class", "bass"]
        )
        assert args.class_name == "bass"
        assert args.examples == [Path("a.wav"), Path("b.wav")]

    def test_train_mode_choices(self):
        args = build_parser().parse_args(["train", "--mode", "few-shot+neg", "--holdout", "bass"])
        assert args.mode == ConditioningMode.FEW_SHOT_NEG
        assert args.holdout == ["bass"]


class TestCommands:
    def test_synth(self, config_file, tmp_path, capsys):
        out = tmp_path / "synth"
        assert main(["--config", str(config_file), "synth", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["tracks"]) == 3
        assert "Wrote 3 tracks" in capsys.readouterr().out

    def test_train(self, config_file, corpus_dir, tmp_path):
        out = tmp_path / "trained"
        code = main(["--config", str(config_file), "train", "--corpus", str(corpus_dir),
                     "--mode", "class", "--output-dir", str(out)])
        assert code == 0
        checkpoint = ModelCheckpoint.load(out / "last.ckpt")
        assert checkpoint.mode == ConditioningMode.CLASS
        assert checkpoint.training.step == 2
        assert (out / "train_log.jsonl").is_file()

    def test_separate_with_examples(self, config_file, tiny_config, tmp_path, wav):
        ckpt = tmp_path / "fs.ckpt"
        ModelCheckpoint.create(tiny_config, ConditioningMode.FEW_SHOT).save(ckpt)
        mixture = wav("mix.wav", 1000)
        example = wav("ex.wav", 300)
        output = tmp_path / "out.wav"
        code = main(["--config", str(config_file), "separate", str(ckpt), str(mixture), str(output),
                     "--examples", str(example)])
        assert code == 0
        info = sf.info(str(output))
        assert info.frames == 1000 and info.samplerate == SAMPLE_RATE

    def test_class_name_on_few_shot_checkpoint(self, config_file, tiny_config, tmp_path, wav, capsys):
        ckpt = tmp_path / "fs.ckpt"
        ModelCheckpoint.create(tiny_config, ConditioningMode.FEW_SHOT).save(ckpt)
        mixture = wav("mix.wav", 1000)
        output = tmp_path / "out.wav"
        code = main(["--config", str(config_file), "separate", str(ckpt), str(mixture), str(output),
                     "--class", "bass"])
        assert code == 2
        assert not output.exists()
        assert "error:" in capsys.readouterr().err

    def test_class_name_with_examples_on_few_shot_checkpoint(self, config_file, tiny_config, tmp_path, wav):
        ckpt = tmp_path / "fs.ckpt"
        ModelCheckpoint.create(tiny_config, ConditioningMode.FEW_SHOT).save(ckpt)
        mixture = wav("mix.wav", 1000)
        example = wav("ex.wav", 300)
        output = tmp_path / "out.wav"
        code = main(["--config", str(config_file), "separate", str(ckpt), str(mixture), str(output),
                     "--class", "bass", "--examples", str(example)])
        assert code == 2
        assert not output.exists()

    def test_too_many_examples(self, config_file, tmp_path, wav):
        paths = [str(wav(f"ex{i}.wav", 300)) for i in range(6)]
        code = main(["--config", str(config_file), "separate", "missing.ckpt", "mix.wav",
                     str(tmp_path / "out.wav"), "--examples", *paths])
        assert code == 2

    def test_evaluate(self, config_file, tiny_config, corpus_dir, tmp_path, capsys):
        ckpt = tmp_path / "class.ckpt"
        ModelCheckpoint.create(tiny_config, ConditioningMode.CLASS).save(ckpt)
        report = tmp_path / "report.jsonl"
        code = main(["--config", str(config_file), "evaluate", str(ckpt), str(corpus_dir),
                     "--iterations", "1", "--classes", "bass", "--report", str(report)])
        assert code == 0
        records = [json.loads(line) for line in report.read_text().splitlines()]
        assert records[-1]["record"] == "summary"
        assert records[-1]["tracks"] == 6
        assert "mode: class" in capsys.readouterr().out

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.toml"), "synth"]) == 2
