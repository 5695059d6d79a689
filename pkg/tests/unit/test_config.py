from pathlib import Path

import pytest
from pydantic import ValidationError as PydanticValidationError

from app.core.config import (
    CHUNK_SAMPLES,
    ConditioningMode,
    ConditioningSource,
    RunConfig,
    StemMapping,
    UNetConfig,
)
from app.core.exceptions import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"


class TestDefaults:
    def test_documented_defaults(self):
        config = RunConfig()
        assert (config.stft.fft_size, config.stft.hop) == (1024, 256)
        assert config.sampler.chunk_samples() == CHUNK_SAMPLES == 66150
        assert config.training.batch_size == 16
        assert config.training.learning_rate == 0.001
        assert config.training.conditioning_mode == ConditioningMode.FEW_SHOT
        assert config.eval.iterations == 10
        assert config.eval.multi_source_prob == 0.5
        assert config.eval.conditioning_source == ConditioningSource.SAME_TRACK
        assert config.unet.depth == 6 and config.unet.bottleneck_channels == 512
        assert config.encoder.embedding_dim == 512
        assert len(config.vocabulary) == 18

    def test_shipped_files_load(self):
        assert RunConfig.from_file(CONFIG_DIR / "default.toml") == RunConfig()
        smoke = RunConfig.from_file(CONFIG_DIR / "smoke.toml")
        assert smoke.unet.in_freq == smoke.stft.fft_size // 2
        mapping = StemMapping.from_file(CONFIG_DIR / "stem_mapping.toml")
        assert mapping.resolve("mixture") is None


class TestValidation:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[training]\nbatch_sise = 4\n")
        with pytest.raises(ConfigurationError):
            RunConfig.from_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            RunConfig.from_file(tmp_path / "absent.toml")

    def test_unet_input_must_match_stft(self):
        with pytest.raises(ConfigurationError, match="in_freq"):
            RunConfig(unet=UNetConfig(in_freq=256))

    def test_unet_input_must_divide_by_strides(self):
        with pytest.raises(ConfigurationError):
            UNetConfig(depth=6, in_freq=100)

    def test_holdout_must_be_in_vocabulary(self):
        with pytest.raises(ConfigurationError, match="holdout"):
            RunConfig(sampler={"holdout_classes": ["theremin"]})

    def test_duplicate_vocabulary(self):
        with pytest.raises(ConfigurationError):
            RunConfig(vocabulary=["bass", "bass"])

    def test_too_many_shots(self):
        with pytest.raises(PydanticValidationError):
            RunConfig(sampler={"n_shots": 6})


class TestEnvironment:
    def test_env_overrides_defaults(self, monkeypatch):
        monkeypatch.setenv("FSMSS_TRAINING__MAX_STEPS", "50")
        monkeypatch.setenv("FSMSS_SEED", "7")
        config = RunConfig.from_file(None)
        assert config.training.max_steps == 50
        assert config.seed == 7

    def test_file_values_win_over_env(self, monkeypatch, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("[training]\nmax_steps = 12\n")
        monkeypatch.setenv("FSMSS_TRAINING__MAX_STEPS", "50")
        assert RunConfig.from_file(path).training.max_steps == 12


class TestStemMapping:
    def test_resolution(self):
        mapping = StemMapping(classes={"Lead_Vox": "vocals", "bass": "bass"})
        assert mapping.resolve("lead_vox") == "vocals"
        assert mapping.resolve("bass_3") == "bass"
        assert mapping.resolve("accompaniment") is None
        with pytest.raises(ConfigurationError, match="kazoo"):
            mapping.resolve("kazoo")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            StemMapping.from_file(tmp_path / "none.toml")
