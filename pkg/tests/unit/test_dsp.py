import math

import numpy as np
import pytest
import soundfile as sf

from app.core.config import StftConfig, WavSubtype
from app.core.exceptions import AudioIOError, ConfigurationError, ShapeMismatchError, ValidationError
from app.domain.entities.audio import AudioClip, ComplexMask
from app.services.dsp import (
    apply_mask,
    chunk,
    compress,
    decompress,
    istft,
    overlap_add,
    read_wav,
    read_wav_channels,
    resample,
    stft,
    write_wav,
)


@pytest.fixture
def noise_clip() -> AudioClip:
    rng = np.random.default_rng(7)
    return AudioClip(samples=rng.uniform(-0.8, 0.8, 5000), sample_rate=22050)


class TestStft:
    def test_round_trip_default_config(self, noise_clip):
        spec = stft(noise_clip, StftConfig())
        restored = istft(spec)
        assert restored.num_samples == noise_clip.num_samples
        assert np.max(np.abs(restored.samples - noise_clip.samples)) < 1e-6

    def test_round_trip_small_config(self, noise_clip, tiny_stft):
        restored = istft(stft(noise_clip, tiny_stft))
        assert np.max(np.abs(restored.samples - noise_clip.samples)) < 1e-6

    def test_frame_count_is_floor_len_over_hop_plus_one(self, noise_clip):
        cfg = StftConfig()
        spec = stft(noise_clip, cfg)
        assert spec.shape == (513, 5000 // 256 + 1)
        assert cfg.frame_count(5000) == spec.shape[1]

    def test_short_signal_is_analysed(self, tiny_stft):
        clip = AudioClip(samples=np.ones(5), sample_rate=22050)
        assert stft(clip, tiny_stft).shape[0] == tiny_stft.freq_bins

    def test_empty_signal_rejected(self, tiny_stft):
        with pytest.raises(ValidationError):
            stft(AudioClip(samples=np.zeros(0), sample_rate=22050), tiny_stft)

    def test_non_cola_hop_rejected(self):
        with pytest.raises(ConfigurationError):
            StftConfig(fft_size=32, hop=24)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ConfigurationError):
            StftConfig(fft_size=1000, hop=250)


class TestCompression:
    def test_round_trip(self, noise_clip):
        spec = stft(noise_clip, StftConfig())
        restored = decompress(compress(spec))
        assert np.max(np.abs(restored.data - spec.data)) < 1e-9

    def test_magnitude_is_log1p_and_phase_kept(self, noise_clip, tiny_stft):
        spec = stft(noise_clip, tiny_stft)
        squashed = compress(spec)
        np.testing.assert_allclose(np.abs(squashed.data), np.log1p(np.abs(spec.data)), atol=1e-12)
        nonzero = np.abs(spec.data) > 1e-9
        np.testing.assert_allclose(
            np.angle(squashed.data[nonzero]), np.angle(spec.data[nonzero]), atol=1e-9
        )

    def test_zero_bins_stay_zero(self, tiny_stft):
        spec = stft(AudioClip.silence(256, 22050), tiny_stft)
        assert np.all(compress(spec).data == 0)


class TestMask:
    def test_unit_mask_is_identity(self, noise_clip, tiny_stft):
        spec = stft(noise_clip, tiny_stft)
        unit = ComplexMask.from_complex(np.ones(spec.shape))
        assert np.array_equal(apply_mask(spec, unit).data, spec.data)

    def test_shape_mismatch(self, noise_clip, tiny_stft):
        spec = stft(noise_clip, tiny_stft)
        with pytest.raises(ShapeMismatchError):
            apply_mask(spec, ComplexMask.from_complex(np.ones((spec.shape[0], 3))))

    def test_mask_above_unit_magnitude_rejected(self):
        with pytest.raises(ValidationError):
            ComplexMask.from_complex(np.full((3, 3), 1.5))


class TestChunking:
    @pytest.mark.parametrize("overlap", [0.0, 0.25, 0.5, 0.75])
    def test_overlap_add_reconstructs(self, noise_clip, overlap):
        pieces = chunk(noise_clip, 1024, overlap)
        restored = overlap_add(pieces, noise_clip.num_samples)
        assert np.max(np.abs(restored.samples - noise_clip.samples)) < 1e-9

    def test_every_sample_is_covered_and_last_chunk_padded(self, noise_clip):
        pieces = chunk(noise_clip, 1024, 0.5)
        offsets = [offset for offset, _ in pieces]
        assert offsets[0] == 0
        assert all(b - a == 512 for a, b in zip(offsets, offsets[1:]))
        assert offsets[-1] + 1024 >= noise_clip.num_samples
        assert all(piece.num_samples == 1024 for _, piece in pieces)

    def test_short_clip_gives_one_padded_chunk(self):
        clip = AudioClip(samples=np.arange(10, dtype=float), sample_rate=100)
        pieces = chunk(clip, 64, 0.5)
        assert len(pieces) == 1
        np.testing.assert_allclose(overlap_add(pieces, 10).samples, clip.samples, atol=1e-12)

    def test_gap_is_reported(self):
        piece = AudioClip(samples=np.ones(4), sample_rate=100)
        with pytest.raises(ValidationError) as excinfo:
            overlap_add([(0, piece), (8, piece)], 12)
        assert excinfo.value.details["first_gap"] == 4

    @pytest.mark.parametrize("overlap", [-0.1, 1.0])
    def test_invalid_overlap(self, noise_clip, overlap):
        with pytest.raises(ValidationError):
            chunk(noise_clip, 128, overlap)


class TestResample:
    def test_output_length(self, noise_clip):
        out = resample(noise_clip, 44100)
        assert out.sample_rate == 44100
        assert out.num_samples == math.ceil(noise_clip.num_samples * 44100 / 22050)

    def test_same_rate_is_a_copy(self, noise_clip):
        out = resample(noise_clip, 22050)
        assert np.array_equal(out.samples, noise_clip.samples)

    def test_tone_keeps_its_frequency(self, make_tone):
        clip = AudioClip(samples=make_tone(440.0, 44100, sample_rate=44100), sample_rate=44100)
        out = resample(clip, 22050)
        spectrum = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(out.num_samples, 1 / 22050)
        assert abs(freqs[np.argmax(spectrum)] - 440.0) < 2.0

    def test_empty_clip_rejected(self):
        with pytest.raises(ValidationError):
            resample(AudioClip(samples=np.zeros(0), sample_rate=22050), 44100)


class TestWavIO:
    def test_float_round_trip(self, tmp_path, noise_clip):
        path = tmp_path / "clip.wav"
        write_wav(path, noise_clip, WavSubtype.FLOAT)
        restored = read_wav(path)
        assert restored.sample_rate == noise_clip.sample_rate
        np.testing.assert_allclose(restored.samples, noise_clip.samples, atol=1e-7)

    def test_pcm16_is_clipped(self, tmp_path):
        clip = AudioClip(samples=np.array([2.0, -2.0, 0.5]), sample_rate=8000)
        path = tmp_path / "loud.wav"
        write_wav(path, clip, WavSubtype.PCM_16)
        restored = read_wav(path)
        assert restored.peak() <= 1.0
        assert restored.samples[2] == pytest.approx(0.5, abs=1e-4)

    def test_stereo_is_downmixed(self, tmp_path):
        frames = np.stack([np.full(100, 0.2), np.full(100, 0.6)], axis=1)
        path = tmp_path / "stereo.wav"
        sf.write(str(path), frames, 22050, subtype="FLOAT")
        clip, channels = read_wav_channels(path)
        assert channels == 2
        np.testing.assert_allclose(clip.samples, 0.4, atol=1e-7)

    def test_multichannel_write(self, tmp_path, noise_clip):
        path = tmp_path / "out.wav"
        write_wav(path, noise_clip, channels=2)
        assert sf.info(str(path)).channels == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioIOError):
            read_wav(tmp_path / "missing.wav")


class TestStftOracles:
    def test_silent_clip_gives_zero_spectrogram(self):
        spec = stft(AudioClip.silence(66150, 22050), StftConfig())
        assert spec.shape == (513, 259)
        assert not np.any(spec.data)

    def test_bin_centred_tone_concentrates_energy(self):
        cfg = StftConfig(fft_size=1024, hop=1024, window="boxcar")
        n = np.arange(1024 * 8)
        clip = AudioClip(samples=np.sin(2 * np.pi * 21 * n / 1024), sample_rate=22050)
        power = np.abs(stft(clip, cfg).data) ** 2
        interior = power[:, 2:-2]
        assert np.all(interior[21] / interior.sum(axis=0) > 0.99)
