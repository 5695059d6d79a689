import numpy as np
import pytest
import torch
from torch.autograd import gradcheck
from torch.func import functional_call

from app.core.config import ConditioningMode, EncoderConfig, LossConfig, StftConfig, UNetConfig
from app.core.exceptions import (
    CheckpointError,
    ConditioningError,
    ConfigurationError,
    ShapeMismatchError,
)
from app.domain.entities.audio import ComplexMask
from app.domain.entities.conditioning import ConditioningVector, VectorMode
from app.services.dsp.spectral import compress_tensor, stft_tensor
from app.services.loss.objective import composite_loss, mag_mae_tensor, sdr_loss_tensor
from app.services.model import (
    ConditionedUNet,
    FewShotEncoder,
    FilmGenerator,
    FilmParams,
    ModelCheckpoint,
    PosNegFusion,
    bounded_complex_mask,
    film,
    identity_params,
)
from app.services.model.checkpoint import CHECKPOINT_MAGIC

GRAD_TOL = dict(eps=1e-6, atol=1e-6, rtol=1e-4)

MINI_UNET = UNetConfig(depth=2, base_channels=2, in_freq=16, in_frames=16)
MINI_ENCODER = EncoderConfig(blocks=1, filters=4, input_bands=8, embedding_dim=16)


def randomize_film(generator: FilmGenerator) -> None:
    with torch.no_grad():
        for head in (generator.gamma_head, generator.beta_head):
            head.weight.normal_(0.0, 0.5)
            head.bias.normal_(0.0, 0.5)


class TestFilm:
    def test_modulates_per_channel(self):
        features = torch.ones(2, 3, 4)
        params = FilmParams(gamma=torch.tensor([1.0, 2.0]), beta=torch.tensor([0.0, -1.0]))
        out = film(features, params)
        assert torch.all(out[0] == 1.0)
        assert torch.all(out[1] == 1.0)

    def test_identity_params(self):
        features = torch.randn(3, 4, 5)
        assert torch.equal(film(features, identity_params(3)), features)

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            film(torch.ones(3, 2, 2), identity_params(4))

    def test_fresh_generator_is_identity(self):
        generator = FilmGenerator(condition_dim=5, channels=3)
        params = generator(torch.randn(2, 5))
        assert torch.equal(params.gamma, torch.ones(2, 3))
        assert torch.equal(params.beta, torch.zeros(2, 3))

    def test_wrong_condition_dim(self):
        with pytest.raises(ConditioningError):
            FilmGenerator(condition_dim=5, channels=3)(torch.randn(1, 4))

    def test_generator_gradients(self):
        generator = FilmGenerator(condition_dim=4, channels=3).double()
        randomize_film(generator)
        z = torch.randn(2, 4, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda v: tuple(generator(v)), (z,), **GRAD_TOL)


class TestUNet:
    def test_output_shape(self):
        unet = ConditionedUNet(MINI_UNET)
        out = unet(torch.randn(2, 2, 16, 16), identity_params(MINI_UNET.bottleneck_channels))
        assert out.shape == (2, 2, 16, 16)

    def test_channel_layout(self):
        unet = ConditionedUNet(UNetConfig(depth=3, base_channels=4, in_freq=32, in_frames=32))
        assert [b.out_channels for b in unet.encoder] == [4, 8, 16]
        assert [b.in_channels for b in unet.decoder] == [16, 16, 8]
        assert [b.out_channels for b in unet.decoder] == [8, 4, 2]

    def test_wrong_input_shape(self):
        unet = ConditionedUNet(MINI_UNET)
        with pytest.raises(ShapeMismatchError):
            unet.encode(torch.randn(1, 2, 8, 16))

    def test_indivisible_input_rejected(self):
        with pytest.raises(ConfigurationError):
            UNetConfig(depth=3, in_freq=12, in_frames=16)

    def test_gradients_wrt_input_and_film(self):
        unet = ConditionedUNet(MINI_UNET).double().eval()
        features = torch.randn(1, 2, 16, 16, dtype=torch.float64, requires_grad=True)
        gamma = torch.randn(1, 4, dtype=torch.float64, requires_grad=True)
        beta = torch.randn(1, 4, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda x, g, b: unet(x, FilmParams(g, b)), (features, gamma, beta), **GRAD_TOL)

    def test_mask_magnitude_bounded(self):
        raw = torch.randn(2, 2, 8, 8) * 10
        magnitude = bounded_complex_mask(raw).abs()
        assert torch.all(magnitude > 0) and torch.all(magnitude < 1)

    def test_saturated_output_stays_below_one(self):
        raw = torch.randn(2, 2, 8, 8, generator=torch.Generator().manual_seed(3)) * 1000
        mask = bounded_complex_mask(raw)
        assert mask.abs().max().item() < 1.0
        values = mask[0].numpy().astype(np.complex128)
        assert np.all(np.abs(values) < 1.0)
        assert ComplexMask.from_complex(values).shape == (8, 8)

    def test_zero_output_gives_half_real_mask(self):
        mask = bounded_complex_mask(torch.zeros(1, 2, 3, 3))
        assert torch.allclose(mask.real, torch.full((1, 3, 3), 0.5))
        assert torch.all(mask.imag == 0)


class TestEncoder:
    def test_embedding_dim_for_several_lengths(self, tiny_stft):
        encoder = FewShotEncoder(MINI_ENCODER, tiny_stft, 22050).eval()
        for samples in (64, 128, 1000):
            assert encoder(torch.randn(3, samples)).shape == (3, 16)

    def test_default_encoder_gives_512(self):
        encoder = FewShotEncoder(EncoderConfig(), StftConfig(), 22050).eval()
        with torch.no_grad():
            assert encoder(torch.randn(1, 11025)).shape == (1, 512)

    def test_too_few_frames(self, tiny_stft):
        encoder = FewShotEncoder(EncoderConfig(blocks=2, filters=8, input_bands=8, embedding_dim=16),
                                 tiny_stft, 22050)
        with pytest.raises(ConditioningError):
            encoder(torch.randn(1, 8))

    def test_mel_basis_not_saved(self, tiny_stft):
        encoder = FewShotEncoder(MINI_ENCODER, tiny_stft, 22050)
        assert "mel_basis" not in encoder.state_dict()

    def test_embedding_size_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            EncoderConfig(blocks=4, filters=64, input_bands=128, embedding_dim=256)

    def test_gradients(self, tiny_stft):
        encoder = FewShotEncoder(MINI_ENCODER, tiny_stft, 22050).double().eval()
        examples = torch.randn(2, 64, dtype=torch.float64, requires_grad=True)
        assert gradcheck(encoder, (examples,), **GRAD_TOL)

    def test_fusion_nonnegative(self):
        fusion = PosNegFusion(16)
        out = fusion(torch.randn(4, 16), torch.randn(4, 16))
        assert out.shape == (4, 16)
        assert torch.all(out >= 0)

    def test_fusion_dim_mismatch(self):
        with pytest.raises(ConditioningError):
            PosNegFusion(16)(torch.randn(1, 8), torch.randn(1, 16))


class TestLossGradients:
    def test_sdr_term(self):
        reference = torch.randn(2, 64, dtype=torch.float64)
        estimate = torch.randn(2, 64, dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda e: sdr_loss_tensor(e, reference)[0], (estimate,), **GRAD_TOL)

    def test_magnitude_term(self, tiny_stft):
        reference = compress_tensor(stft_tensor(torch.randn(2, 64, dtype=torch.float64), tiny_stft))

        def term(estimate):
            return mag_mae_tensor(compress_tensor(stft_tensor(estimate, tiny_stft)), reference)

        estimate = torch.randn(2, 64, dtype=torch.float64, requires_grad=True)
        assert gradcheck(term, (estimate,), **GRAD_TOL)


class TestSeparationNetwork:
    def test_forward_keeps_length(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.FEW_SHOT).network.eval()
        mixture = torch.randn(2, 200)
        z = torch.randn(2, 16)
        with torch.no_grad():
            out = network(mixture, z)
        assert out.shape == mixture.shape
        assert torch.all(torch.isfinite(out))

    def test_fresh_network_ignores_z(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.CLASS).network.eval()
        mixture = torch.randn(1, 128)
        with torch.no_grad():
            a = network(mixture, torch.tensor([[1.0, 0.0, 0.0]]))
            b = network(mixture, torch.tensor([[0.0, 0.0, 1.0]]))
        assert torch.equal(a, b)

    def test_spectrogram_smaller_than_input(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.CLASS).network
        with pytest.raises(ShapeMismatchError):
            network(torch.randn(1, 64), torch.zeros(1, 3))

    def test_gradient_reaches_every_part(self, make_checkpoint, tiny_config):
        network = make_checkpoint(ConditioningMode.FEW_SHOT_NEG).network.train()
        randomize_film(network.film_generator)
        positives = torch.randn(2, 2, 128)
        negatives = torch.randn(2, 2, 128)
        mixture = torch.randn(2, 128)
        target = torch.randn(2, 128)

        estimate = network(mixture, network.condition(positives, negatives))
        composite_loss(estimate, target, tiny_config.stft, LossConfig()).total.backward()

        for part in (network.example_encoder, network.fusion, network.film_generator, network.unet):
            grads = [p.grad for p in part.parameters() if p.requires_grad]
            assert any(g is not None and torch.any(g != 0) for g in grads), type(part).__name__

    def test_total_loss_gradients_wrt_parameters(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.CLASS).network.double().eval()
        randomize_film(network.film_generator)
        names = [
            "unet.encoder.0.0.weight",
            "unet.encoder.0.1.weight",
            "unet.encoder.0.1.bias",
            "unet.decoder.0.1.weight",
            "unet.decoder.0.1.bias",
            "unet.decoder.1.0.weight",
            "film_generator.gamma_head.weight",
        ]
        params = dict(network.named_parameters())
        values = tuple(params[name].detach().clone().requires_grad_(True) for name in names)
        mixture = torch.randn(2, 128, dtype=torch.float64)
        target = torch.randn(2, 128, dtype=torch.float64)
        z = torch.eye(3, dtype=torch.float64)[:2]

        def total(*weights):
            estimate = functional_call(network, dict(zip(names, weights)), (mixture, z))
            return composite_loss(estimate, target, network.stft_config, LossConfig()).total

        assert gradcheck(total, values, **GRAD_TOL)

    def test_class_network_has_no_encoder(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.CLASS).network
        assert network.example_encoder is None
        assert network.condition_dim == 3
        with pytest.raises(ConditioningError):
            network.embed(torch.randn(1, 2, 128))

    def test_neg_mode_requires_negatives(self, make_checkpoint):
        network = make_checkpoint(ConditioningMode.FEW_SHOT_NEG).network
        with pytest.raises(ConditioningError):
            network.condition(torch.randn(1, 2, 128))


class TestCheckpoint:
    def test_seeded_creation(self, tiny_config):
        a = ModelCheckpoint.create(tiny_config).network.state_dict()
        b = ModelCheckpoint.create(tiny_config).network.state_dict()
        assert all(torch.equal(a[k], b[k]) for k in a)

    @pytest.mark.parametrize("mode", list(ConditioningMode))
    def test_round_trip(self, tmp_path, make_checkpoint, mode):
        checkpoint = make_checkpoint(mode)
        randomize_film(checkpoint.network.film_generator)
        checkpoint.training.step = 17
        path = tmp_path / "model.ckpt"
        checkpoint.save(path)

        loaded = ModelCheckpoint.load(path)
        assert loaded.mode == mode
        assert loaded.vocabulary == checkpoint.vocabulary
        assert loaded.training.step == 17
        assert loaded.chunk_samples == checkpoint.chunk_samples
        original = checkpoint.network.state_dict()
        restored = loaded.network.state_dict()
        assert original.keys() == restored.keys()
        for name, tensor in original.items():
            assert torch.equal(tensor, restored[name]), name

    def test_saves_are_byte_identical(self, tmp_path, make_checkpoint):
        checkpoint = make_checkpoint(ConditioningMode.FEW_SHOT)
        checkpoint.save(tmp_path / "a.ckpt")
        checkpoint.save(tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_optimizer_state_round_trip(self, tmp_path, make_checkpoint):
        checkpoint = make_checkpoint(ConditioningMode.FEW_SHOT)
        network = checkpoint.network
        optimizer = torch.optim.Adam(network.parameters(), lr=1e-3)
        estimate = network(torch.randn(2, 128), network.condition(torch.randn(2, 2, 128)))
        estimate.pow(2).mean().backward()
        optimizer.step()
        checkpoint.optimizer_state = optimizer.state_dict()
        checkpoint.save(tmp_path / "opt.ckpt")

        loaded = ModelCheckpoint.load(tmp_path / "opt.ckpt")
        resumed = torch.optim.Adam(loaded.network.parameters(), lr=1e-3)
        resumed.load_state_dict(loaded.optimizer_state)
        for index, state in optimizer.state_dict()["state"].items():
            restored = resumed.state_dict()["state"][index]
            assert float(restored["step"]) == float(state["step"])
            assert torch.equal(restored["exp_avg"], state["exp_avg"])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + bytes(32))
        with pytest.raises(CheckpointError, match="magic"):
            ModelCheckpoint.load(path)

    def test_truncated_file(self, tmp_path, make_checkpoint):
        path = tmp_path / "model.ckpt"
        make_checkpoint(ConditioningMode.CLASS).save(path)
        data = path.read_bytes()
        assert data.startswith(CHECKPOINT_MAGIC)
        path.write_bytes(data[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            ModelCheckpoint.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            ModelCheckpoint.load(tmp_path / "absent.ckpt")

    def test_check_vector(self, make_checkpoint):
        checkpoint = make_checkpoint(ConditioningMode.FEW_SHOT)
        with pytest.raises(ConditioningError):
            checkpoint.check_vector(ConditioningVector(values=np.ones(3), mode=VectorMode.CLASS))
        with pytest.raises(ConditioningError):
            checkpoint.check_vector(ConditioningVector(values=np.ones(8), mode=VectorMode.FEW_SHOT))
        checkpoint.check_vector(ConditioningVector(values=np.ones(16), mode=VectorMode.FEW_SHOT))
