import numpy as np
import pytest
import torch

from coshand.checkpoint import params_hash
from coshand.denoiser import DenoiserConfig, UNetDenoiser, init_denoiser
from coshand.errors import IncompatibleCheckpointError, ShapeMismatchError

SMALL = DenoiserConfig(latent_channels=4, base_width=16, channel_mults=(1, 2, 2), depth=3)


def batch(cfg, b=2, h=16, w=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(b, cfg.in_channels, h, w, generator=g)
    i = torch.tensor([3, 700][:b])
    emb = torch.randn(b, cfg.semantic_dim, generator=g)
    return z, i, emb


class TestConfig:
    def test_input_channels_are_4c(self):
        assert DenoiserConfig(latent_channels=4).in_channels == 16
        assert DenoiserConfig(latent_channels=3).in_channels == 12

    def test_default_param_count_in_range(self):
        net = init_denoiser(DenoiserConfig(), seed=0)
        assert 1_000_000 <= net.param_count() <= 30_000_000

    def test_input_layer_matches_config(self):
        net = init_denoiser(DenoiserConfig(), seed=0)
        assert net.stem.in_channels == 16

    def test_bad_attention_level_rejected(self):
        with pytest.raises(ValueError):
            DenoiserConfig(attention_levels=(5,))


class TestForward:
    def test_output_shape(self):
        net = init_denoiser(SMALL, seed=0)
        z, i, emb = batch(SMALL)
        out = net(z, i, emb)
        assert out.shape == (2, SMALL.out_channels, 16, 16)
        assert torch.isfinite(out).all()

    def test_time_conditioning_is_live(self):
        net = init_denoiser(SMALL, seed=0).eval()
        z, _, emb = batch(SMALL, b=1)
        with torch.no_grad():
            a = net(z, torch.tensor([2]), emb)
            b = net(z, torch.tensor([900]), emb)
        assert (a - b).abs().max() > 0

    def test_embedding_perturbation_changes_output(self):
        net = init_denoiser(SMALL, seed=0).eval()
        z, i, emb = batch(SMALL, b=1)
        with torch.no_grad():
            a = net(z, torch.tensor([5]), emb)
            b = net(z, torch.tensor([5]), emb + 1.0)
        assert (a - b).abs().max() > 0

    def test_no_cross_attention_ignores_embedding(self):
        cfg = DenoiserConfig(latent_channels=4, base_width=16, channel_mults=(1, 2, 2), cross_attention=False)
        net = init_denoiser(cfg, seed=0).eval()
        z, i, emb = batch(cfg, b=1)
        with torch.no_grad():
            a = net(z, torch.tensor([5]), emb)
            b = net(z, torch.tensor([5]), emb + 3.0)
        assert torch.equal(a, b)

    def test_null_embedding_accepted(self):
        net = init_denoiser(SMALL, seed=0).eval()
        z, i, _ = batch(SMALL)
        with torch.no_grad():
            out = net(z, i, torch.zeros(2, SMALL.semantic_dim))
        assert torch.isfinite(out).all()

    def test_shape_validation(self):
        net = init_denoiser(SMALL, seed=0)
        with pytest.raises(ShapeMismatchError):
            net(torch.zeros(1, 7, 16, 16), torch.tensor([1]), None)
        with pytest.raises(ShapeMismatchError):
            net(torch.zeros(1, SMALL.in_channels, 18, 18), torch.tensor([1]), None)

    def test_inference_deterministic(self):
        net = init_denoiser(SMALL, seed=0).eval()
        z, i, emb = batch(SMALL)
        with torch.no_grad():
            assert torch.equal(net(z, i, emb), net(z, i, emb))


class TestInit:
    def test_same_seed_same_hash(self):
        a = init_denoiser(SMALL, seed=11)
        b = init_denoiser(SMALL, seed=11)
        assert params_hash(a) == params_hash(b)
        c = init_denoiser(SMALL, seed=12)
        assert params_hash(a) != params_hash(c)

    def test_from_checkpoint_round_trip(self):
        a = init_denoiser(SMALL, seed=1)
        b = init_denoiser(SMALL, init_mode="from_checkpoint", seed=2, state_dict=a.state_dict())
        assert params_hash(a) == params_hash(b)

    def test_incompatible_state_rejected(self):
        a = init_denoiser(SMALL, seed=1)
        other = DenoiserConfig(latent_channels=4, base_width=24, channel_mults=(1, 2, 2))
        with pytest.raises(IncompatibleCheckpointError):
            init_denoiser(other, init_mode="from_checkpoint", state_dict=a.state_dict())

    def test_every_parameter_gets_gradient(self):
        net = init_denoiser(SMALL, seed=0)
        z, i, emb = batch(SMALL)
        loss = (net(z, i, emb) ** 2).mean()
        loss.backward()
        dead = [n for n, p in net.named_parameters() if p.grad is None or (p.grad == 0).all()]
        assert dead == []
