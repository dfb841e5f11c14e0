import numpy as np
import pytest
import torch

from hiermotion.motionrep import make_dataset
from hiermotion.motionvae import (
    LEVEL_TOKEN_COUNTS,
    LatentSeq,
    MotionVAE,
    Posterior,
    VAEConfig,
    batch_frames,
    gaussian_kl,
    reconstruction_mse,
    train_vae,
)


def tiny_config(level="motion", **kw):
    defaults = dict(feature_width=68, latent_dim=8, d_model=32, num_layers=2,
                    num_heads=2, ff_dim=64, max_frames=80)
    defaults.update(kw)
    return VAEConfig.for_level(level, **defaults)


@pytest.fixture(scope="module")
def tiny_dataset():
    return make_dataset(24, seed=5, frame_range=(30, 50))


class TestClosedForms:
    def test_kl_zero_at_standard_normal(self):
        post = Posterior(mu=torch.zeros(2, 4, 8), sigma=torch.ones(2, 4, 8))
        assert gaussian_kl(post).item() == 0.0

    def test_kl_half_per_dim_at_unit_mean(self):
        post = Posterior(mu=torch.ones(1, 2, 16), sigma=torch.ones(1, 2, 16))
        assert gaussian_kl(post).item() == pytest.approx(0.5, abs=1e-7)

    def test_kl_nonnegative_random(self):
        gen = torch.Generator().manual_seed(0)
        for _ in range(50):
            mu = torch.randn(1, 3, 5, generator=gen)
            sigma = torch.rand(1, 3, 5, generator=gen) * 2 + 1e-3
            assert gaussian_kl(Posterior(mu, sigma)).item() >= 0.0

    def test_total_zero_at_perfect_reconstruction(self):
        # total = mse + lambda*kl with both parts zero
        post = Posterior(mu=torch.zeros(1, 2, 8), sigma=torch.ones(1, 2, 8))
        recon = torch.randn(1, 10, 68)
        mse = (recon - recon).pow(2).mean()
        total = mse + 1e-4 * gaussian_kl(post)
        assert total.item() == 0.0

    def test_constant_offset_mse(self):
        x = torch.randn(1, 12, 68)
        c = 0.37
        mse = ((x + c) - x).pow(2).mean()
        assert mse.item() == pytest.approx(c * c, rel=1e-5)


class TestShapes:
    def test_specific_level_token_grid(self, tiny_dataset):
        torch.manual_seed(0)
        cfg = tiny_config("specific")
        assert cfg.token_count == 8
        model = MotionVAE(cfg)
        frames, lengths = batch_frames(tiny_dataset.samples,
                                       tiny_dataset.normalizer, [0, 1])
        post, z = model.encode(frames, lengths)
        assert z.shape == (2, 8, cfg.latent_dim)
        assert post.mu.shape == (2, 8, cfg.latent_dim)

    def test_level_token_counts(self):
        assert LEVEL_TOKEN_COUNTS == {"motion": 2, "action": 4, "specific": 8}
        counts = [LEVEL_TOKEN_COUNTS[lv] for lv in ("motion", "action", "specific")]
        assert counts == sorted(counts)

    def test_decode_single_frame(self):
        torch.manual_seed(0)
        model = MotionVAE(tiny_config())
        z = torch.zeros(1, 2, 8)
        out = model.decode(z, torch.tensor([1]))
        assert out.shape == (1, 1, 68)
        assert torch.isfinite(out).all()

    def test_decode_zero_latent_finite(self):
        torch.manual_seed(1)
        model = MotionVAE(tiny_config())
        out = model.decode(torch.zeros(3, 2, 8), torch.tensor([5, 9, 7]))
        assert torch.isfinite(out).all()

    def test_sigma_positive(self, tiny_dataset):
        torch.manual_seed(2)
        model = MotionVAE(tiny_config())
        frames, lengths = batch_frames(tiny_dataset.samples,
                                       tiny_dataset.normalizer, list(range(6)))
        post = model.posterior(frames, lengths)
        assert (post.sigma > 0).all()

    def test_latentseq_validates_level(self):
        with pytest.raises(ValueError):
            LatentSeq(tokens=np.zeros((2, 8)), level="global")
        with pytest.raises(ValueError):
            LatentSeq(tokens=np.full((2, 8), np.nan), level="motion")


class TestSampling:
    def test_encode_deterministic_under_seed(self, tiny_dataset):
        torch.manual_seed(3)
        model = MotionVAE(tiny_config())
        frames, lengths = batch_frames(tiny_dataset.samples,
                                       tiny_dataset.normalizer, [0, 1, 2])
        _, z1 = model.encode(frames, lengths, generator=torch.Generator().manual_seed(7))
        _, z2 = model.encode(frames, lengths, generator=torch.Generator().manual_seed(7))
        assert torch.equal(z1, z2)

    def test_sigma_zero_hook_gives_mu(self, tiny_dataset):
        torch.manual_seed(4)
        model = MotionVAE(tiny_config())
        frames, lengths = batch_frames(tiny_dataset.samples,
                                       tiny_dataset.normalizer, [0])
        post, z = model.encode(frames, lengths, sample=False)
        assert torch.equal(z, post.mu)

    def test_reparameterized_mean_approaches_mu(self):
        # mean over many draws of mu + sigma*eps lands within 3 standard errors
        torch.manual_seed(5)
        mu = torch.randn(1, 2, 8)
        sigma = torch.rand(1, 2, 8) + 0.5
        gen = torch.Generator().manual_seed(11)
        n = 10_000
        draws = mu + sigma * torch.randn((n,) + tuple(mu.shape[1:]), generator=gen)
        se = sigma / np.sqrt(n)
        assert ((draws.mean(0) - mu[0]).abs() <= 3 * se[0]).float().mean() > 0.95


class TestTraining:
    def test_smoke_loss_decreases(self, tiny_dataset):
        model, log = train_vae(tiny_dataset.train, tiny_dataset.normalizer,
                               tiny_config(), epochs=12, batch_size=8, seed=0)
        assert log.epochs[-1]["total"] < log.epochs[0]["total"]

    def test_determinism_same_seed(self, tiny_dataset):
        _, log1 = train_vae(tiny_dataset.train, tiny_dataset.normalizer,
                            tiny_config(), epochs=3, batch_size=8, seed=9)
        _, log2 = train_vae(tiny_dataset.train, tiny_dataset.normalizer,
                            tiny_config(), epochs=3, batch_size=8, seed=9)
        assert abs(log1.final["total"] - log2.final["total"]) < 1e-6

    def test_zero_kl_weight_reconstructs_at_least_as_well(self, tiny_dataset):
        free, _ = train_vae(tiny_dataset.train, tiny_dataset.normalizer,
                            tiny_config(kl_weight=0.0), epochs=15, batch_size=8,
                            seed=1)
        reg, _ = train_vae(tiny_dataset.train, tiny_dataset.normalizer,
                           tiny_config(kl_weight=1e-4), epochs=15, batch_size=8,
                           seed=1)
        mse_free = reconstruction_mse(free, tiny_dataset.train, tiny_dataset.normalizer)
        mse_reg = reconstruction_mse(reg, tiny_dataset.train, tiny_dataset.normalizer)
        assert mse_free <= mse_reg * 1.05

    def test_diverged_raises(self, tiny_dataset):
        from hiermotion.motionvae import Diverged

        with pytest.raises(Diverged):
            train_vae(tiny_dataset.train, tiny_dataset.normalizer, tiny_config(),
                      epochs=40, batch_size=8, lr=1e6, seed=2)

    def test_empty_dataset_rejected(self, tiny_dataset):
        with pytest.raises(ValueError):
            train_vae([], tiny_dataset.normalizer, tiny_config())
