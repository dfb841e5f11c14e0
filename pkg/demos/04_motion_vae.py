"""Train a small per-level motion VAE and inspect the loss pieces.

Uses a reduced budget so it finishes in about a minute; the full-scale
per-level comparison lives in the acceptance suite.
"""

import torch

from hiermotion.motionrep import make_dataset
from hiermotion.motionvae import (
    MotionVAE,
    Posterior,
    VAEConfig,
    batch_frames,
    gaussian_kl,
    reconstruction_mse,
    train_vae,
)

dataset = make_dataset(size=96, seed=11, frame_range=(30, 60))

print("closed forms first:")
print("  KL(standard normal) =", gaussian_kl(Posterior(torch.zeros(1, 2, 8),
                                                       torch.ones(1, 2, 8))).item())
print("  KL(mu=1, sigma=1) per dim =",
      gaussian_kl(Posterior(torch.ones(1, 2, 8), torch.ones(1, 2, 8))).item())

for level in ("motion", "specific"):
    cfg = VAEConfig.for_level(level, d_model=64, ff_dim=128, num_layers=4)
    model, log = train_vae(dataset.train, dataset.normalizer, cfg, epochs=25,
                           batch_size=32, seed=1)
    test_mse = reconstruction_mse(model, dataset.test, dataset.normalizer)
    print(f"\n{level} level (C={cfg.token_count}): "
          f"epoch-1 mse {log.epochs[0]['mse']:.3f} -> final {log.final['mse']:.3f}, "
          f"test {test_mse:.3f}")

    frames, lengths = batch_frames(dataset.test, dataset.normalizer, [0])
    post, z = model.encode(frames, lengths, sample=False)
    print(f"  latent grid {tuple(z.shape[1:])}, sigma range "
          f"[{post.sigma.min():.3f}, {post.sigma.max():.3f}]")
    recon = model.decode(z, lengths)
    print(f"  decoded back to {tuple(recon.shape[1:])}")
