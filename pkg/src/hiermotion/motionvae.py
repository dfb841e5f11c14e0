"""Per-level transformer motion VAE.

Each level encodes a motion sequence into C learnable-query latent tokens and
decodes back to frames from positional motion queries; token counts grow from
the motion level (C=2) through actions (C=4) to specifics (C=8) so capacity
follows the coarse-to-fine hierarchy.  Loss is reconstruction MSE plus a
closed-form diagonal-Gaussian KL against the standard normal, weighted by a
small trade-off factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import torch
from torch import Tensor, nn

from .motionrep import DEFAULT_LAYOUT, Normalizer, ToySample

LEVELS = ("motion", "action", "specific")
LEVEL_TOKEN_COUNTS = {"motion": 2, "action": 4, "specific": 8}


class Diverged(Exception):
    pass


class LayoutMismatch(Exception):
    pass


@dataclass
class VAEConfig:
    level: str
    token_count: int
    feature_width: int = 68
    latent_dim: int = 32
    d_model: int = 128
    num_layers: int = 4
    num_heads: int = 2
    ff_dim: int = 256
    max_frames: int = 160
    kl_weight: float = 1e-4
    # training-loss emphasis on the root channels (trajectory fidelity) and
    # the binary contacts; evaluation MSE stays unweighted
    root_weight: float = 6.0
    contact_weight: float = 2.0

    @staticmethod
    def for_level(level: str, **overrides) -> "VAEConfig":
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}")
        cfg = VAEConfig(level=level, token_count=LEVEL_TOKEN_COUNTS[level])
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Posterior:
    mu: Tensor     # (B, C, D')
    sigma: Tensor  # (B, C, D'), positive


@dataclass
class LatentSeq:
    tokens: np.ndarray  # (C, D')
    level: str

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if not np.isfinite(self.tokens).all():
            raise ValueError("latent contains non-finite values")


def sinusoidal_table(length: int, dim: int) -> Tensor:
    if dim % 2 != 0:
        raise ValueError("positional dim must be even")
    pos = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32)
                    * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div)
    return table


class SkipTransformer(nn.Module):
    """Encoder stack with U-Net style skips between mirrored layers."""

    def __init__(self, d_model: int, num_layers: int, num_heads: int, ff_dim: int):
        super().__init__()
        self.layers = nn.ModuleList(
            nn.TransformerEncoderLayer(d_model, num_heads, ff_dim, dropout=0.0,
                                       batch_first=True, activation="gelu",
                                       norm_first=True)
            for _ in range(num_layers))
        half = num_layers // 2
        self.skip_proj = nn.ModuleList(nn.Linear(2 * d_model, d_model) for _ in range(half))

    def forward(self, x: Tensor, key_padding_mask: Optional[Tensor] = None) -> Tensor:
        n = len(self.layers)
        half = n // 2
        saved: list[Tensor] = []
        for idx, layer in enumerate(self.layers):
            if idx >= n - half:
                mirror = n - 1 - idx
                x = self.skip_proj[mirror](torch.cat([x, saved[mirror]], dim=-1))
            x = layer(x, src_key_padding_mask=key_padding_mask)
            if idx < half:
                saved.append(x)
        return x


def _padding_mask(lengths: Tensor, max_len: int, extra_tokens: int) -> Tensor:
    """True where padded; the first ``extra_tokens`` positions are never padded."""
    b = lengths.shape[0]
    frame_mask = torch.arange(max_len, device=lengths.device).unsqueeze(0) >= lengths.unsqueeze(1)
    head = torch.zeros(b, extra_tokens, dtype=torch.bool, device=lengths.device)
    return torch.cat([head, frame_mask], dim=1)


class MotionVAE(nn.Module):
    def __init__(self, config: VAEConfig):
        super().__init__()
        self.config = config
        c, dm = config.token_count, config.d_model
        self.in_proj = nn.Linear(config.feature_width, dm)
        self.dist_tokens = nn.Parameter(torch.randn(2 * c, dm) * 0.02)
        self.encoder = SkipTransformer(dm, config.num_layers, config.num_heads, config.ff_dim)
        self.mu_head = nn.Linear(dm, config.latent_dim)
        self.logvar_head = nn.Linear(dm, config.latent_dim)
        self.z_proj = nn.Linear(config.latent_dim, dm)
        self.query_base = nn.Parameter(torch.randn(1, dm) * 0.02)
        self.decoder = SkipTransformer(dm, config.num_layers, config.num_heads, config.ff_dim)
        self.out_proj = nn.Linear(dm, config.feature_width)
        self.register_buffer("pos_table", sinusoidal_table(config.max_frames, dm),
                             persistent=False)
        weights = torch.ones(config.feature_width)
        if config.feature_width == DEFAULT_LAYOUT.width:
            weights[:4] = config.root_weight
            weights[DEFAULT_LAYOUT.foot_contacts] = config.contact_weight
        self.register_buffer("loss_weights", weights / weights.mean(),
                             persistent=False)

    def posterior(self, frames: Tensor, lengths: Tensor) -> Posterior:
        """frames: (B, L, F) normalized; lengths: (B,) valid frame counts."""
        if frames.shape[-1] != self.config.feature_width:
            raise LayoutMismatch(f"feature width {frames.shape[-1]} != "
                                 f"{self.config.feature_width}")
        b, L, _ = frames.shape
        if L > self.config.max_frames:
            raise LayoutMismatch(f"{L} frames exceeds positional table "
                                 f"({self.config.max_frames})")
        c = self.config.token_count
        x = self.in_proj(frames) + self.pos_table[:L].unsqueeze(0)
        tokens = torch.cat([self.dist_tokens.unsqueeze(0).expand(b, -1, -1), x], dim=1)
        mask = _padding_mask(lengths, L, 2 * c)
        out = self.encoder(tokens, key_padding_mask=mask)
        mu = self.mu_head(out[:, :c])
        logvar = self.logvar_head(out[:, c:2 * c]).clamp(-30.0, 20.0)
        return Posterior(mu=mu, sigma=torch.exp(0.5 * logvar))

    def encode(self, frames: Tensor, lengths: Tensor,
               generator: Optional[torch.Generator] = None,
               sample: bool = True) -> tuple[Posterior, Tensor]:
        post = self.posterior(frames, lengths)
        if not sample:
            return post, post.mu
        eps = torch.randn(post.mu.shape, generator=generator, dtype=post.mu.dtype,
                          device=post.mu.device)
        return post, post.mu + post.sigma * eps

    def decode(self, z: Tensor, lengths: Tensor) -> Tensor:
        """z: (B, C, D') -> frames (B, max(lengths), F), zero-padded."""
        b = z.shape[0]
        L = int(lengths.max().item())
        if L < 1:
            raise ValueError("decode needs at least one frame")
        if L > self.config.max_frames:
            raise LayoutMismatch(f"{L} frames exceeds positional table "
                                 f"({self.config.max_frames})")
        queries = (self.query_base + self.pos_table[:L]).unsqueeze(0).expand(b, -1, -1)
        tokens = torch.cat([self.z_proj(z), queries], dim=1)
        mask = _padding_mask(lengths, L, self.config.token_count)
        out = self.decoder(tokens, key_padding_mask=mask)
        frames = self.out_proj(out[:, self.config.token_count:])
        valid = ~mask[:, self.config.token_count:]
        return frames * valid.unsqueeze(-1)

    def loss(self, frames: Tensor, lengths: Tensor,
             generator: Optional[torch.Generator] = None) -> tuple[Tensor, Tensor, Tensor]:
        """(total, mse, kl): mse over valid frame elements, kl per latent dim,
        total = mse + kl_weight * kl."""
        post, z = self.encode(frames, lengths, generator=generator)
        recon = self.decode(z, lengths)
        L = frames.shape[1]
        valid = (torch.arange(L, device=frames.device).unsqueeze(0)
                 < lengths.unsqueeze(1)).unsqueeze(-1)
        se = (recon - frames).pow(2) * self.loss_weights * valid
        mse = se.sum() / (valid.sum() * frames.shape[-1])
        kl = gaussian_kl(post)
        return mse + self.config.kl_weight * kl, mse, kl


def gaussian_kl(post: Posterior) -> Tensor:
    """Mean per-dimension KL(q || N(0, I)), closed form; always >= 0."""
    var = post.sigma.pow(2)
    return (0.5 * (post.mu.pow(2) + var - 1.0 - torch.log(var))).mean()


# ---------------------------------------------------------------------------
# Training

def batch_frames(samples: list[ToySample], normalizer: Normalizer,
                 indices: list[int]) -> tuple[Tensor, Tensor]:
    """Stack normalized frames of the chosen samples, zero-padded."""
    chosen = [samples[i] for i in indices]
    lengths = torch.tensor([s.motion.length for s in chosen], dtype=torch.long)
    L = int(lengths.max().item())
    width = chosen[0].motion.layout.width
    out = torch.zeros(len(chosen), L, width)
    for k, s in enumerate(chosen):
        arr = normalizer.normalize(s.motion.frames)
        out[k, :s.motion.length] = torch.as_tensor(arr, dtype=torch.float32)
    return out, lengths


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)

    def record(self, **kv):
        self.epochs.append(kv)

    @property
    def final(self) -> dict:
        return self.epochs[-1] if self.epochs else {}


def train_vae(samples: list[ToySample], normalizer: Normalizer, config: VAEConfig,
              epochs: int = 150, batch_size: int = 32, lr: float = 2e-3,
              seed: int = 0, verbose: bool = False) -> tuple[MotionVAE, TrainLog]:
    if not samples:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    model = MotionVAE(config)
    opt = torch.optim.AdamW(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs,
                                                       eta_min=lr * 0.05)
    gen = torch.Generator().manual_seed(seed + 1)
    shuffler = np.random.default_rng(seed + 2)
    log = TrainLog()
    n = len(samples)
    for epoch in range(epochs):
        order = shuffler.permutation(n)
        tot = ms = kl = 0.0
        batches = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size].tolist()
            frames, lengths = batch_frames(samples, normalizer, idx)
            loss, mse, klterm = model.loss(frames, lengths, generator=gen)
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot += loss.item()
            ms += mse.item()
            kl += klterm.item()
            batches += 1
        sched.step()
        log.record(epoch=epoch, total=tot / batches, mse=ms / batches, kl=kl / batches)
        if verbose and (epoch % 20 == 0 or epoch == epochs - 1):
            e = log.final
            print(f"[vae/{config.level}] epoch {epoch:4d} "
                  f"total {e['total']:.5f} mse {e['mse']:.5f} kl {e['kl']:.4f}")
    return model, log


@torch.no_grad()
def reconstruction_mse(model: MotionVAE, samples: list[ToySample],
                       normalizer: Normalizer, batch_size: int = 32) -> float:
    """Mean-posterior reconstruction MSE on normalized frames."""
    model.eval()
    total, count = 0.0, 0
    for start in range(0, len(samples), batch_size):
        idx = list(range(start, min(start + batch_size, len(samples))))
        frames, lengths = batch_frames(samples, normalizer, idx)
        _, z = model.encode(frames, lengths, sample=False)
        recon = model.decode(z, lengths)
        L = frames.shape[1]
        valid = (torch.arange(L).unsqueeze(0) < lengths.unsqueeze(1)).unsqueeze(-1)
        total += ((recon - frames).pow(2) * valid).sum().item()
        count += int(valid.sum().item()) * frames.shape[-1]
    return total / count
