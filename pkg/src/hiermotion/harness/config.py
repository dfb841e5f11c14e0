"""Experiment configuration: one document that pins every training knob and
seed, so the artifact set a run produces is a pure function of it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from ..diffusion import SamplerConfig


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    # dataset
    dataset_size: int = 600
    dataset_seed: int = 7
    frame_min: int = 30
    frame_max: int = 80
    train_fraction: float = 0.85
    fps: float = 20.0

    # text encoder / graph reasoning
    encoder: str = "hashed"
    node_dim: int = 64

    # per-level VAEs
    latent_dim: int = 32
    vae_d_model: int = 80
    vae_layers: int = 4
    vae_heads: int = 2
    vae_ff: int = 160
    vae_kl_weight: float = 1e-4
    vae_epochs: int = 120
    vae_batch: int = 64
    vae_lr: float = 2e-3

    # diffusion stack
    train_steps: int = 1000
    beta_start: float = 8.5e-4
    beta_end: float = 0.012
    denoiser_d_model: int = 128
    denoiser_layers: int = 4
    denoiser_heads: int = 2
    denoiser_ff: int = 256
    reason_layers: int = 2
    cond_dropout: float = 0.10
    cond_noise: float = 0.0
    diffusion_epochs: int = 150
    diffusion_batch: int = 32
    diffusion_lr: float = 1e-3

    # evaluator
    eval_dim: int = 32
    eval_epochs: int = 40
    eval_batch: int = 32
    eval_lr: float = 1e-3

    # sampler defaults
    sampler_steps: dict = field(default_factory=lambda: {"motion": 15, "action": 15,
                                                         "specific": 20})
    guidance: float = 7.5
    eta: float = 0.0

    # global
    seed: int = 0

    @property
    def frame_range(self) -> tuple[int, int]:
        return (self.frame_min, self.frame_max)

    def sampler(self, seed: int | None = None, **overrides) -> SamplerConfig:
        cfg = SamplerConfig(steps=dict(self.sampler_steps), guidance=self.guidance,
                            eta=self.eta, seed=self.seed if seed is None else seed)
        if overrides:
            merged = cfg.to_dict()
            for key, value in overrides.items():
                if value is None:
                    continue
                if key == "steps":
                    merged["steps"].update(value)
                else:
                    merged[key] = value
            cfg = SamplerConfig.from_dict(merged)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig()
        known = set(cfg.to_dict())
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            setattr(cfg, key, value)
        if cfg.frame_min < 1 or cfg.frame_max < cfg.frame_min:
            raise ConfigError("invalid frame range")
        return cfg

    @staticmethod
    def load(path: str | Path) -> "ExperimentConfig":
        try:
            return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
