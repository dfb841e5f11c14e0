"""Experiment orchestration: dataset -> VAEs -> diffusion -> evaluator, plus a
loadable bundle that serves generation, refinement and evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .. import semgraph
from ..diffusion import (
    DiffusionConfig,
    GenerationResult,
    HierarchicalDiffusion,
    MissingCheckpoint,
    NoiseSchedule,
    SamplerConfig,
    default_length_for,
    sample_hierarchical_batch,
    schedule_linear,
    train_diffusion,
    prepare_samples,
    LEVELS,
)
from ..embed import Encoder, make_encoder
from ..evaluator import ContrastiveEvaluator, EvaluatorConfig, train_evaluator
from ..metrics import MetricReport, compute_report, mmodality
from ..motionrep import Normalizer, ToyDataset, ToySample, make_dataset
from ..motionvae import LEVEL_TOKEN_COUNTS, MotionVAE, VAEConfig, train_vae
from ..parser import parse_description
from ..semgraph import EditOp, SemanticGraph, apply_edits
from .checkpoint import Checkpoint, from_module, file_hash, load_checkpoint, save_checkpoint
from .config import ExperimentConfig

MANIFEST_NAME = "manifest.json"
CHECKPOINT_NAMES = {
    "vae_motion": "vae_motion.ckpt",
    "vae_action": "vae_action.ckpt",
    "vae_specific": "vae_specific.ckpt",
    "denoiser": "denoiser.ckpt",
    "evaluator": "evaluator.ckpt",
}


def build_dataset(config: ExperimentConfig) -> ToyDataset:
    return make_dataset(size=config.dataset_size, seed=config.dataset_seed,
                        frame_range=config.frame_range,
                        train_fraction=config.train_fraction)


def vae_config_for(config: ExperimentConfig, level: str) -> VAEConfig:
    return VAEConfig(
        level=level,
        token_count=LEVEL_TOKEN_COUNTS[level],
        latent_dim=config.latent_dim,
        d_model=config.vae_d_model,
        num_layers=config.vae_layers,
        num_heads=config.vae_heads,
        ff_dim=config.vae_ff,
        kl_weight=config.vae_kl_weight,
        max_frames=160,
    )


def diffusion_config_for(config: ExperimentConfig) -> DiffusionConfig:
    return DiffusionConfig(
        node_dim=config.node_dim,
        latent_dim=config.latent_dim,
        train_steps=config.train_steps,
        beta_start=config.beta_start,
        beta_end=config.beta_end,
        reason_layers=config.reason_layers,
        d_model=config.denoiser_d_model,
        num_layers=config.denoiser_layers,
        num_heads=config.denoiser_heads,
        ff_dim=config.denoiser_ff,
        cond_dropout=config.cond_dropout,
        cond_noise=config.cond_noise,
    )


def write_manifest(config: ExperimentConfig, dataset: ToyDataset, out_dir: Path) -> None:
    manifest = {"config": config.to_dict(), "dataset": dataset.manifest()}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def train_vaes(config: ExperimentConfig, dataset: ToyDataset, out_dir: Path,
               levels: Sequence[str] = LEVELS, verbose: bool = False
               ) -> dict[str, MotionVAE]:
    out_dir.mkdir(parents=True, exist_ok=True)
    vaes = {}
    for offset, level in enumerate(levels):
        vcfg = vae_config_for(config, level)
        model, log = train_vae(dataset.train, dataset.normalizer, vcfg,
                               epochs=config.vae_epochs, batch_size=config.vae_batch,
                               lr=config.vae_lr, seed=config.seed + 11 * (offset + 1),
                               verbose=verbose)
        ckpt = from_module(f"vae_{level}", vcfg.to_dict(), model,
                           extra={"final": log.final, "seed": config.seed + 11 * (offset + 1)})
        save_checkpoint(ckpt, out_dir / CHECKPOINT_NAMES[f"vae_{level}"])
        vaes[level] = model
    return vaes


def train_denoiser(config: ExperimentConfig, dataset: ToyDataset,
                   vaes: dict[str, MotionVAE], encoder: Encoder, out_dir: Path,
                   verbose: bool = False) -> tuple[HierarchicalDiffusion, NoiseSchedule]:
    dcfg = diffusion_config_for(config)
    prepared = prepare_samples(dataset.train, vaes, dataset.normalizer, encoder)
    model, schedule, log = train_diffusion(prepared, dcfg,
                                           epochs=config.diffusion_epochs,
                                           batch_size=config.diffusion_batch,
                                           lr=config.diffusion_lr,
                                           seed=config.seed + 101, verbose=verbose)
    ckpt = from_module("denoiser", dcfg.to_dict(), model,
                       extra={"final": log.final, "seed": config.seed + 101})
    save_checkpoint(ckpt, out_dir / CHECKPOINT_NAMES["denoiser"])
    return model, schedule


@torch.no_grad()
def vae_reconstruction_pairs(vaes: dict[str, MotionVAE], dataset: ToyDataset,
                             levels: Sequence[str] = ("specific", "action"),
                             batch_size: int = 64):
    """(reconstructed motion, text) pairs of the train split, used to make the
    evaluator's features robust to decoder artifacts."""
    from ..diffusion import _finalize_motion
    from ..motionvae import batch_frames

    pairs = []
    samples = dataset.train
    for level in levels:
        vae = vaes[level]
        vae.eval()
        for start in range(0, len(samples), batch_size):
            chosen = samples[start:start + batch_size]
            frames, lengths = batch_frames(samples, dataset.normalizer,
                                           list(range(start, start + len(chosen))))
            _, z = vae.encode(frames, lengths, sample=False)
            recon = vae.decode(z, lengths)
            for k, s in enumerate(chosen):
                raw = recon[k, : s.motion.length].numpy()
                motion = _finalize_motion(dataset.normalizer.denormalize(raw),
                                          s.motion.fps)
                pairs.append((motion, s.text))
    return pairs


def train_eval_model(config: ExperimentConfig, dataset: ToyDataset, out_dir: Path,
                     vaes: Optional[dict[str, MotionVAE]] = None,
                     verbose: bool = False) -> ContrastiveEvaluator:
    ecfg = EvaluatorConfig(feature_width=dataset.samples[0].motion.layout.width,
                           out_dim=config.eval_dim)
    extra = vae_reconstruction_pairs(vaes, dataset) if vaes else None
    model, log = train_evaluator(dataset.train, dataset.normalizer, ecfg,
                                 epochs=config.eval_epochs, batch_size=config.eval_batch,
                                 lr=config.eval_lr, seed=config.seed + 202,
                                 extra_pairs=extra, verbose=verbose)
    ckpt = from_module("evaluator", {"model": ecfg.to_dict(), "vocab": model.vocab},
                       model,
                       extra={"final": log.final,
                              "normalizer": dataset.normalizer.to_dict()})
    save_checkpoint(ckpt, out_dir / CHECKPOINT_NAMES["evaluator"])
    return model


def train_all(config: ExperimentConfig, out_dir: str | Path,
              verbose: bool = False) -> "Bundle":
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    dataset = build_dataset(config)
    write_manifest(config, dataset, out_dir)
    encoder = make_encoder(config.encoder, config.node_dim)
    if verbose:
        print(f"dataset: {len(dataset.samples)} samples "
              f"({len(dataset.train_indices)} train / {len(dataset.test_indices)} test)")
    vaes = train_vaes(config, dataset, out_dir, verbose=verbose)
    diffusion, schedule = train_denoiser(config, dataset, vaes, encoder, out_dir,
                                         verbose=verbose)
    evaluator = train_eval_model(config, dataset, out_dir, vaes=vaes,
                                 verbose=verbose)
    if verbose:
        print(f"training finished in {time.time() - t0:.1f}s -> {out_dir}")
    return Bundle(config=config, encoder=encoder, normalizer=dataset.normalizer,
                  vaes=vaes, diffusion=diffusion, schedule=schedule,
                  evaluator=evaluator, checkpoint_hashes=checkpoint_hashes(out_dir),
                  out_dir=out_dir)


def checkpoint_hashes(out_dir: Path) -> dict[str, str]:
    hashes = {}
    for key, name in CHECKPOINT_NAMES.items():
        path = out_dir / name
        if path.exists():
            hashes[key] = file_hash(path)
    return hashes


def load_vaes(out_dir: Path) -> dict[str, MotionVAE]:
    vaes = {}
    for level in LEVELS:
        path = out_dir / CHECKPOINT_NAMES[f"vae_{level}"]
        if not path.exists():
            raise MissingCheckpoint(f"missing VAE checkpoint {path}")
        ckpt = load_checkpoint(path, expected_kind=f"vae_{level}")
        model = MotionVAE(VAEConfig(**ckpt.config))
        model.load_state_dict(ckpt.state_dict())
        model.eval()
        vaes[level] = model
    return vaes


@dataclass
class Bundle:
    """Loaded model set: everything needed to parse, generate, refine, score."""

    config: ExperimentConfig
    encoder: Encoder
    normalizer: Normalizer
    vaes: dict[str, MotionVAE]
    diffusion: HierarchicalDiffusion
    schedule: NoiseSchedule
    evaluator: Optional[ContrastiveEvaluator]
    checkpoint_hashes: dict[str, str]
    out_dir: Optional[Path] = None

    @staticmethod
    def load(out_dir: str | Path) -> "Bundle":
        out_dir = Path(out_dir)
        manifest_path = out_dir / MANIFEST_NAME
        if not manifest_path.exists():
            raise MissingCheckpoint(f"no manifest at {manifest_path}")
        manifest = json.loads(manifest_path.read_text())
        config = ExperimentConfig.from_dict(manifest["config"])
        normalizer = Normalizer.from_dict(manifest["dataset"]["normalization"])
        encoder = make_encoder(config.encoder, config.node_dim)

        vaes = load_vaes(out_dir)

        dpath = out_dir / CHECKPOINT_NAMES["denoiser"]
        if not dpath.exists():
            raise MissingCheckpoint(f"missing denoiser checkpoint {dpath}")
        dck = load_checkpoint(dpath, expected_kind="denoiser")
        dcfg = DiffusionConfig.from_dict(dck.config)
        diffusion = HierarchicalDiffusion(dcfg)
        diffusion.load_state_dict(dck.state_dict())
        diffusion.eval()
        schedule = schedule_linear(dcfg.train_steps, dcfg.beta_start, dcfg.beta_end)

        evaluator = None
        epath = out_dir / CHECKPOINT_NAMES["evaluator"]
        if epath.exists():
            eck = load_checkpoint(epath, expected_kind="evaluator")
            ecfg = EvaluatorConfig(**eck.config["model"])
            evaluator = ContrastiveEvaluator(eck.config["vocab"],
                                             Normalizer.from_dict(eck.extra["normalizer"]),
                                             ecfg)
            evaluator.load_state_dict(eck.state_dict())
            evaluator.eval()

        return Bundle(config=config, encoder=encoder, normalizer=normalizer,
                      vaes=vaes, diffusion=diffusion, schedule=schedule,
                      evaluator=evaluator, checkpoint_hashes=checkpoint_hashes(out_dir),
                      out_dir=out_dir)

    def parse(self, text: str) -> SemanticGraph:
        return parse_description(text, on_no_verb="fallback")

    def generate_batch(self, graphs: Sequence[SemanticGraph], lengths: Sequence[int],
                       sampler: SamplerConfig) -> list[GenerationResult]:
        return sample_hierarchical_batch(self.diffusion, self.schedule, self.vaes,
                                         self.normalizer, self.encoder, graphs,
                                         lengths, sampler, fps=self.config.fps)

    def generate(self, graph: SemanticGraph, seed: int = 0,
                 length: Optional[int] = None,
                 sampler_overrides: Optional[dict] = None) -> GenerationResult:
        sampler = self.config.sampler(seed=seed, **(sampler_overrides or {}))
        L = length if length else default_length_for(
            graph, bounds=(self.config.frame_min, self.config.frame_max))
        return self.generate_batch([graph], [L], sampler)[0]

    def generate_from_text(self, text: str, seed: int = 0,
                           length: Optional[int] = None,
                           sampler_overrides: Optional[dict] = None) -> GenerationResult:
        return self.generate(self.parse(text), seed=seed, length=length,
                             sampler_overrides=sampler_overrides)

    def refine(self, graph: SemanticGraph, edits: Sequence[EditOp], seed: int = 0,
               length: Optional[int] = None,
               sampler_overrides: Optional[dict] = None) -> GenerationResult:
        edited = apply_edits(graph, edits)
        problems = semgraph.validate(edited)
        if problems:
            raise semgraph.InvalidEdit(
                "; ".join(f"{v.invariant}({v.subject})" for v in problems))
        return self.generate(edited, seed=seed, length=length,
                             sampler_overrides=sampler_overrides)


def evaluate_bundle(bundle: Bundle, dataset: ToyDataset, split: str = "test",
                    repeats: int = 20, seed: int = 0,
                    max_samples: Optional[int] = None,
                    mmodality_texts: int = 0,
                    mmodality_pairs: int = 10) -> MetricReport:
    """Generate for every prompt of the split at its true length and score."""
    if bundle.evaluator is None:
        raise MissingCheckpoint("bundle has no evaluator checkpoint")
    samples = dataset.test if split == "test" else dataset.train
    if max_samples:
        samples = samples[:max_samples]
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    graphs = [s.graph for s in samples]
    lengths = [s.motion.length for s in samples]
    sampler = bundle.config.sampler(seed=seed)
    results = bundle.generate_batch(graphs, lengths, sampler)

    ev = bundle.evaluator
    gen_feats = ev.motion_features([r.final for r in results])
    real_feats = ev.motion_features([s.motion for s in samples])
    text_feats = ev.text_features([s.text for s in samples])

    mm_value = None
    if mmodality_texts > 0:
        texts = [s.text for s in samples[:mmodality_texts]]

        def one(text: str, call_seed: int) -> np.ndarray:
            res = bundle.generate_from_text(text, seed=call_seed)
            return ev.motion_features([res.final])[0]

        mm_value = mmodality(one, texts, pairs=mmodality_pairs, seed=seed)

    return compute_report(gen_feats, text_feats, real_feats, repeats=repeats,
                          seed=seed, mmodality_value=mm_value,
                          metadata={"split": split, "n": len(samples),
                                    "sampler": sampler.to_dict()})
