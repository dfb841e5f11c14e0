"""Three-level coarse-to-fine latent diffusion over hierarchical graphs.

The motion-level denoiser is conditioned on the reasoned motion node, the
action level on motion plus action nodes plus the motion-level latent, and the
specific level on all node embeddings plus the action-level latent.  Training
minimizes the summed noise-prediction error of the three levels jointly with
ground-truth-encoded coarser latents as conditioning (the VAEs stay frozen);
sampling runs the levels sequentially with classifier-free guidance and DDIM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .embed import Encoder, NodeEmbeddings, embed_graph
from .graphreason import GraphReasoner, graph_edge_tensors
from .motionrep import MotionSequence, Normalizer, ToySample, DEFAULT_LAYOUT
from .motionvae import LatentSeq, MotionVAE, TrainLog, batch_frames, sinusoidal_table
from .semgraph import SemanticGraph

LEVELS = ("motion", "action", "specific")


class Diverged(Exception):
    pass


class MissingCheckpoint(Exception):
    pass


class InvalidRange(Exception):
    pass


# ---------------------------------------------------------------------------
# Noise schedule and forward process

@dataclass(frozen=True)
class NoiseSchedule:
    """beta[t], alpha[t] = 1 - beta[t], alpha_bar[t] = prod_{i<=t} alpha[i],
    stored 1-indexed conceptually (array slot k holds step t = k + 1)."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.beta)

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar for integer step t in [0, T]; t = 0 means clean data."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])


def schedule_linear(steps: int, beta_start: float = 8.5e-4,
                    beta_end: float = 0.012) -> NoiseSchedule:
    if steps < 2:
        raise InvalidRange("schedule needs at least 2 steps")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise InvalidRange(f"need 0 < beta_start < beta_end < 1, "
                           f"got ({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def q_sample(schedule: NoiseSchedule, z0: np.ndarray, t: int,
             eps: np.ndarray) -> np.ndarray:
    """Closed-form forward process: sqrt(a_bar_t) z0 + sqrt(1 - a_bar_t) eps."""
    if not 1 <= t <= schedule.steps:
        raise InvalidRange(f"t = {t} outside [1, {schedule.steps}]")
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z0.shape:
        raise ValueError(f"eps shape {eps.shape} != z0 shape {z0.shape}")
    a = schedule.alpha_bar_at(t)
    return math.sqrt(a) * z0 + math.sqrt(1.0 - a) * eps


def q_sample_torch(alpha_bar: Tensor, z0: Tensor, t: Tensor, eps: Tensor) -> Tensor:
    """Batched forward process; t is a (B,) tensor of steps in [1, T]."""
    a = alpha_bar[t - 1].view(-1, *([1] * (z0.dim() - 1)))
    return torch.sqrt(a) * z0 + torch.sqrt(1.0 - a) * eps


def cfg_predict(eps_cond: Tensor, eps_uncond: Tensor, guidance: float) -> Tensor:
    """guidance * conditional + (1 - guidance) * unconditional.

    guidance 1 returns the conditional prediction unchanged (bitwise), 0 the
    unconditional one.
    """
    if guidance == 1.0:
        return eps_cond
    if guidance == 0.0:
        return eps_uncond
    return guidance * eps_cond + (1.0 - guidance) * eps_uncond


def ddim_step(schedule: NoiseSchedule, z_t: Tensor, eps_hat: Tensor, t: int,
              t_prev: int, eta: float = 0.0,
              generator: Optional[torch.Generator] = None) -> Tensor:
    """One DDIM update from step t to t_prev (< t); eta = 0 is deterministic."""
    if not 0 <= t_prev < t:
        raise InvalidRange(f"need 0 <= t_prev < t, got ({t_prev}, {t})")
    a_t = schedule.alpha_bar_at(t)
    a_prev = schedule.alpha_bar_at(t_prev)
    z0_pred = (z_t - math.sqrt(1.0 - a_t) * eps_hat) / math.sqrt(a_t)
    sigma = eta * math.sqrt((1.0 - a_prev) / (1.0 - a_t)) * math.sqrt(1.0 - a_t / a_prev)
    dir_coeff = math.sqrt(max(0.0, 1.0 - a_prev - sigma ** 2))
    out = math.sqrt(a_prev) * z0_pred + dir_coeff * eps_hat
    if eta > 0.0:
        noise = torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype,
                            device=z_t.device)
        out = out + sigma * noise
    return out


def ddim_timesteps(total_steps: int, num_steps: int) -> list[int]:
    """Evenly spaced decreasing subsequence of [1, T], always starting at T."""
    if num_steps < 1:
        raise InvalidRange("need at least one inference step")
    ts = np.round(np.linspace(total_steps, 1, num_steps)).astype(int)
    return np.unique(ts)[::-1].tolist()


# ---------------------------------------------------------------------------
# Denoisers

def timestep_embedding(t: Tensor, dim: int) -> Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32)
                      / max(1, half - 1)).to(t.device)
    args = t.float().unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


@dataclass
class DenoiserConfig:
    level: str
    token_count: int
    latent_dim: int = 32
    node_dim: int = 64
    coarser_token_count: int = 0  # latent tokens of the conditioning level
    d_model: int = 128
    num_layers: int = 4
    num_heads: int = 2
    ff_dim: int = 256

    def to_dict(self) -> dict:
        return asdict(self)


class Denoiser(nn.Module):
    """Encoder-only transformer over [latent tokens | time token | condition
    tokens]; the noise prediction is read off the latent positions."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        dm = config.d_model
        self.z_in = nn.Linear(config.latent_dim, dm)
        self.z_out = nn.Linear(dm, config.latent_dim)
        self.latent_pos = nn.Parameter(torch.randn(config.token_count, dm) * 0.02)
        self.time_mlp = nn.Sequential(nn.Linear(dm, dm), nn.SiLU(), nn.Linear(dm, dm))
        self.node_proj = nn.Linear(config.node_dim, dm)
        self.zcond_proj = (nn.Linear(config.latent_dim, dm)
                           if config.coarser_token_count > 0 else None)
        self.null_token = nn.Parameter(torch.randn(1, dm) * 0.02)
        layer = nn.TransformerEncoderLayer(dm, config.num_heads, config.ff_dim,
                                           dropout=0.0, batch_first=True,
                                           activation="gelu", norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, config.num_layers,
                                             enable_nested_tensor=False)

    def forward(self, z_t: Tensor, t: Tensor, cond: Tensor,
                cond_mask: Optional[Tensor] = None) -> Tensor:
        """z_t: (B, C, D'); t: (B,); cond: (B, K, d_model) already projected;
        cond_mask True where padded."""
        b = z_t.shape[0]
        x = self.z_in(z_t) + self.latent_pos.unsqueeze(0)
        time_tok = self.time_mlp(timestep_embedding(t, self.config.d_model)).unsqueeze(1)
        tokens = torch.cat([x, time_tok, cond], dim=1)
        head = torch.zeros(b, x.shape[1] + 1, dtype=torch.bool, device=z_t.device)
        mask = head if cond_mask is None else torch.cat([head, cond_mask], dim=1)
        out = self.encoder(tokens, src_key_padding_mask=mask)
        return self.z_out(out[:, : self.config.token_count])

    def null_condition(self, batch: int) -> tuple[Tensor, Tensor]:
        cond = self.null_token.unsqueeze(0).expand(batch, -1, -1)
        mask = torch.zeros(batch, 1, dtype=torch.bool, device=self.null_token.device)
        return cond, mask


# ---------------------------------------------------------------------------
# Graph conditioning

@dataclass
class GraphBatch:
    """Disjoint union of per-sample graphs plus bookkeeping for splitting."""

    feats: Tensor              # (sum N_i, D) initial node embeddings
    edge_index: Tensor         # (2, sum E_i)
    rel_idx: Tensor
    edge_weights: Tensor
    offsets: list[int]         # start row of each sample
    action_counts: list[int]
    specific_counts: list[int]
    node_weights: Tensor       # (sum N_i,) incoming-edge weight per node (root 1)

    @property
    def size(self) -> int:
        return len(self.offsets)


def _incoming_weights(graph: SemanticGraph) -> list[float]:
    from .graphreason import node_order

    weight_of = {e.dst: e.weight for e in graph.edges}
    return [weight_of.get(nid, 1.0) for nid in node_order(graph)]


def collate_graphs(graphs: Sequence[SemanticGraph],
                   embeds: Sequence[NodeEmbeddings],
                   bidirectional: bool = True) -> GraphBatch:
    feats, eidx, rels, ws, offsets, acts, specs, nws = [], [], [], [], [], [], [], []
    row = 0
    for g, emb in zip(graphs, embeds):
        stacked = torch.as_tensor(emb.stacked(g), dtype=torch.float32)
        e, r, w = graph_edge_tensors(g, bidirectional)
        feats.append(stacked)
        eidx.append(e + row)
        rels.append(r)
        ws.append(w.float())
        offsets.append(row)
        acts.append(len(emb.action_index))
        specs.append(len(emb.specific_index))
        nws.append(torch.tensor(_incoming_weights(g), dtype=torch.float32))
        row += stacked.shape[0]
    return GraphBatch(
        feats=torch.cat(feats, dim=0),
        edge_index=torch.cat(eidx, dim=1),
        rel_idx=torch.cat(rels, dim=0),
        edge_weights=torch.cat(ws, dim=0),
        offsets=offsets,
        action_counts=acts,
        specific_counts=specs,
        node_weights=torch.cat(nws, dim=0),
    )


def _pad_stack(rows: list[Tensor], dm: int) -> tuple[Tensor, Tensor]:
    """Stack variable-length (K_i, dm) tensors with True-padding mask."""
    b = len(rows)
    kmax = max(r.shape[0] for r in rows)
    out = torch.zeros(b, kmax, dm, dtype=rows[0].dtype, device=rows[0].device)
    mask = torch.ones(b, kmax, dtype=torch.bool, device=rows[0].device)
    for i, r in enumerate(rows):
        out[i, : r.shape[0]] = r
        mask[i, : r.shape[0]] = False
    return out, mask


@dataclass
class GuidanceContext:
    """Classifier-free guidance training context: conditions are dropped to a
    learned unconditional sentinel with this probability."""

    dropout: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")


@dataclass
class SamplerConfig:
    steps: dict[str, int] = field(default_factory=lambda: {"motion": 15, "action": 15,
                                                           "specific": 20})
    guidance: float = 7.5
    eta: float = 0.0
    seed: int = 0
    # gain on the per-node marginal amplification for edited edge weights;
    # keeps the effective emphasis inside the model's monotone response range
    edit_gain: float = 0.35

    def __post_init__(self):
        for level in LEVELS:
            if self.steps.get(level, 0) < 1:
                raise ValueError(f"step count for {level} must be >= 1")
        if self.guidance < 0:
            raise ValueError("guidance scale must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.edit_gain < 0:
            raise ValueError("edit gain must be >= 0")

    def to_dict(self) -> dict:
        return {"steps": dict(self.steps), "guidance": self.guidance,
                "eta": self.eta, "seed": self.seed, "edit_gain": self.edit_gain}

    @staticmethod
    def from_dict(d: dict) -> "SamplerConfig":
        cfg = SamplerConfig()
        steps = d.get("steps")
        if steps:
            cfg.steps.update({k: int(v) for k, v in steps.items()})
        cfg.guidance = float(d.get("guidance", cfg.guidance))
        cfg.eta = float(d.get("eta", cfg.eta))
        cfg.seed = int(d.get("seed", cfg.seed))
        cfg.edit_gain = float(d.get("edit_gain", cfg.edit_gain))
        cfg.__post_init__()
        return cfg


@dataclass
class DiffusionConfig:
    node_dim: int = 64
    latent_dim: int = 32
    token_counts: dict[str, int] = field(default_factory=lambda: {"motion": 2,
                                                                  "action": 4,
                                                                  "specific": 8})
    train_steps: int = 1000
    beta_start: float = 8.5e-4
    beta_end: float = 0.012
    reason_layers: int = 2
    d_model: int = 128
    num_layers: int = 4
    num_heads: int = 2
    ff_dim: int = 256
    cond_dropout: float = 0.10
    # optional conditioning augmentation for the cascaded levels: the coarser
    # latent fed as conditioning is noised by this fraction of its batch scale
    cond_noise: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DiffusionConfig":
        cfg = DiffusionConfig()
        for k, v in d.items():
            setattr(cfg, k, v)
        return cfg


class HierarchicalDiffusion(nn.Module):
    """Graph reasoner plus the three level denoisers, trained jointly."""

    def __init__(self, config: DiffusionConfig):
        super().__init__()
        self.config = config
        self.reasoner = GraphReasoner(config.node_dim, config.reason_layers)
        coarser = {"motion": 0, "action": config.token_counts["motion"],
                   "specific": config.token_counts["action"]}
        self.denoisers = nn.ModuleDict({
            level: Denoiser(DenoiserConfig(
                level=level,
                token_count=config.token_counts[level],
                latent_dim=config.latent_dim,
                node_dim=config.node_dim,
                coarser_token_count=coarser[level],
                d_model=config.d_model,
                num_layers=config.num_layers,
                num_heads=config.num_heads,
                ff_dim=config.ff_dim,
            )) for level in LEVELS
        })
        # per-level latent normalization: diffusion runs on z / scale so the
        # noise schedule sees unit-variance data; decode unscales
        for level in LEVELS:
            self.register_buffer(f"latent_scale_{level}", torch.ones(()))

    def latent_scale(self, level: str) -> Tensor:
        return getattr(self, f"latent_scale_{level}")

    def set_latent_scales(self, scales: dict[str, float]) -> None:
        for level, value in scales.items():
            getattr(self, f"latent_scale_{level}").fill_(float(value))

    @property
    def unconditional(self) -> bool:
        return self.config.cond_dropout >= 1.0

    def reasoned_rows(self, batch: GraphBatch) -> Tensor:
        return self.reasoner(batch.feats, batch.edge_index, batch.rel_idx,
                             batch.edge_weights)

    def condition_tokens(self, level: str, batch: GraphBatch, reasoned: Tensor,
                         coarser_z: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
        """Per-sample condition sequences, padded; (B, K, d_model), mask.

        A node's projected token is interpolated between the learned
        unconditional sentinel and itself by the node's incoming-edge weight,
        token(w) = null + w * (token - null): weight 1 is the plain token
        (training always sees this), weight 0 collapses the node onto the
        sentinel the model was trained to read as "no condition", and larger
        weights amplify the node's contribution beyond its trained strength,
        mirroring classifier-free-guidance geometry per node.
        """
        den: Denoiser = self.denoisers[level]
        if self.unconditional:
            return den.null_condition(batch.size)
        null = den.null_token.squeeze(0)
        rows = []
        for i in range(batch.size):
            o = batch.offsets[i]
            a, s = batch.action_counts[i], batch.specific_counts[i]
            if level == "motion":
                count = 1
            elif level == "action":
                count = 1 + a
            else:
                count = 1 + a + s
            toks = den.node_proj(reasoned[o:o + count])
            node_w = batch.node_weights[o:o + count].unsqueeze(-1)
            toks = null + node_w * (toks - null)
            if coarser_z is not None:
                toks = torch.cat([toks, den.zcond_proj(coarser_z[i])], dim=0)
            rows.append(toks)
        return _pad_stack(rows, den.config.d_model)

    def predict_noise(self, level: str, z_t: Tensor, t: Tensor, cond: Tensor,
                      cond_mask: Tensor) -> Tensor:
        return self.denoisers[level](z_t, t, cond, cond_mask)


# ---------------------------------------------------------------------------
# Training

@dataclass
class PreparedSample:
    graph: SemanticGraph
    embeds: NodeEmbeddings
    length: int
    posteriors: dict[str, tuple[Tensor, Tensor]]  # level -> (mu, sigma), (C, D')


@torch.no_grad()
def prepare_samples(samples: list[ToySample], vaes: dict[str, MotionVAE],
                    normalizer: Normalizer, encoder: Encoder,
                    batch_size: int = 64) -> list[PreparedSample]:
    """Freeze everything trainable upstream: initial node embeddings from the
    text encoder and per-level VAE posteriors for each sample."""
    out: list[PreparedSample] = []
    for s in samples:
        out.append(PreparedSample(graph=s.graph, embeds=embed_graph(encoder, s.graph),
                                  length=s.motion.length, posteriors={}))
    for level, vae in vaes.items():
        vae.eval()
        for start in range(0, len(samples), batch_size):
            idx = list(range(start, min(start + batch_size, len(samples))))
            frames, lengths = batch_frames(samples, normalizer, idx)
            post = vae.posterior(frames, lengths)
            for k, i in enumerate(idx):
                out[i].posteriors[level] = (post.mu[k].clone(), post.sigma[k].clone())
    return out


def train_diffusion(prepared: list[PreparedSample], config: DiffusionConfig,
                    epochs: int = 100, batch_size: int = 32, lr: float = 1e-3,
                    seed: int = 0, verbose: bool = False
                    ) -> tuple[HierarchicalDiffusion, NoiseSchedule, TrainLog]:
    if not prepared:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    model = HierarchicalDiffusion(config)
    schedule = schedule_linear(config.train_steps, config.beta_start, config.beta_end)
    alpha_bar = torch.as_tensor(schedule.alpha_bar, dtype=torch.float32)
    opt = torch.optim.AdamW(model.parameters(), lr=lr)
    lr_sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs,
                                                          eta_min=lr * 0.05)
    gen = torch.Generator().manual_seed(seed + 1)
    shuffler = np.random.default_rng(seed + 2)
    log = TrainLog()
    n = len(prepared)
    guidance = GuidanceContext(dropout=config.cond_dropout)

    # unit-variance latents for the diffusion (scales live in the checkpoint)
    scales = {}
    for level in LEVELS:
        mus = torch.stack([p.posteriors[level][0] for p in prepared])
        scales[level] = max(float(mus.std()), 1e-6)
    model.set_latent_scales(scales)

    for epoch in range(epochs):
        order = shuffler.permutation(n)
        sums = {level: 0.0 for level in LEVELS}
        batches = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size].tolist()
            chosen = [prepared[i] for i in idx]
            batch = collate_graphs([c.graph for c in chosen], [c.embeds for c in chosen])
            reasoned = model.reasoned_rows(batch)
            b = len(chosen)

            z0 = {}
            for level in LEVELS:
                mu = torch.stack([c.posteriors[level][0] for c in chosen])
                sigma = torch.stack([c.posteriors[level][1] for c in chosen])
                noise = torch.randn(mu.shape, generator=gen)
                z0[level] = (mu + sigma * noise) / model.latent_scale(level)

            def as_condition(z: Tensor) -> Tensor:
                if config.cond_noise <= 0:
                    return z
                scale = config.cond_noise * z.detach().std()
                return z + scale * torch.randn(z.shape, generator=gen)

            coarser = {"motion": None, "action": as_condition(z0["motion"]),
                       "specific": as_condition(z0["action"])}
            loss = torch.zeros(())
            terms = {}
            for level in LEVELS:
                t = torch.randint(1, schedule.steps + 1, (b,), generator=gen)
                eps = torch.randn(z0[level].shape, generator=gen)
                z_t = q_sample_torch(alpha_bar, z0[level], t, eps)
                cond, mask = model.condition_tokens(level, batch, reasoned, coarser[level])
                if not model.unconditional and guidance.dropout > 0:
                    drop = torch.rand(b, generator=gen) < guidance.dropout
                    if drop.any():
                        cond = cond.clone()
                        mask = mask.clone()
                        null = model.denoisers[level].null_token.squeeze(0)
                        cond[drop, 0] = null
                        mask[drop, 1:] = True
                eps_hat = model.predict_noise(level, z_t, t, cond, mask)
                term = (eps_hat - eps).pow(2).mean()
                terms[level] = term.item()
                loss = loss + term
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            for level in LEVELS:
                sums[level] += terms[level]
            batches += 1
        lr_sched.step()
        entry = {f"loss_{lv}": sums[lv] / batches for lv in LEVELS}
        entry["epoch"] = epoch
        entry["total"] = sum(sums.values()) / batches
        log.record(**entry)
        if verbose and (epoch % 10 == 0 or epoch == epochs - 1):
            print(f"[diffusion] epoch {epoch:4d} total {entry['total']:.4f} "
                  + " ".join(f"{lv} {entry['loss_' + lv]:.4f}" for lv in LEVELS))
    return model, schedule, log


# ---------------------------------------------------------------------------
# Sampling

@dataclass
class GenerationResult:
    graph: SemanticGraph
    latents: dict[str, LatentSeq]
    motions: dict[str, MotionSequence]  # per-level decodes
    final: MotionSequence
    seed: int


@dataclass
class _EditVariants:
    """Per edited node: the graph with that node's edge weight zeroed, so its
    marginal conditioning direction can be amplified at the guidance level."""

    batch: GraphBatch
    reasoned: Tensor
    sample_idx: list[int]    # which sample each variant belongs to
    weights: list[float]     # the edited weight of that node


def _edit_variants(model: HierarchicalDiffusion, encoder: Encoder,
                   graphs: Sequence[SemanticGraph]) -> Optional[_EditVariants]:
    from dataclasses import replace

    from .semgraph import GraphEdge

    variant_graphs, sample_idx, weights = [], [], []
    for i, g in enumerate(graphs):
        for edge in g.edges:
            if edge.weight != 1.0:
                zeroed = tuple(GraphEdge(e.src, e.dst, e.relation, 0.0)
                               if (e.src, e.dst) == (edge.src, edge.dst) else e
                               for e in g.edges)
                variant_graphs.append(replace(g, edges=zeroed))
                sample_idx.append(i)
                weights.append(edge.weight)
    if not variant_graphs:
        return None
    embeds = [embed_graph(encoder, g) for g in variant_graphs]
    batch = collate_graphs(variant_graphs, embeds)
    return _EditVariants(batch=batch, reasoned=model.reasoned_rows(batch),
                         sample_idx=sample_idx, weights=weights)


def _sample_level(model: HierarchicalDiffusion, schedule: NoiseSchedule, level: str,
                  batch: GraphBatch, reasoned: Tensor, coarser_z: Optional[Tensor],
                  steps: int, guidance: float, eta: float,
                  generator: torch.Generator,
                  variants: Optional[_EditVariants] = None,
                  edit_gain: float = 0.35) -> Tensor:
    den: Denoiser = model.denoisers[level]
    b = batch.size
    c = den.config.token_count
    z = torch.randn((b, c, den.config.latent_dim), generator=generator)
    cond, mask = model.condition_tokens(level, batch, reasoned, coarser_z)
    vcond = vmask = None
    vidx: list[int] = []
    if variants is not None:
        vidx = variants.sample_idx
        vz_coarser = coarser_z[vidx] if coarser_z is not None else None
        vcond, vmask = model.condition_tokens(level, variants.batch,
                                              variants.reasoned, vz_coarser)
    ts = ddim_timesteps(schedule.steps, steps)
    for k, t in enumerate(ts):
        t_prev = ts[k + 1] if k + 1 < len(ts) else 0
        tt = torch.full((b,), t, dtype=torch.long)
        eps_c = model.predict_noise(level, z, tt, cond, mask)
        if vcond is not None:
            # relevance-weighted compositional guidance: each edited node's
            # marginal direction eps_c - eps_without scales with (w - 1);
            # exact CFG at weight 1, node removal at weight 0
            vt = torch.full((len(vidx),), t, dtype=torch.long)
            eps_v = model.predict_noise(level, z[vidx], vt, vcond, vmask)
            base = eps_c
            eps_c = base.clone()
            for row, (i, w) in enumerate(zip(vidx, variants.weights)):
                eps_c[i] = eps_c[i] + edit_gain * (w - 1.0) * (base[i] - eps_v[row])
        if guidance == 1.0:
            eps = eps_c
        else:
            ncond, nmask = den.null_condition(b)
            eps_u = model.predict_noise(level, z, tt, ncond, nmask)
            eps = cfg_predict(eps_c, eps_u, guidance)
        z = ddim_step(schedule, z, eps, t, t_prev, eta, generator)
    return z


def _finalize_motion(frames: np.ndarray, fps: float) -> MotionSequence:
    """Denormalized decoder output -> MotionSequence with binary contacts."""
    layout = DEFAULT_LAYOUT
    frames = np.asarray(frames, dtype=np.float64)
    contacts = frames[:, layout.foot_contacts]
    frames[:, layout.foot_contacts] = (contacts > 0.5).astype(np.float64)
    return MotionSequence(frames=frames, fps=fps, layout=layout)


@torch.no_grad()
def sample_hierarchical_batch(model: HierarchicalDiffusion, schedule: NoiseSchedule,
                              vaes: dict[str, MotionVAE], normalizer: Normalizer,
                              encoder: Encoder, graphs: Sequence[SemanticGraph],
                              lengths: Sequence[int], config: SamplerConfig,
                              fps: float = 20.0) -> list[GenerationResult]:
    """Generate one motion per graph; deterministic for eta = 0 and fixed seed."""
    for level in LEVELS:
        if level not in vaes:
            raise MissingCheckpoint(f"no VAE for level {level!r}")
    model.eval()
    embeds = [embed_graph(encoder, g) for g in graphs]
    batch = collate_graphs(list(graphs), embeds)
    reasoned = model.reasoned_rows(batch)
    variants = _edit_variants(model, encoder, graphs)
    generator = torch.Generator().manual_seed(config.seed)

    z = {}
    coarser = None
    for level in LEVELS:
        z[level] = _sample_level(model, schedule, level, batch, reasoned, coarser,
                                 config.steps[level], config.guidance, config.eta,
                                 generator, variants, config.edit_gain)
        coarser = z[level]

    lengths_t = torch.as_tensor(list(lengths), dtype=torch.long)
    unscaled = {level: z[level] * model.latent_scale(level) for level in LEVELS}
    decoded = {level: vaes[level].decode(unscaled[level], lengths_t)
               for level in LEVELS}

    results = []
    for i, g in enumerate(graphs):
        L = int(lengths[i])
        motions = {}
        for level in LEVELS:
            raw = decoded[level][i, :L].numpy()
            motions[level] = _finalize_motion(normalizer.denormalize(raw), fps)
        results.append(GenerationResult(
            graph=g,
            latents={lv: LatentSeq(tokens=unscaled[lv][i].numpy(), level=lv)
                     for lv in LEVELS},
            motions=motions,
            final=motions["specific"],
            seed=config.seed,
        ))
    return results


def sample_hierarchical(model: HierarchicalDiffusion, schedule: NoiseSchedule,
                        vaes: dict[str, MotionVAE], normalizer: Normalizer,
                        encoder: Encoder, graph: SemanticGraph, length: int,
                        config: SamplerConfig, fps: float = 20.0) -> GenerationResult:
    return sample_hierarchical_batch(model, schedule, vaes, normalizer, encoder,
                                     [graph], [length], config, fps)[0]


def default_length_for(graph: SemanticGraph, per_action: int = 40,
                       bounds: tuple[int, int] = (30, 120)) -> int:
    n = max(1, len(graph.action_nodes()))
    return int(np.clip(per_action * n, bounds[0], bounds[1]))
