"""Toy contrastive evaluator: joint motion/text embedding for the metric suite.

Two small recurrent towers map motions and descriptions into one d-space,
trained with a symmetric InfoNCE objective on the synthetic corpus.  Outputs
are unit-normalized, so Euclidean ranking matches cosine ranking.  The trained
token table doubles as a pluggable text-encoder backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .embed import TableEncoder
from .motionrep import MotionSequence, Normalizer, ToySample
from .motionvae import TrainLog
from .parser import tokenize
from .semgraph import MASK_TOKEN


class Diverged(Exception):
    pass


def build_vocab(texts: list[str]) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for text in texts:
        for tok in tokenize(text):
            key = tok.lower()
            if key not in vocab:
                vocab[key] = len(vocab)
    return vocab


class MotionTower(nn.Module):
    def __init__(self, feature_width: int, hidden: int = 64, out_dim: int = 32):
        super().__init__()
        self.gru = nn.GRU(feature_width, hidden, batch_first=True)
        self.head = nn.Linear(hidden, out_dim)

    def forward(self, frames: Tensor, lengths: Tensor) -> Tensor:
        packed = nn.utils.rnn.pack_padded_sequence(
            frames, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.gru(packed)
        z = self.head(h[-1])
        return nn.functional.normalize(z, dim=-1)


class TextTower(nn.Module):
    def __init__(self, vocab_size: int, hidden: int = 64, out_dim: int = 32):
        super().__init__()
        # two extra rows: unk and mask
        self.embedding = nn.Embedding(vocab_size + 2, hidden)
        self.gru = nn.GRU(hidden, hidden, batch_first=True)
        self.head = nn.Linear(hidden, out_dim)

    def forward(self, token_ids: Tensor, lengths: Tensor) -> Tensor:
        x = self.embedding(token_ids)
        packed = nn.utils.rnn.pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.gru(packed)
        z = self.head(h[-1])
        return nn.functional.normalize(z, dim=-1)


@dataclass
class EvaluatorConfig:
    feature_width: int = 68
    hidden: int = 64
    out_dim: int = 32
    temperature: float = 0.07

    def to_dict(self) -> dict:
        return {"feature_width": self.feature_width, "hidden": self.hidden,
                "out_dim": self.out_dim, "temperature": self.temperature}


class ContrastiveEvaluator(nn.Module):
    def __init__(self, vocab: dict[str, int], normalizer: Normalizer,
                 config: EvaluatorConfig):
        super().__init__()
        self.config = config
        self.vocab = dict(vocab)
        self.normalizer = normalizer
        self.motion_tower = MotionTower(config.feature_width, config.hidden,
                                        config.out_dim)
        self.text_tower = TextTower(len(vocab), config.hidden, config.out_dim)

    def token_ids(self, text: str) -> list[int]:
        unk = len(self.vocab)
        mask_id = len(self.vocab) + 1
        ids = []
        for tok in tokenize(text):
            key = tok.lower()
            ids.append(mask_id if key == MASK_TOKEN.lower() else self.vocab.get(key, unk))
        return ids or [unk]

    def _text_batch(self, texts: list[str]) -> tuple[Tensor, Tensor]:
        seqs = [self.token_ids(t) for t in texts]
        lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
        out = torch.zeros(len(seqs), int(lengths.max()), dtype=torch.long)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = torch.tensor(s)
        return out, lengths

    def _motion_batch(self, motions: list[MotionSequence]) -> tuple[Tensor, Tensor]:
        lengths = torch.tensor([m.length for m in motions], dtype=torch.long)
        width = motions[0].layout.width
        out = torch.zeros(len(motions), int(lengths.max()), width)
        for i, m in enumerate(motions):
            out[i, : m.length] = torch.as_tensor(
                self.normalizer.normalize(m.frames), dtype=torch.float32)
        return out, lengths

    @torch.no_grad()
    def motion_features(self, motions: list[MotionSequence],
                        batch_size: int = 64) -> np.ndarray:
        self.eval()
        chunks = []
        for start in range(0, len(motions), batch_size):
            frames, lengths = self._motion_batch(motions[start:start + batch_size])
            chunks.append(self.motion_tower(frames, lengths).numpy())
        return np.concatenate(chunks, axis=0).astype(np.float64)

    @torch.no_grad()
    def text_features(self, texts: list[str], batch_size: int = 256) -> np.ndarray:
        self.eval()
        chunks = []
        for start in range(0, len(texts), batch_size):
            ids, lengths = self._text_batch(texts[start:start + batch_size])
            chunks.append(self.text_tower(ids, lengths).numpy())
        return np.concatenate(chunks, axis=0).astype(np.float64)

    def as_table_encoder(self) -> TableEncoder:
        """Expose the jointly trained token table as an encoder backend."""
        with torch.no_grad():
            table = self.embedding_table().numpy().astype(np.float64)
        return TableEncoder(self.vocab, table, name="table")

    def embedding_table(self) -> Tensor:
        return self.text_tower.embedding.weight.detach()


def train_evaluator(samples: list[ToySample], normalizer: Normalizer,
                    config: EvaluatorConfig | None = None, epochs: int = 40,
                    batch_size: int = 32, lr: float = 1e-3, seed: int = 0,
                    noise_std: float = 0.05,
                    extra_pairs: list[tuple[MotionSequence, str]] | None = None,
                    verbose: bool = False) -> tuple[ContrastiveEvaluator, TrainLog]:
    """Symmetric InfoNCE over (motion, text) pairs of the toy corpus.

    Light Gaussian noise on the normalized frames, plus optional extra
    (motion, text) pairs (e.g. VAE reconstructions of the train split), keep
    the motion features robust to decoder artifacts.
    """
    if not samples:
        raise ValueError("empty training set")
    config = config or EvaluatorConfig(feature_width=samples[0].motion.layout.width)
    torch.manual_seed(seed)
    vocab = build_vocab([s.text for s in samples])
    model = ContrastiveEvaluator(vocab, normalizer, config)
    opt = torch.optim.AdamW(model.parameters(), lr=lr)
    shuffler = np.random.default_rng(seed + 1)
    noise_gen = torch.Generator().manual_seed(seed + 2)
    log = TrainLog()
    pairs: list[tuple[MotionSequence, str]] = [(s.motion, s.text) for s in samples]
    if extra_pairs:
        pairs = pairs + list(extra_pairs)
    n = len(pairs)
    for epoch in range(epochs):
        model.train()
        order = shuffler.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size].tolist()
            if len(idx) < 2:
                continue
            chosen = [pairs[i] for i in idx]
            frames, flen = model._motion_batch([m for m, _ in chosen])
            ids, tlen = model._text_batch([t for _, t in chosen])
            if noise_std > 0:
                frames = frames + noise_std * torch.randn(frames.shape,
                                                          generator=noise_gen)
            zm = model.motion_tower(frames, flen)
            zt = model.text_tower(ids, tlen)
            logits = zm @ zt.T / config.temperature
            target = torch.arange(len(idx))
            loss = 0.5 * (nn.functional.cross_entropy(logits, target)
                          + nn.functional.cross_entropy(logits.T, target))
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            batches += 1
        log.record(epoch=epoch, loss=total / max(batches, 1))
        if verbose and (epoch % 10 == 0 or epoch == epochs - 1):
            print(f"[evaluator] epoch {epoch:3d} loss {log.final['loss']:.4f}")
    return model, log
