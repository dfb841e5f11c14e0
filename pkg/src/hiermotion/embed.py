"""Initial node embeddings from a pluggable sentence encoder.

The motion node takes the sentence-summary slot, action nodes take their verb
token's vector, and specific nodes mean-pool over their span.  Masked nodes map
to the encoder's dedicated mask vector (never zero).  Nodes whose text no
longer matches the sentence span (modified or added by edits) are encoded
standalone from their own text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .parser import tokenize
from .semgraph import MASK_TOKEN, GraphNode, Level, SemanticGraph


class EncoderUnavailable(Exception):
    pass


class SpanOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class EncoderHandle:
    name: str
    dim: int
    deterministic: bool

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("encoder dim must be positive")


@dataclass
class TextEncoding:
    tokens: list[str]
    vectors: np.ndarray  # (len(tokens) + 1, D); row 0 is the sentence summary
    dim: int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape != (len(self.tokens) + 1, self.dim):
            raise ValueError(f"vectors shape {self.vectors.shape} does not match "
                             f"{len(self.tokens)} tokens at dim {self.dim}")
        if not np.isfinite(self.vectors).all():
            raise ValueError("encoding contains non-finite values")

    @property
    def summary(self) -> np.ndarray:
        return self.vectors[0]

    def token_vector(self, i: int) -> np.ndarray:
        if not 0 <= i < len(self.tokens):
            raise SpanOutOfRange(f"token index {i} outside [0, {len(self.tokens)})")
        return self.vectors[i + 1]


class Encoder(Protocol):
    name: str
    dim: int
    deterministic: bool

    def tokenize(self, text: str) -> list[str]: ...

    def encode(self, tokens: list[str]) -> np.ndarray: ...


class HashedEncoder:
    """Deterministic character n-gram hash embedder.

    Each token's vector is the normalized sum of unit-Gaussian vectors keyed by
    the SHA-256 of its padded character trigrams, so inflected forms of a word
    land near each other and the whole map is reproducible across runs and
    platforms.  The mask sentinel gets its own dedicated vector.
    """

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.name = "hashed"
        self.dim = dim
        self.deterministic = True
        self._gram_cache: dict[str, np.ndarray] = {}
        self._token_cache: dict[str, np.ndarray] = {}

    def handle(self) -> EncoderHandle:
        return EncoderHandle(self.name, self.dim, self.deterministic)

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text)

    def _gram_vector(self, gram: str) -> np.ndarray:
        v = self._gram_cache.get(gram)
        if v is None:
            digest = hashlib.sha256(gram.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            v = np.random.default_rng(seed).standard_normal(self.dim)
            self._gram_cache[gram] = v
        return v

    def token_vector(self, token: str) -> np.ndarray:
        key = token.lower()
        v = self._token_cache.get(key)
        if v is None:
            if key == MASK_TOKEN.lower():
                v = self._gram_vector("\x00mask-sentinel\x00")
            else:
                padded = f"^{key}$"
                grams = [padded[i:i + 3] for i in range(max(1, len(padded) - 2))]
                v = np.sum([self._gram_vector(g) for g in grams], axis=0)
            norm = np.linalg.norm(v)
            v = v / norm if norm > 0 else v
            self._token_cache[key] = v
        return v

    @property
    def mask_vector(self) -> np.ndarray:
        return self.token_vector(MASK_TOKEN)

    def encode(self, tokens: list[str]) -> np.ndarray:
        rows = [self.token_vector(t) for t in tokens]
        if rows:
            summary = np.mean(rows, axis=0)
            norm = np.linalg.norm(summary)
            if norm > 0:
                summary = summary / norm
        else:
            summary = self._gram_vector("\x00empty\x00") / np.sqrt(self.dim)
        return np.vstack([summary] + rows) if rows else summary.reshape(1, -1)


class TableEncoder:
    """Lookup-table encoder over a fixed vocabulary (trainable elsewhere).

    Vectors live in a plain array so a jointly trained embedding table (for
    example the retrieval evaluator's text tower) can be dropped in.
    """

    def __init__(self, vocab: dict[str, int], table: np.ndarray, name: str = "table"):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] < len(vocab) + 2:
            raise ValueError("table must have a row per vocab entry plus unk and mask")
        self.name = name
        self.dim = table.shape[1]
        self.deterministic = True
        self.vocab = dict(vocab)
        self.table = table
        self._unk_row = len(vocab)
        self._mask_row = len(vocab) + 1

    def handle(self) -> EncoderHandle:
        return EncoderHandle(self.name, self.dim, self.deterministic)

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text)

    def token_vector(self, token: str) -> np.ndarray:
        key = token.lower()
        if key == MASK_TOKEN.lower():
            return self.table[self._mask_row]
        return self.table[self.vocab.get(key, self._unk_row)]

    @property
    def mask_vector(self) -> np.ndarray:
        return self.table[self._mask_row]

    def encode(self, tokens: list[str]) -> np.ndarray:
        rows = [self.token_vector(t) for t in tokens]
        summary = np.mean(rows, axis=0) if rows else np.zeros(self.dim) + self.table[self._unk_row]
        return np.vstack([summary] + rows) if rows else summary.reshape(1, -1)

    @staticmethod
    def random(vocab: dict[str, int], dim: int, seed: int = 0) -> "TableEncoder":
        rng = np.random.default_rng(seed)
        table = rng.standard_normal((len(vocab) + 2, dim)) / np.sqrt(dim)
        return TableEncoder(vocab, table)


def make_encoder(name: str, dim: int = 64, **kwargs) -> Encoder:
    if name == "hashed":
        return HashedEncoder(dim=dim)
    if name == "table":
        vocab = kwargs.get("vocab")
        table = kwargs.get("table")
        if vocab is None:
            raise EncoderUnavailable("table encoder needs a vocab")
        if table is None:
            return TableEncoder.random(vocab, dim, seed=kwargs.get("seed", 0))
        return TableEncoder(vocab, table)
    raise EncoderUnavailable(f"no encoder named {name!r}")


def encode_sentence(encoder: Encoder, text: str) -> TextEncoding:
    tokens = encoder.tokenize(text)
    vectors = encoder.encode(tokens)
    return TextEncoding(tokens=tokens, vectors=vectors, dim=encoder.dim)


@dataclass
class NodeEmbeddings:
    motion: np.ndarray                    # (D,)
    actions: np.ndarray                   # (A, D)
    specifics: np.ndarray                 # (S, D)
    action_index: dict[str, int] = field(default_factory=dict)
    specific_index: dict[str, int] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.motion.shape[-1]

    def stacked(self, graph: SemanticGraph) -> np.ndarray:
        """All node vectors in graph row order: motion, actions, specifics."""
        rows = [self.motion]
        for node in graph.action_nodes():
            rows.append(self.actions[self.action_index[node.id]])
        for node in graph.specific_nodes():
            rows.append(self.specifics[self.specific_index[node.id]])
        return np.vstack(rows)


def mean_pool(rows: np.ndarray) -> np.ndarray:
    """Arithmetic mean of row vectors, centered on the first row so pooling k
    identical vectors returns that vector exactly."""
    rows = np.asarray(rows, dtype=np.float64)
    return rows[0] + (rows - rows[0]).mean(axis=0)


def _span_matches(node: GraphNode, enc: TextEncoding) -> bool:
    s, e = node.span
    if s >= e or e > len(enc.tokens):
        return False
    span_tokens = [t.lower() for t in enc.tokens[s:e]]
    return span_tokens == [t.lower() for t in tokenize(node.text)]


def _standalone_vector(node: GraphNode, encoder: Encoder) -> np.ndarray:
    tokens = encoder.tokenize(node.text)
    if not tokens:
        raise ValueError(f"node {node.id} text {node.text!r} has no tokens")
    enc = encoder.encode(tokens)
    return mean_pool(enc[1:])


def node_representations(graph: SemanticGraph, enc: TextEncoding,
                         encoder: Optional[Encoder] = None) -> NodeEmbeddings:
    """Per-node vectors: summary slot for the motion node, verb-token vector
    for actions, span mean for specifics.  Masked nodes use the mask vector;
    edited nodes whose text diverged from the sentence are encoded standalone
    (this needs the encoder)."""

    def vector_for(node: GraphNode) -> np.ndarray:
        if node.masked:
            if encoder is None:
                raise EncoderUnavailable("masked node embedding needs the encoder")
            return getattr(encoder, "mask_vector")
        if node.level == Level.MOTION:
            return enc.summary
        s, e = node.span
        if _span_matches(node, enc):
            if node.level == Level.ACTION:
                return enc.token_vector(s)
            return mean_pool(np.vstack([enc.token_vector(i) for i in range(s, e)]))
        if encoder is None:
            if e > len(enc.tokens):
                raise SpanOutOfRange(f"node {node.id} span {node.span} exceeds "
                                     f"{len(enc.tokens)} tokens")
            raise EncoderUnavailable(
                f"node {node.id} text {node.text!r} does not match its span; "
                "standalone encoding needs the encoder")
        return _standalone_vector(node, encoder)

    motion = vector_for(graph.motion_node)
    action_nodes = graph.action_nodes()
    specific_nodes = graph.specific_nodes()
    actions = (np.vstack([vector_for(n) for n in action_nodes])
               if action_nodes else np.zeros((0, enc.dim)))
    specifics = (np.vstack([vector_for(n) for n in specific_nodes])
                 if specific_nodes else np.zeros((0, enc.dim)))
    return NodeEmbeddings(
        motion=motion, actions=actions, specifics=specifics,
        action_index={n.id: i for i, n in enumerate(action_nodes)},
        specific_index={n.id: i for i, n in enumerate(specific_nodes)},
    )


def weighted_summary(graph: SemanticGraph, enc: TextEncoding,
                     encoder: Encoder) -> np.ndarray:
    """Sentence summary as a weighted token mean: each action/specific node's
    span tokens carry min(edge weight, 1), so weight 0 reads exactly as the
    phrase being absent from the sentence and weight 1 as the plain sentence
    (amplification beyond 1 is handled at the guidance level, not by skewing
    the summary); masked nodes contribute the mask vector at their span.  With
    all weights >= 1 and nothing masked this is the encoder's own summary,
    bitwise.
    """
    weight_of = {e.dst: e.weight for e in graph.edges}
    plain = all(e.weight >= 1.0 for e in graph.edges) \
        and not any(n.masked for n in graph.nodes)
    if plain:
        return enc.summary
    n_tokens = len(enc.tokens)
    weights = np.ones(n_tokens)
    vectors = np.vstack([enc.token_vector(i) for i in range(n_tokens)]) \
        if n_tokens else np.zeros((0, enc.dim))
    for node in graph.nodes:
        if node.level == Level.MOTION:
            continue
        s, e = node.span
        if not (0 <= s < e <= n_tokens):
            continue
        weights[s:e] = min(weight_of.get(node.id, 1.0), 1.0)
        if node.masked:
            vectors[s:e] = encoder.mask_vector
    total = weights.sum()
    if total <= 0 or n_tokens == 0:
        return enc.summary
    summary = (weights[:, None] * vectors).sum(axis=0) / total
    norm = np.linalg.norm(summary)
    return summary / norm if norm > 0 else summary


def embed_graph(encoder: Encoder, graph: SemanticGraph) -> NodeEmbeddings:
    """Full text-to-node-embedding path for a graph (sentence from the root).

    The motion node's summary respects edge weights and node masks (see
    weighted_summary), so graph edits steer all three conditioning levels.
    """
    enc = encode_sentence(encoder, graph.motion_node.text)
    reps = node_representations(graph, enc, encoder)
    if not graph.motion_node.masked:
        reps.motion = weighted_summary(graph, enc, encoder)
    return reps
