"""Action-aware graph reasoning over hierarchical semantic graphs.

A relational graph-attention layer: one shared D x D transform, one common
attention vector over concatenated node pairs, and a per-relation attention
matrix selected by the edge's relation.  Edge weights bias the attention
normalization multiplicatively (weight 1 leaves coefficients untouched,
weight 0 removes the edge), which is what makes interactive edge-weight
refinement a pure data operation.
"""

from __future__ import annotations

import copy
import math

import numpy as np
import torch
from torch import Tensor, nn

from .embed import NodeEmbeddings
from .semgraph import Level, Relation, RELATION_VALUES, SemanticGraph

NEGATIVE_SLOPE = 0.2
RELATION_INDEX = {rel: i for i, rel in enumerate(RELATION_VALUES)}


class ShapeMismatch(Exception):
    pass


def node_order(graph: SemanticGraph) -> list[str]:
    """Row order used everywhere: motion, then actions, then specifics."""
    return ([graph.root]
            + [n.id for n in graph.action_nodes()]
            + [n.id for n in graph.specific_nodes()])


def graph_edge_tensors(graph: SemanticGraph, bidirectional: bool = True,
                       device=None) -> tuple[Tensor, Tensor, Tensor]:
    """(edge_index (2,E), relation ids (E,), weights (E,)) in node_order rows.

    Directed edges point src -> dst; with ``bidirectional`` each edge is also
    mirrored with the same relation and weight, so parents attend to children
    and vice versa.
    """
    order = {nid: i for i, nid in enumerate(node_order(graph))}
    srcs, dsts, rels, ws = [], [], [], []
    for e in graph.edges:
        i, j = order[e.src], order[e.dst]
        r = RELATION_INDEX[e.relation.value]
        # the destination node attends over its source neighbor and vice versa
        srcs.append(i), dsts.append(j), rels.append(r), ws.append(e.weight)
        if bidirectional:
            srcs.append(j), dsts.append(i), rels.append(r), ws.append(e.weight)
    edge_index = torch.tensor([dsts, srcs], dtype=torch.long, device=device)
    rel_idx = torch.tensor(rels, dtype=torch.long, device=device)
    # float64 so edit weights survive exactly; forwards cast to their dtype
    weights = torch.tensor(ws, dtype=torch.float64, device=device)
    return edge_index, rel_idx, weights


def attention_logits(attn_common: Tensor, attn_relation: Tensor,
                     h_i: Tensor, h_j: Tensor, relation: int,
                     edge_weight: float = 1.0) -> Tensor:
    """Effective attention logit of node i attending to neighbor j.

    LeakyReLU(M^T [h_i, h_j]) + LeakyReLU(M_r[:, rel]^T [h_i, h_j]), slope 0.2,
    shifted by log(edge_weight) so the normalized coefficient gets scaled by
    the weight (weight 0 maps to -inf, i.e. the edge drops out).
    """
    pair = torch.cat([h_i, h_j], dim=-1)
    e = (torch.nn.functional.leaky_relu(pair @ attn_common, NEGATIVE_SLOPE)
         + torch.nn.functional.leaky_relu(pair @ attn_relation[:, relation], NEGATIVE_SLOPE))
    if edge_weight == 1.0:
        return e
    w = torch.as_tensor(edge_weight, dtype=e.dtype, device=e.device)
    return e + torch.log(w)


def _scatter_weighted_softmax(logits: Tensor, weights: Tensor, dst: Tensor,
                              num_nodes: int) -> Tensor:
    """Per-destination softmax of logits with multiplicative edge weights."""
    dtype = logits.dtype
    maxes = torch.full((num_nodes,), -torch.inf, dtype=dtype, device=logits.device)
    maxes = maxes.scatter_reduce(0, dst, logits, reduce="amax", include_self=True)
    maxes = torch.where(torch.isinf(maxes), torch.zeros_like(maxes), maxes)
    num = weights * torch.exp(logits - maxes[dst])
    den = torch.zeros(num_nodes, dtype=dtype, device=logits.device)
    den = den.index_add(0, dst, num)
    safe = torch.where(den > 0, den, torch.ones_like(den))
    return num / safe[dst]


def gat_layer_forward(weight: Tensor, attn_common: Tensor, attn_relation: Tensor,
                      node_feats: Tensor, edge_index: Tensor, rel_idx: Tensor,
                      edge_weights: Tensor) -> Tensor:
    """One reasoning layer over a (possibly batched, disjoint-union) graph.

    node_feats: (N, D); edge_index rows are (destination, source).  Isolated
    nodes (or nodes whose neighborhood weights sum to zero) pass through.
    """
    if node_feats.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"node dim {node_feats.shape[-1]} != W dim {weight.shape[0]}")
    n = node_feats.shape[0]
    h = node_feats @ weight
    dst, src = edge_index[0], edge_index[1]
    pair = torch.cat([h[dst], h[src]], dim=-1)
    common = torch.nn.functional.leaky_relu(pair @ attn_common, NEGATIVE_SLOPE)
    rel_term = torch.nn.functional.leaky_relu(
        (pair * attn_relation[:, rel_idx].T).sum(-1), NEGATIVE_SLOPE)
    logits = common + rel_term
    coeff = _scatter_weighted_softmax(logits, edge_weights.to(logits.dtype), dst, n)
    agg = torch.zeros_like(h)
    agg = agg.index_add(0, dst, coeff.unsqueeze(-1) * h[src])
    return torch.nn.functional.elu(agg) + node_feats


class RelationalGATLayer(nn.Module):
    """Learnable parameters of one layer; math lives in gat_layer_forward."""

    def __init__(self, dim: int, num_relations: int = len(RELATION_VALUES)):
        super().__init__()
        bound = 1.0 / math.sqrt(dim)
        self.weight = nn.Parameter(torch.empty(dim, dim).uniform_(-bound, bound))
        self.attn_common = nn.Parameter(torch.empty(2 * dim).uniform_(-bound, bound))
        self.attn_relation = nn.Parameter(
            torch.empty(2 * dim, num_relations).uniform_(-bound, bound))

    def forward(self, node_feats: Tensor, edge_index: Tensor, rel_idx: Tensor,
                edge_weights: Tensor) -> Tensor:
        return gat_layer_forward(self.weight, self.attn_common, self.attn_relation,
                                 node_feats, edge_index, rel_idx, edge_weights)


class GraphReasoner(nn.Module):
    """Stack of relational attention layers (default two, single head)."""

    def __init__(self, dim: int, num_layers: int = 2, bidirectional: bool = True):
        super().__init__()
        self.dim = dim
        self.bidirectional = bidirectional
        self.layers = nn.ModuleList(RelationalGATLayer(dim) for _ in range(num_layers))

    def forward(self, node_feats: Tensor, edge_index: Tensor, rel_idx: Tensor,
                edge_weights: Tensor) -> Tensor:
        out = node_feats
        for layer in self.layers:
            out = layer(out, edge_index, rel_idx, edge_weights)
        return out

    def reason_graph(self, graph: SemanticGraph, embeds: NodeEmbeddings) -> NodeEmbeddings:
        """Numpy-in, numpy-out reasoning over a single graph."""
        feats = embeds.stacked(graph)
        if feats.shape[1] != self.dim:
            raise ShapeMismatch(f"embedding dim {feats.shape[1]} != reasoner dim {self.dim}")
        p = next(self.parameters())
        x = torch.as_tensor(feats, dtype=p.dtype, device=p.device)
        edge_index, rel_idx, weights = graph_edge_tensors(
            graph, self.bidirectional, device=p.device)
        weights = weights.to(p.dtype)
        with torch.no_grad():
            out = self.forward(x, edge_index, rel_idx, weights).cpu().numpy()
        n_actions = len(embeds.action_index)
        return NodeEmbeddings(
            motion=out[0],
            actions=out[1:1 + n_actions],
            specifics=out[1 + n_actions:],
            action_index=dict(embeds.action_index),
            specific_index=dict(embeds.specific_index),
        )


def reason(reasoner: GraphReasoner, graph: SemanticGraph,
           embeds: NodeEmbeddings) -> NodeEmbeddings:
    return reasoner.reason_graph(graph, embeds)


def attention_coefficients(layer: RelationalGATLayer, graph: SemanticGraph,
                           embeds: NodeEmbeddings,
                           bidirectional: bool = True) -> tuple[Tensor, Tensor]:
    """Normalized coefficients (per directed pair) and their destinations."""
    p = layer.weight
    x = torch.as_tensor(embeds.stacked(graph), dtype=p.dtype, device=p.device)
    edge_index, rel_idx, weights = graph_edge_tensors(graph, bidirectional, device=p.device)
    with torch.no_grad():
        h = x @ layer.weight
        dst, src = edge_index[0], edge_index[1]
        pair = torch.cat([h[dst], h[src]], dim=-1)
        logits = (torch.nn.functional.leaky_relu(pair @ layer.attn_common, NEGATIVE_SLOPE)
                  + torch.nn.functional.leaky_relu(
                      (pair * layer.attn_relation[:, rel_idx].T).sum(-1), NEGATIVE_SLOPE))
        coeff = _scatter_weighted_softmax(logits, weights.to(logits.dtype), dst, x.shape[0])
    return coeff, dst


def grad_check(reasoner: GraphReasoner, graph: SemanticGraph, embeds: NodeEmbeddings,
               probe_seed: int = 0, step: float = 1e-5) -> float:
    """Max relative error of autograd parameter gradients vs central finite
    differences of a fixed scalar probe of the reasoned embeddings (float64).

    LeakyReLU's subgradient at exactly zero is the negative slope here, so the
    check is meaningful only at non-kink points; callers should resample inputs
    that sit on a kink.
    """
    model = copy.deepcopy(reasoner).double()

    feats = torch.as_tensor(embeds.stacked(graph), dtype=torch.float64)
    edge_index, rel_idx, weights = graph_edge_tensors(graph, model.bidirectional)
    weights = weights.double()
    probe_rng = np.random.default_rng(probe_seed)
    probe = torch.as_tensor(probe_rng.standard_normal(tuple(feats.shape)),
                            dtype=torch.float64)

    def objective() -> Tensor:
        out = model.forward(feats, edge_index, rel_idx, weights)
        return (out * probe).sum()

    model.zero_grad()
    objective().backward()
    analytic = [p.grad.detach().clone() for p in model.parameters()]

    worst = 0.0
    with torch.no_grad():
        for p, g in zip(model.parameters(), analytic):
            flat = p.view(-1)
            gflat = g.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                h = step * max(1.0, abs(orig))
                flat[k] = orig + h
                f_plus = objective().item()
                flat[k] = orig - h
                f_minus = objective().item()
                flat[k] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = gflat[k].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
                worst = max(worst, err)
    return worst
