"""Relation-factorized graph attention over a parsed graph.

Walks through the three stages: initial node embeddings from the hashed text
encoder, attention coefficients (and how edge weights bias them), and the
reasoned output embeddings with their skip connection.
"""

import numpy as np
import torch

from hiermotion import parse_description
from hiermotion.embed import HashedEncoder, embed_graph
from hiermotion.graphreason import GraphReasoner, attention_coefficients, reason
from hiermotion.semgraph import EditKind, EditOp, apply_edit

torch.manual_seed(0)

graph = parse_description("a person walks quickly to the left.")
encoder = HashedEncoder(dim=64)
embeds = embed_graph(encoder, graph)
print("initial embeddings:", {"motion": embeds.motion.shape,
                              "actions": embeds.actions.shape,
                              "specifics": embeds.specifics.shape})

reasoner = GraphReasoner(dim=64, num_layers=2).double()
out = reason(reasoner, graph, embeds)
print("reasoned norms: motion %.3f -> %.3f" % (np.linalg.norm(embeds.motion),
                                               np.linalg.norm(out.motion)))

# how the walk action divides attention between its neighbors, as the weight
# of the direction edge sweeps
walk = graph.action_nodes()[0]
left = next(n for n in graph.specific_nodes() if n.text == "to the left")
order = [graph.root] + [n.id for n in graph.action_nodes()] \
        + [n.id for n in graph.specific_nodes()]
walk_row = order.index(walk.id)
left_row = order.index(left.id)

print("\nattention of 'walks' on 'to the left' as the edge weight sweeps:")
for w in (0.0, 0.5, 1.0, 2.0, 4.0):
    g = apply_edit(graph, EditOp(EditKind.SET_EDGE_WEIGHT, src=walk.id,
                                 dst=left.id, weight=w))
    coeff, dst = attention_coefficients(reasoner.layers[0], g, embeds)
    from hiermotion.graphreason import graph_edge_tensors

    eidx, _, _ = graph_edge_tensors(g)
    share = next(float(coeff[k]) for k in range(len(dst))
                 if dst[k] == walk_row and eidx[1][k] == left_row)
    print(f"  weight {w:3.1f} -> coefficient {share:.3f}")
print("weight 0 removes the edge; weight 1 is the plain softmax; larger "
      "weights shift mass monotonically.")
