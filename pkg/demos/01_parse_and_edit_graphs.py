"""Parse motion descriptions into hierarchical semantic graphs and edit them.

Shows the three-tier structure (motion / action / specific), the 12 edge
relations, validation, the five edit operations, and canonical JSON.
"""

from hiermotion import parse_description, to_json, validate
from hiermotion.semgraph import EditKind, EditOp, apply_edit, from_json


def show(graph, title):
    print(f"\n== {title}")
    root = graph.motion_node
    print(f"[motion] {root.text!r}")
    for action in graph.action_nodes():
        edge = graph.edge(root.id, action.id)
        print(f"  [action {action.id}] {action.text!r}  "
              f"({edge.relation.value}, w={edge.weight})")
        for spec in graph.children(action.id):
            e = graph.edge(action.id, spec.id)
            mark = " [masked]" if spec.masked else ""
            print(f"    [specific {spec.id}] {spec.text!r}  "
                  f"({e.relation.value}, w={e.weight}){mark}")


sentence = "a person walks forward, picks up an object with both hands, and stands still."
graph = parse_description(sentence)
show(graph, "parsed")
print("violations:", validate(graph) or "none")

# 1. emphasize a specific by raising its edge weight
hands = next(n for n in graph.specific_nodes() if n.text == "with both hands")
picks = next(e.src for e in graph.edges if e.dst == hands.id)
heavier = apply_edit(graph, EditOp(EditKind.SET_EDGE_WEIGHT, src=picks,
                                   dst=hands.id, weight=2.0))
show(heavier, "after weight edit (with both hands x2)")

# 2. mask a verb: text becomes the sentinel, structure stays
masked = apply_edit(graph, EditOp(EditKind.MASK_NODE,
                                  node=graph.action_nodes()[1].id))
show(masked, "after masking 'picks'")

# 3. delete an action: its specifics cascade away
dropped = apply_edit(graph, EditOp(EditKind.DELETE_NODE,
                                   node=graph.action_nodes()[1].id))
show(dropped, "after deleting 'picks'")
print("still valid:", not validate(dropped))

# canonical JSON round trip
doc = to_json(graph)
assert to_json(from_json(doc)) == doc
print(f"\ncanonical JSON round-trips byte-identically ({len(doc)} bytes)")
