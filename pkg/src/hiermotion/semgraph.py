"""Hierarchical semantic graphs: typed nodes, relational edges, edits, JSON.

A graph has exactly one motion node (the root, carrying the whole sentence),
action nodes (one per verb) hanging off the root, and specific nodes (attribute
phrases) hanging off their actions.  All operations here are pure: edits return
new graphs and never touch the input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Optional

GRAPH_SCHEMA_VERSION = 1

MASK_TOKEN = "[MASK]"


class Level(str, Enum):
    MOTION = "motion"
    ACTION = "action"
    SPECIFIC = "specific"


_LEVEL_RANK = {Level.MOTION: 0, Level.ACTION: 1, Level.SPECIFIC: 2}


class Relation(str, Enum):
    """The twelve edge relations. ARGM_MA links motion to action nodes; the
    rest label the semantic role of a specific with respect to its action."""

    ARG0 = "ARG0"            # agent
    ARG1 = "ARG1"            # patient
    ARG2 = "ARG2"            # instrument, benefactive
    ARG3 = "ARG3"            # start point
    ARG4 = "ARG4"            # end point
    ARGM_LOC = "ARGM-LOC"    # location
    ARGM_MNR = "ARGM-MNR"    # manner
    ARGM_TMP = "ARGM-TMP"    # time
    ARGM_DIR = "ARGM-DIR"    # direction
    ARGM_ADV = "ARGM-ADV"    # miscellaneous adverbial
    ARGM_MA = "ARGM-MA"      # motion-action dependency
    OTHERS = "OTHERS"        # anything else


RELATION_VALUES = tuple(r.value for r in Relation)
NUM_RELATIONS = len(RELATION_VALUES)

#: relations legal on an action -> specific edge (everything but ARGM-MA)
ARGUMENT_RELATIONS = tuple(r for r in Relation if r is not Relation.ARGM_MA)


class GraphError(Exception):
    """Base class for graph construction/edit errors."""


class UnknownNode(GraphError):
    pass


class UnknownEdge(GraphError):
    pass


class CannotDeleteRoot(GraphError):
    pass


class InvalidAttachment(GraphError):
    pass


class InvalidEdit(GraphError):
    """Edit payload malformed for its kind (e.g. negative weight)."""


class SchemaViolation(GraphError):
    """Raised by from_json; carries the path of the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class GraphNode:
    id: str
    level: Level
    text: str
    span: tuple[int, int]  # half-open token range in the source sentence
    masked: bool = False


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    relation: Relation
    weight: float = 1.0


@dataclass(frozen=True)
class SemanticGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    root: str

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def edge(self, src: str, dst: str) -> GraphEdge:
        for e in self.edges:
            if e.src == src and e.dst == dst:
                return e
        raise UnknownEdge(f"{src}->{dst}")

    def children(self, node_id: str) -> list[GraphNode]:
        ids = [e.dst for e in self.edges if e.src == node_id]
        return [self.node(i) for i in ids]

    def parent(self, node_id: str) -> Optional[GraphNode]:
        for e in self.edges:
            if e.dst == node_id:
                return self.node(e.src)
        return None

    def nodes_at(self, level: Level) -> list[GraphNode]:
        return [n for n in self.nodes if n.level == level]

    @property
    def motion_node(self) -> GraphNode:
        return self.node(self.root)

    def action_nodes(self) -> list[GraphNode]:
        return self.nodes_at(Level.ACTION)

    def specific_nodes(self) -> list[GraphNode]:
        return self.nodes_at(Level.SPECIFIC)


@dataclass(frozen=True)
class Violation:
    invariant: str   # short name of the broken invariant
    subject: str     # node id or "src->dst" edge label
    message: str


def validate(graph: SemanticGraph) -> list[Violation]:
    """Check every structural invariant; violations are data, not exceptions."""
    out: list[Violation] = []
    ids = [n.id for n in graph.nodes]
    id_set = set(ids)
    if len(ids) != len(id_set):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        for d in dupes:
            out.append(Violation("unique-node-ids", d, f"node id {d!r} appears more than once"))

    motions = graph.nodes_at(Level.MOTION)
    if len(motions) != 1:
        subject = ", ".join(n.id for n in motions) or "<none>"
        out.append(Violation("single-motion-root", subject,
                             f"expected exactly one motion node, found {len(motions)}"))
    elif motions[0].id != graph.root:
        out.append(Violation("single-motion-root", motions[0].id,
                             f"motion node {motions[0].id!r} is not the declared root {graph.root!r}"))

    for e in graph.edges:
        label = f"{e.src}->{e.dst}"
        if e.src not in id_set:
            out.append(Violation("edge-endpoints-exist", label, f"src {e.src!r} does not exist"))
            continue
        if e.dst not in id_set:
            out.append(Violation("edge-endpoints-exist", label, f"dst {e.dst!r} does not exist"))
            continue
        if e.weight < 0:
            out.append(Violation("nonnegative-weight", label, f"weight {e.weight} is negative"))
        src, dst = graph.node(e.src), graph.node(e.dst)
        if src.level == Level.MOTION and dst.level == Level.ACTION:
            if e.relation not in (Relation.ARGM_MA, Relation.OTHERS):
                out.append(Violation("motion-action-relation", label,
                                     f"motion->action edge carries {e.relation.value}, "
                                     f"expected {Relation.ARGM_MA.value}"))
        elif src.level == Level.ACTION and dst.level == Level.SPECIFIC:
            if e.relation == Relation.ARGM_MA:
                out.append(Violation("action-specific-relation", label,
                                     "action->specific edge must carry an argument relation, "
                                     f"not {Relation.ARGM_MA.value}"))
        else:
            out.append(Violation("level-topology", label,
                                 f"edge {src.level.value}->{dst.level.value} is not allowed"))

    incoming: dict[str, list[GraphEdge]] = {i: [] for i in id_set}
    for e in graph.edges:
        if e.dst in incoming:
            incoming[e.dst].append(e)

    for n in graph.nodes:
        if n.level == Level.ACTION:
            ins = [e for e in incoming[n.id] if graph.has_node(e.src)
                   and graph.node(e.src).level == Level.MOTION]
            if len(incoming[n.id]) != 1 or len(ins) != 1:
                out.append(Violation("action-incoming", n.id,
                                     f"action node must have exactly one incoming motion edge, "
                                     f"found {len(incoming[n.id])}"))
        elif n.level == Level.SPECIFIC:
            ins = [e for e in incoming[n.id] if graph.has_node(e.src)
                   and graph.node(e.src).level == Level.ACTION]
            if len(incoming[n.id]) != 1 or len(ins) != 1:
                out.append(Violation("specific-incoming", n.id,
                                     f"specific node must have exactly one incoming action edge, "
                                     f"found {len(incoming[n.id])}"))
        elif n.level == Level.MOTION and incoming[n.id]:
            out.append(Violation("root-no-incoming", n.id, "motion node must not have incoming edges"))
        if n.span[0] < 0 or n.span[1] < n.span[0]:
            out.append(Violation("span-wellformed", n.id, f"span {n.span} is not a valid range"))

    # cycle check over directed edges (defensive: level topology already forbids them)
    adj: dict[str, list[str]] = {i: [] for i in id_set}
    for e in graph.edges:
        if e.src in adj and e.dst in id_set:
            adj[e.src].append(e.dst)
    state: dict[str, int] = {}

    def dfs(u: str) -> bool:
        state[u] = 1
        for v in adj[u]:
            if state.get(v) == 1:
                return True
            if state.get(v, 0) == 0 and dfs(v):
                return True
        state[u] = 2
        return False

    for i in id_set:
        if state.get(i, 0) == 0 and dfs(i):
            out.append(Violation("acyclic", i, "graph contains a directed cycle"))
            break
    return out


# ---------------------------------------------------------------------------
# Edit operations


class EditKind(str, Enum):
    SET_EDGE_WEIGHT = "set_edge_weight"
    MASK_NODE = "mask_node"
    MODIFY_NODE = "modify_node"
    DELETE_NODE = "delete_node"
    ADD_NODE = "add_node"


@dataclass(frozen=True)
class EditOp:
    kind: EditKind
    # set_edge_weight
    src: Optional[str] = None
    dst: Optional[str] = None
    weight: Optional[float] = None
    # node-targeting kinds
    node: Optional[str] = None
    text: Optional[str] = None
    # add_node
    parent: Optional[str] = None
    level: Optional[Level] = None
    relation: Optional[Relation] = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value}
        if self.kind == EditKind.SET_EDGE_WEIGHT:
            d.update(src=self.src, dst=self.dst, weight=self.weight)
        elif self.kind in (EditKind.MASK_NODE, EditKind.DELETE_NODE):
            d.update(node=self.node)
        elif self.kind == EditKind.MODIFY_NODE:
            d.update(node=self.node, text=self.text)
        elif self.kind == EditKind.ADD_NODE:
            d.update(parent=self.parent, level=self.level.value if self.level else None,
                     text=self.text, relation=self.relation.value if self.relation else None)
        return d

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "EditOp":
        try:
            kind = EditKind(d["kind"])
        except (KeyError, ValueError) as exc:
            raise InvalidEdit(f"unknown or missing edit kind: {d.get('kind')!r}") from exc
        if kind == EditKind.SET_EDGE_WEIGHT:
            if "src" not in d or "dst" not in d or "weight" not in d:
                raise InvalidEdit("set_edge_weight needs src, dst, weight")
            return EditOp(kind, src=str(d["src"]), dst=str(d["dst"]), weight=float(d["weight"]))
        if kind in (EditKind.MASK_NODE, EditKind.DELETE_NODE):
            if "node" not in d:
                raise InvalidEdit(f"{kind.value} needs node")
            return EditOp(kind, node=str(d["node"]))
        if kind == EditKind.MODIFY_NODE:
            if "node" not in d or "text" not in d:
                raise InvalidEdit("modify_node needs node and text")
            return EditOp(kind, node=str(d["node"]), text=str(d["text"]))
        # add_node
        if "parent" not in d or "level" not in d or "text" not in d:
            raise InvalidEdit("add_node needs parent, level, text")
        try:
            level = Level(d["level"])
        except ValueError as exc:
            raise InvalidEdit(f"unknown level {d['level']!r}") from exc
        relation = None
        if d.get("relation") is not None:
            try:
                relation = Relation(d["relation"])
            except ValueError as exc:
                raise InvalidEdit(f"unknown relation {d['relation']!r}") from exc
        return EditOp(kind, parent=str(d["parent"]), level=level,
                      text=str(d["text"]), relation=relation)


def _fresh_id(graph: SemanticGraph, level: Level) -> str:
    prefix = {Level.MOTION: "m", Level.ACTION: "a", Level.SPECIFIC: "s"}[level]
    taken = {n.id for n in graph.nodes}
    k = 0
    while f"{prefix}{k}" in taken:
        k += 1
    return f"{prefix}{k}"


def apply_edit(graph: SemanticGraph, op: EditOp) -> SemanticGraph:
    """Apply one edit, returning a new graph; the input is never mutated."""
    if op.kind == EditKind.SET_EDGE_WEIGHT:
        if op.weight is None or op.weight < 0:
            raise InvalidEdit(f"edge weight must be >= 0, got {op.weight}")
        if not graph.has_node(op.src or ""):
            raise UnknownNode(op.src)
        if not graph.has_node(op.dst or ""):
            raise UnknownNode(op.dst)
        hit = False
        edges = []
        for e in graph.edges:
            if e.src == op.src and e.dst == op.dst:
                edges.append(replace(e, weight=float(op.weight)))
                hit = True
            else:
                edges.append(e)
        if not hit:
            raise UnknownEdge(f"{op.src}->{op.dst}")
        return replace(graph, edges=tuple(edges))

    if op.kind == EditKind.MASK_NODE:
        target = graph.node(op.node or "")
        nodes = tuple(replace(n, text=MASK_TOKEN, masked=True) if n.id == target.id else n
                      for n in graph.nodes)
        return replace(graph, nodes=nodes)

    if op.kind == EditKind.MODIFY_NODE:
        target = graph.node(op.node or "")
        if not op.text:
            raise InvalidEdit("modify_node needs non-empty text")
        nodes = tuple(replace(n, text=op.text, masked=False) if n.id == target.id else n
                      for n in graph.nodes)
        return replace(graph, nodes=nodes)

    if op.kind == EditKind.DELETE_NODE:
        target = graph.node(op.node or "")
        if target.id == graph.root:
            raise CannotDeleteRoot(target.id)
        doomed = {target.id}
        if target.level == Level.ACTION:
            doomed |= {e.dst for e in graph.edges if e.src == target.id}
        nodes = tuple(n for n in graph.nodes if n.id not in doomed)
        edges = tuple(e for e in graph.edges if e.src not in doomed and e.dst not in doomed)
        return replace(graph, nodes=nodes, edges=edges)

    # ADD_NODE
    if op.level is None or not op.text:
        raise InvalidEdit("add_node needs level and non-empty text")
    parent = graph.node(op.parent or "")
    if op.level == Level.MOTION:
        raise InvalidAttachment("cannot add a second motion node")
    if op.level == Level.ACTION:
        if parent.level != Level.MOTION:
            raise InvalidAttachment(f"action node must attach to the motion node, "
                                    f"not {parent.level.value} {parent.id!r}")
        relation = op.relation or Relation.ARGM_MA
        if relation != Relation.ARGM_MA:
            raise InvalidAttachment(f"motion->action edge must carry {Relation.ARGM_MA.value}")
    else:
        if parent.level != Level.ACTION:
            raise InvalidAttachment(f"specific node must attach to an action node, "
                                    f"not {parent.level.value} {parent.id!r}")
        relation = op.relation or Relation.OTHERS
        if relation == Relation.ARGM_MA:
            raise InvalidAttachment("action->specific edge cannot carry ARGM-MA")
    new = GraphNode(id=_fresh_id(graph, op.level), level=op.level, text=op.text,
                    span=(0, 0), masked=False)
    return replace(graph,
                   nodes=graph.nodes + (new,),
                   edges=graph.edges + (GraphEdge(parent.id, new.id, relation, 1.0),))


def apply_edits(graph: SemanticGraph, ops: Iterable[EditOp]) -> SemanticGraph:
    for op in ops:
        graph = apply_edit(graph, op)
    return graph


# ---------------------------------------------------------------------------
# Canonical JSON

def _node_sort_key(n: GraphNode):
    return (_LEVEL_RANK[n.level], n.span[0], n.span[1], n.id)


def canonicalize(graph: SemanticGraph) -> SemanticGraph:
    """Order nodes by (level, span, id) and edges by (src, dst, relation)."""
    nodes = tuple(sorted(graph.nodes, key=_node_sort_key))
    edges = tuple(sorted(graph.edges, key=lambda e: (e.src, e.dst, e.relation.value)))
    return replace(graph, nodes=nodes, edges=edges)


def to_dict(graph: SemanticGraph) -> dict[str, Any]:
    g = canonicalize(graph)
    return {
        "version": GRAPH_SCHEMA_VERSION,
        "root": g.root,
        "nodes": [
            {"id": n.id, "level": n.level.value, "text": n.text,
             "span": [n.span[0], n.span[1]], "masked": n.masked}
            for n in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "relation": e.relation.value, "weight": e.weight}
            for e in g.edges
        ],
    }


def to_json(graph: SemanticGraph) -> str:
    return json.dumps(to_dict(graph), indent=2, sort_keys=True)


def _expect(doc: Any, path: str, typ) -> Any:
    if not isinstance(doc, typ):
        raise SchemaViolation(path, f"expected {typ.__name__}, got {type(doc).__name__}")
    return doc


def from_dict(doc: dict[str, Any]) -> SemanticGraph:
    _expect(doc, "$", dict)
    for key in ("version", "root", "nodes", "edges"):
        if key not in doc:
            raise SchemaViolation(f"$.{key}", "missing required field")
    version = doc["version"]
    if version != GRAPH_SCHEMA_VERSION:
        raise SchemaViolation("$.version",
                              f"unsupported version {version!r}, expected {GRAPH_SCHEMA_VERSION}")
    root = _expect(doc["root"], "$.root", str)
    nodes = []
    for i, nd in enumerate(_expect(doc["nodes"], "$.nodes", list)):
        path = f"$.nodes[{i}]"
        _expect(nd, path, dict)
        for key in ("id", "level", "text", "span", "masked"):
            if key not in nd:
                raise SchemaViolation(f"{path}.{key}", "missing required field")
        try:
            level = Level(nd["level"])
        except ValueError:
            raise SchemaViolation(f"{path}.level",
                                  f"unknown level {nd['level']!r}; legal values: "
                                  f"{[lv.value for lv in Level]}")
        span = _expect(nd["span"], f"{path}.span", list)
        if len(span) != 2 or not all(isinstance(x, int) for x in span):
            raise SchemaViolation(f"{path}.span", "span must be a pair of integers")
        nodes.append(GraphNode(id=_expect(nd["id"], f"{path}.id", str),
                               level=level,
                               text=_expect(nd["text"], f"{path}.text", str),
                               span=(span[0], span[1]),
                               masked=_expect(nd["masked"], f"{path}.masked", bool)))
    edges = []
    for i, ed in enumerate(_expect(doc["edges"], "$.edges", list)):
        path = f"$.edges[{i}]"
        _expect(ed, path, dict)
        for key in ("src", "dst", "relation"):
            if key not in ed:
                raise SchemaViolation(f"{path}.{key}", "missing required field")
        try:
            relation = Relation(ed["relation"])
        except ValueError:
            raise SchemaViolation(f"{path}.relation",
                                  f"unknown relation {ed['relation']!r}; legal values: "
                                  f"{list(RELATION_VALUES)}")
        weight = ed.get("weight", 1.0)
        if not isinstance(weight, (int, float)) or isinstance(weight, bool):
            raise SchemaViolation(f"{path}.weight", "weight must be a number")
        edges.append(GraphEdge(src=_expect(ed["src"], f"{path}.src", str),
                               dst=_expect(ed["dst"], f"{path}.dst", str),
                               relation=relation, weight=float(weight)))
    return canonicalize(SemanticGraph(nodes=tuple(nodes), edges=tuple(edges), root=root))


def from_json(text: str) -> SemanticGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("$", f"not valid JSON: {exc}") from exc
    return from_dict(doc)
