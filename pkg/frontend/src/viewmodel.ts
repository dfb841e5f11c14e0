import { EditOp, GraphDoc, Level, graphKey } from "./types.js";

export interface NodePosition {
  id: string;
  x: number;
  y: number;
}

const TIER_Y: Record<Level, number> = { motion: 60, action: 180, specific: 300 };

/** Three-tier layout: motion on top, actions in the middle, specifics below,
 * each tier spread evenly and specifics grouped under their action. */
export function computeLayout(graph: GraphDoc, width = 900): NodePosition[] {
  const positions: NodePosition[] = [];
  const actions = graph.nodes.filter((n) => n.level === "action");
  const specifics = graph.nodes.filter((n) => n.level === "specific");
  positions.push({ id: graph.root, x: width / 2, y: TIER_Y.motion });

  const slot = width / (actions.length + 1);
  const actionX = new Map<string, number>();
  actions.forEach((node, i) => {
    const x = slot * (i + 1);
    actionX.set(node.id, x);
    positions.push({ id: node.id, x, y: TIER_Y.action });
  });

  const byParent = new Map<string, string[]>();
  for (const edge of graph.edges) {
    if (specifics.some((s) => s.id === edge.dst)) {
      const list = byParent.get(edge.src) ?? [];
      list.push(edge.dst);
      byParent.set(edge.src, list);
    }
  }
  for (const [parent, kids] of byParent) {
    const cx = actionX.get(parent) ?? width / 2;
    const spread = Math.min(slot * 0.9, kids.length * 110);
    kids.forEach((id, i) => {
      const x = kids.length === 1 ? cx
        : cx - spread / 2 + (spread * i) / (kids.length - 1);
      positions.push({ id, x, y: TIER_Y.specific });
    });
  }
  return positions;
}

/**
 * The studio's graph state: the last server-confirmed graph, the queue of
 * pending edits (serialized as EditOp JSON for /refine), and an exact
 * undo/redo history over confirmed graphs.
 */
export class GraphViewModel {
  confirmed: GraphDoc;
  pending: EditOp[] = [];
  selection: string | null = null;
  private past: GraphDoc[] = [];
  private future: GraphDoc[] = [];

  constructor(graph: GraphDoc) {
    this.confirmed = graph;
  }

  /** Queue an edit; set_edge_weight on an already-queued edge replaces it. */
  queueEdit(op: EditOp): void {
    if (op.kind === "set_edge_weight") {
      this.pending = this.pending.filter(
        (p) => !(p.kind === "set_edge_weight" && p.src === op.src && p.dst === op.dst));
    }
    this.pending.push(op);
  }

  clearPending(): void {
    this.pending = [];
  }

  /** Displayed weight of an edge = confirmed weight + any pending override. */
  effectiveWeight(src: string, dst: string): number {
    for (let i = this.pending.length - 1; i >= 0; i--) {
      const op = this.pending[i];
      if (op.kind === "set_edge_weight" && op.src === src && op.dst === dst) {
        return op.weight;
      }
    }
    const edge = this.confirmed.edges.find((e) => e.src === src && e.dst === dst);
    return edge ? edge.weight : 1.0;
  }

  pendingFor(nodeId: string): EditOp[] {
    return this.pending.filter((op) =>
      ("node" in op && op.node === nodeId) ||
      ("parent" in op && op.parent === nodeId) ||
      (op.kind === "set_edge_weight" && (op.src === nodeId || op.dst === nodeId)));
  }

  /** Server confirmed a refine: the new graph becomes current, pending edits
   * clear into history, and redo is invalidated. */
  commit(newGraph: GraphDoc): void {
    this.past.push(this.confirmed);
    this.future = [];
    this.confirmed = newGraph;
    this.pending = [];
  }

  get canUndo(): boolean {
    return this.past.length > 0;
  }

  get canRedo(): boolean {
    return this.future.length > 0;
  }

  undo(): GraphDoc {
    const prev = this.past.pop();
    if (!prev) throw new Error("nothing to undo");
    this.future.push(this.confirmed);
    this.confirmed = prev;
    this.pending = [];
    return prev;
  }

  redo(): GraphDoc {
    const next = this.future.pop();
    if (!next) throw new Error("nothing to redo");
    this.past.push(this.confirmed);
    this.confirmed = next;
    this.pending = [];
    return next;
  }

  equalsConfirmed(graph: GraphDoc): boolean {
    return graphKey(this.confirmed) === graphKey(graph);
  }
}
