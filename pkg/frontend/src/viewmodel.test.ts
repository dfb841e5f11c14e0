import { describe, expect, it } from "vitest";

import { EditOp, GraphDoc, graphKey } from "./types.js";
import { GraphViewModel, computeLayout } from "./viewmodel.js";

function sampleGraph(): GraphDoc {
  return {
    version: 1,
    root: "m0",
    nodes: [
      { id: "m0", level: "motion", text: "a person walks to the left.",
        span: [0, 7], masked: false },
      { id: "a0", level: "action", text: "walks", span: [2, 3], masked: false },
      { id: "s0", level: "specific", text: "to the left", span: [3, 6],
        masked: false },
    ],
    edges: [
      { src: "m0", dst: "a0", relation: "ARGM-MA", weight: 1.0 },
      { src: "a0", dst: "s0", relation: "ARGM-DIR", weight: 1.0 },
    ],
  };
}

function withWeight(graph: GraphDoc, weight: number): GraphDoc {
  return {
    ...graph,
    edges: graph.edges.map((e) =>
      e.src === "a0" && e.dst === "s0" ? { ...e, weight } : e),
  };
}

describe("GraphViewModel", () => {
  it("queues edits that serialize to valid EditOp JSON", () => {
    const vm = new GraphViewModel(sampleGraph());
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 2.0 });
    vm.queueEdit({ kind: "mask_node", node: "a0" });
    vm.queueEdit({ kind: "add_node", parent: "a0", level: "specific",
                   text: "quickly", relation: "ARGM-MNR" });
    const wire = JSON.parse(JSON.stringify(vm.pending)) as EditOp[];
    expect(wire).toHaveLength(3);
    expect(wire[0]).toEqual({ kind: "set_edge_weight", src: "a0", dst: "s0",
                              weight: 2.0 });
    expect(wire[1]).toEqual({ kind: "mask_node", node: "a0" });
    expect(wire[2]).toMatchObject({ kind: "add_node", parent: "a0",
                                    level: "specific", text: "quickly" });
  });

  it("replaces a queued weight edit for the same edge", () => {
    const vm = new GraphViewModel(sampleGraph());
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 1.5 });
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 2.0 });
    expect(vm.pending).toHaveLength(1);
    expect(vm.effectiveWeight("a0", "s0")).toBe(2.0);
  });

  it("shows confirmed graph plus pending weight overrides", () => {
    const vm = new GraphViewModel(sampleGraph());
    expect(vm.effectiveWeight("a0", "s0")).toBe(1.0);
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 0.5 });
    expect(vm.effectiveWeight("a0", "s0")).toBe(0.5);
    expect(vm.confirmed.edges[1].weight).toBe(1.0); // confirmed untouched
  });

  it("commit clears pending and feeds the undo history", () => {
    const vm = new GraphViewModel(sampleGraph());
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 2.0 });
    vm.commit(withWeight(sampleGraph(), 2.0));
    expect(vm.pending).toHaveLength(0);
    expect(vm.canUndo).toBe(true);
    expect(vm.effectiveWeight("a0", "s0")).toBe(2.0);
  });

  it("undo and redo are exact on graph JSON", () => {
    const g0 = sampleGraph();
    const g1 = withWeight(sampleGraph(), 2.0);
    const g2 = withWeight(sampleGraph(), 0.5);
    const vm = new GraphViewModel(g0);
    vm.commit(g1);
    vm.commit(g2);
    expect(graphKey(vm.confirmed)).toBe(graphKey(g2));
    vm.undo();
    expect(graphKey(vm.confirmed)).toBe(graphKey(g1));
    vm.undo();
    expect(graphKey(vm.confirmed)).toBe(graphKey(g0));
    expect(vm.canUndo).toBe(false);
    vm.redo();
    vm.redo();
    expect(graphKey(vm.confirmed)).toBe(graphKey(g2));
    expect(vm.canRedo).toBe(false);
  });

  it("a new commit invalidates the redo branch", () => {
    const vm = new GraphViewModel(sampleGraph());
    vm.commit(withWeight(sampleGraph(), 2.0));
    vm.undo();
    vm.commit(withWeight(sampleGraph(), 3.0));
    expect(vm.canRedo).toBe(false);
  });

  it("pendingFor surfaces edits touching a node", () => {
    const vm = new GraphViewModel(sampleGraph());
    vm.queueEdit({ kind: "mask_node", node: "a0" });
    vm.queueEdit({ kind: "set_edge_weight", src: "a0", dst: "s0", weight: 2 });
    expect(vm.pendingFor("a0")).toHaveLength(2);
    expect(vm.pendingFor("s0")).toHaveLength(1);
    expect(vm.pendingFor("m0")).toHaveLength(0);
  });
});

describe("computeLayout", () => {
  it("places the three levels on three tiers", () => {
    const pos = computeLayout(sampleGraph(), 900);
    const byId = new Map(pos.map((p) => [p.id, p]));
    expect(byId.get("m0")!.y).toBeLessThan(byId.get("a0")!.y);
    expect(byId.get("a0")!.y).toBeLessThan(byId.get("s0")!.y);
  });

  it("spreads sibling specifics under their action", () => {
    const g = sampleGraph();
    g.nodes.push({ id: "s1", level: "specific", text: "quickly", span: [0, 1],
                   masked: false });
    g.edges.push({ src: "a0", dst: "s1", relation: "ARGM-MNR", weight: 1 });
    const byId = new Map(computeLayout(g, 900).map((p) => [p.id, p]));
    expect(byId.get("s0")!.x).not.toBe(byId.get("s1")!.x);
    expect(byId.get("s0")!.y).toBe(byId.get("s1")!.y);
  });

  it("positions every node exactly once", () => {
    const pos = computeLayout(sampleGraph(), 600);
    expect(new Set(pos.map((p) => p.id)).size).toBe(3);
    expect(pos).toHaveLength(3);
  });
});
