import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, RefineQueue, StudioApi } from "./api.js";
import { EditOp, GraphDoc } from "./types.js";

const graph: GraphDoc = {
  version: 1,
  root: "m0",
  nodes: [{ id: "m0", level: "motion", text: "x.", span: [0, 1], masked: false }],
  edges: [],
};

function okResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200, headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("StudioApi", () => {
  it("posts refine with graph, edits and the locked seed", async () => {
    const calls: Array<{ url: string; body: any }> = [];
    vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
      calls.push({ url, body: JSON.parse(String(init?.body)) });
      return okResponse({ graph, seed: 7, motion: { fps: 20, frames: [], joint_count: 5 },
                          levels: {}, latency_ms: 1 });
    });
    const api = new StudioApi("http://svc");
    const edits: EditOp[] = [{ kind: "set_edge_weight", src: "a0", dst: "s0",
                               weight: 2 }];
    await api.refine({ graph, edits, seed: 7 });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://svc/refine");
    expect(calls[0].body).toEqual({ graph, edits, seed: 7 });
  });

  it("raises ApiError with the status on failures", async () => {
    vi.stubGlobal("fetch", async () => new Response("bad graph", { status: 400 }));
    const api = new StudioApi("");
    await expect(api.parse("x")).rejects.toMatchObject({ status: 400 });
    await expect(api.parse("x")).rejects.toBeInstanceOf(ApiError);
  });
});

describe("RefineQueue", () => {
  it("keeps a single request in flight and batches later edits", async () => {
    const running: number[] = [];
    const batches: EditOp[][] = [];
    let pending: EditOp[] = [];
    let release!: () => void;
    const gate = new Promise<void>((r) => { release = r; });

    const queue = new RefineQueue(
      async (edits) => {
        running.push(running.length + 1);
        batches.push(edits);
        if (batches.length === 1) await gate; // hold the first request open
      },
      () => {
        const out = pending;
        pending = [];
        return out;
      },
    );

    pending = [{ kind: "mask_node", node: "a0" }];
    const first = queue.submit();
    expect(queue.busy).toBe(true);
    await new Promise((r) => setTimeout(r, 0)); // let the first request start

    // user queues more edits while the first request is in flight
    pending = [{ kind: "delete_node", node: "s0" }];
    const second = queue.submit();
    await new Promise((r) => setTimeout(r, 0));
    expect(batches).toHaveLength(1); // second not started yet

    release();
    await first;
    await second;
    expect(batches).toHaveLength(2);
    expect(batches[0]).toEqual([{ kind: "mask_node", node: "a0" }]);
    expect(batches[1]).toEqual([{ kind: "delete_node", node: "s0" }]);
    expect(queue.busy).toBe(false);
  });

  it("an error does not wedge the queue", async () => {
    let first = true;
    const queue = new RefineQueue(
      async () => {
        if (first) {
          first = false;
          throw new Error("boom");
        }
      },
      () => [],
    );
    await expect(queue.submit()).rejects.toThrow("boom");
    await expect(queue.submit()).resolves.toBeUndefined();
  });
});
