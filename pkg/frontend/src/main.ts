import { RefineQueue, StudioApi } from "./api.js";
import { PlaybackState } from "./playback.js";
import { renderGraph, renderLegend, renderPlayback } from "./render.js";
import { EditOp, GenerationResponse, Level, RELATIONS, Relation } from "./types.js";
import { GraphViewModel } from "./viewmodel.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const api = new StudioApi("");
let vm: GraphViewModel | null = null;
let playback: PlaybackState | null = null;
let lockedSeed = true;
let seed = 0;

const svg = $("graph") as unknown as SVGSVGElement;
const canvas = $("playback") as HTMLCanvasElement;
const status = $("status");

function note(msg: string, isError = false): void {
  status.textContent = msg;
  status.className = isError ? "error" : "";
}

function currentSeed(): number {
  if (!lockedSeed) seed = Math.floor(Math.random() * 1_000_000);
  return seed;
}

function redrawGraph(): void {
  if (!vm) return;
  renderGraph(svg, vm, {
    onSelect(nodeId) {
      vm!.selection = vm!.selection === nodeId ? null : nodeId;
      redrawGraph();
      updateEditPanel();
    },
    onWeight(src, dst, weight) {
      vm!.queueEdit({ kind: "set_edge_weight", src, dst,
                      weight: Math.round(weight * 100) / 100 });
      redrawGraph();
      updateEditPanel();
    },
  });
}

function updateEditPanel(): void {
  const list = $("pending-edits");
  list.innerHTML = "";
  for (const op of vm?.pending ?? []) {
    const li = document.createElement("li");
    li.textContent = JSON.stringify(op);
    list.appendChild(li);
  }
  $("selection-label").textContent = vm?.selection ?? "none";
  ($("undo") as HTMLButtonElement).disabled = !vm?.canUndo;
  ($("redo") as HTMLButtonElement).disabled = !vm?.canRedo;
  ($("refine") as HTMLButtonElement).disabled = !vm || refineQueue.busy;
}

function showResponse(resp: GenerationResponse, asRefinement: boolean): void {
  if (playback && asRefinement) {
    playback.swapIn(resp.motion);
  } else {
    playback = new PlaybackState(resp.motion);
  }
  playback.playing = true;
  note(`seed ${resp.seed}, ${resp.motion.frames.length} frames, `
       + `${resp.latency_ms.toFixed(0)} ms`);
}

const refineQueue = new RefineQueue(
  async (edits: EditOp[]) => {
    if (!vm) return;
    const resp = await api.refine({ graph: vm.confirmed, edits,
                                    seed: currentSeed() });
    vm.commit(resp.graph);
    showResponse(resp, true);
    redrawGraph();
    updateEditPanel();
  },
  () => {
    const edits = vm ? [...vm.pending] : [];
    vm?.clearPending();
    return edits;
  },
);

async function parseAndShow(): Promise<void> {
  const text = ($("prompt") as HTMLInputElement).value.trim();
  if (!text) return note("enter a description first", true);
  try {
    const { graph } = await api.parse(text);
    vm = new GraphViewModel(graph);
    redrawGraph();
    updateEditPanel();
    note("parsed; generate to see motion");
  } catch (err) {
    note(String(err), true);
  }
}

async function generate(): Promise<void> {
  if (!vm) return note("parse a description first", true);
  try {
    note("generating...");
    const resp = await api.generate({ graph: vm.confirmed, seed: currentSeed() });
    vm.commit(resp.graph);
    showResponse(resp, false);
    redrawGraph();
    updateEditPanel();
  } catch (err) {
    note(String(err), true);
  }
}

function nodeEdit(kind: "mask_node" | "delete_node"): void {
  if (!vm?.selection) return note("select a node first", true);
  vm.queueEdit({ kind, node: vm.selection } as EditOp);
  redrawGraph();
  updateEditPanel();
}

function modifySelected(): void {
  if (!vm?.selection) return note("select a node first", true);
  const text = prompt("new node text:");
  if (!text) return;
  vm.queueEdit({ kind: "modify_node", node: vm.selection, text });
  redrawGraph();
  updateEditPanel();
}

function addUnderSelected(): void {
  if (!vm?.selection) return note("select a parent node first", true);
  const parent = vm.confirmed.nodes.find((n) => n.id === vm!.selection);
  if (!parent) return;
  const level: Level = parent.level === "motion" ? "action" : "specific";
  const text = prompt(`text of the new ${level} node:`);
  if (!text) return;
  let relation: Relation | null = level === "action" ? "ARGM-MA" : "ARGM-ADV";
  if (level === "specific") {
    const answer = prompt(`relation (${RELATIONS.join(", ")}):`, "ARGM-DIR");
    if (answer && (RELATIONS as readonly string[]).includes(answer)) {
      relation = answer as Relation;
    }
  }
  vm.queueEdit({ kind: "add_node", parent: parent.id, level, text, relation });
  redrawGraph();
  updateEditPanel();
}

function wire(): void {
  renderLegend($("legend"));
  $("parse").addEventListener("click", parseAndShow);
  $("generate").addEventListener("click", generate);
  $("refine").addEventListener("click", () => {
    refineQueue.submit().catch((err) => note(String(err), true));
    updateEditPanel();
  });
  $("mask").addEventListener("click", () => nodeEdit("mask_node"));
  $("delete").addEventListener("click", () => nodeEdit("delete_node"));
  $("modify").addEventListener("click", modifySelected);
  $("add").addEventListener("click", addUnderSelected);
  $("undo").addEventListener("click", () => { vm?.undo(); redrawGraph(); updateEditPanel(); });
  $("redo").addEventListener("click", () => { vm?.redo(); redrawGraph(); updateEditPanel(); });
  const lock = $("lock-seed") as HTMLInputElement;
  lock.checked = true;
  lock.addEventListener("change", () => { lockedSeed = lock.checked; });
  const seedBox = $("seed") as HTMLInputElement;
  seedBox.addEventListener("change", () => { seed = Number(seedBox.value) || 0; });
  $("play").addEventListener("click", () => { if (playback) playback.playing = !playback.playing; });

  api.health()
    .then((h) => note(`service ok; denoiser ${h.checkpoints.denoiser?.slice(0, 8)}`))
    .catch(() => note("service unreachable; start it with: hiermotion serve", true));

  let last = performance.now();
  const loop = (now: number) => {
    if (playback) {
      playback.tick((now - last) / 1000);
      renderPlayback(canvas, playback);
      ($("frame-label") as HTMLElement).textContent =
        `${playback.current + 1}/${playback.length}`;
    }
    last = now;
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

wire();
