import { allRelationStyles, relationStyle, strokeWidthFor } from "./relations.js";
import { GraphDoc } from "./types.js";
import { GraphViewModel, computeLayout } from "./viewmodel.js";
import { PlaybackState, rootTrack } from "./playback.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof SVGElementTagNameMap>(tag: K,
    attrs: Record<string, string | number>): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, String(v));
  return node;
}

export interface GraphCallbacks {
  onSelect(nodeId: string): void;
  onWeight(src: string, dst: string, weight: number): void;
}

/** Node-link view: three tiers, relation-styled edges with numeric weights,
 * weight sliders on edges, masked badge, selection highlight. */
export function renderGraph(svg: SVGSVGElement, vm: GraphViewModel,
                            cb: GraphCallbacks): void {
  svg.innerHTML = "";
  const graph: GraphDoc = vm.confirmed;
  const width = svg.clientWidth || 900;
  const positions = new Map(computeLayout(graph, width).map((p) => [p.id, p]));

  for (const edge of graph.edges) {
    const a = positions.get(edge.src);
    const b = positions.get(edge.dst);
    if (!a || !b) continue;
    const style = relationStyle(edge.relation);
    const weight = vm.effectiveWeight(edge.src, edge.dst);
    const line = el("line", {
      x1: a.x, y1: a.y + 18, x2: b.x, y2: b.y - 18,
      stroke: style.color, "stroke-width": strokeWidthFor(weight),
    });
    if (style.dash) line.setAttribute("stroke-dasharray", style.dash);
    svg.appendChild(line);

    const mx = (a.x + b.x) / 2;
    const my = (a.y + b.y) / 2;
    const label = el("text", { x: mx + 6, y: my - 4, class: "edge-label",
                               fill: style.color });
    label.textContent = `${edge.relation} w=${weight.toFixed(2)}`;
    svg.appendChild(label);

    const grip = el("circle", { cx: mx, cy: my, r: 7, class: "weight-grip",
                                fill: style.color });
    grip.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const delta = ev.deltaY < 0 ? 0.1 : -0.1;
      cb.onWeight(edge.src, edge.dst, Math.max(0, weight + delta));
    });
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${edge.src} -> ${edge.dst} (${style.label}); scroll to change weight`;
    grip.appendChild(title);
    svg.appendChild(grip);
  }

  for (const node of graph.nodes) {
    const p = positions.get(node.id);
    if (!p) continue;
    const group = el("g", { class: "node-group" });
    const w = Math.max(70, 9 * node.text.length + 18);
    const rect = el("rect", {
      x: p.x - w / 2, y: p.y - 18, width: w, height: 36, rx: 9,
      class: `node node-${node.level}` +
        (vm.selection === node.id ? " selected" : "") +
        (vm.pendingFor(node.id).length ? " pending" : ""),
    });
    group.appendChild(rect);
    const text = el("text", { x: p.x, y: p.y + 5, "text-anchor": "middle",
                              class: "node-text" });
    text.textContent = node.masked ? "[MASK]" : node.text;
    group.appendChild(text);
    if (node.masked) {
      const badge = el("text", { x: p.x + w / 2 - 10, y: p.y - 22,
                                 class: "mask-badge" });
      badge.textContent = "M";
      group.appendChild(badge);
    }
    group.addEventListener("click", () => cb.onSelect(node.id));
    svg.appendChild(group);
  }
}

export function renderLegend(container: HTMLElement): void {
  container.innerHTML = "";
  for (const [relation, style] of allRelationStyles()) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElementNS(SVG_NS, "svg");
    swatch.setAttribute("width", "26");
    swatch.setAttribute("height", "10");
    const line = el("line", { x1: 0, y1: 5, x2: 26, y2: 5, stroke: style.color,
                              "stroke-width": 3 });
    if (style.dash) line.setAttribute("stroke-dasharray", style.dash);
    swatch.appendChild(line);
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(` ${relation}`));
    container.appendChild(item);
  }
}

/** Canvas playback: frontal stick figure plus a top-down root trajectory,
 * with the previous result ghost-overlaid. */
export function renderPlayback(canvas: HTMLCanvasElement, state: PlaybackState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);

  const figX = width * 0.28;
  const figY = height * 0.78;
  const scale = height * 0.28;

  const drawFigure = (segs: ReturnType<PlaybackState["currentSegments"]>,
                      color: string, lineWidth: number) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = lineWidth;
    ctx.lineCap = "round";
    for (const seg of segs) {
      ctx.beginPath();
      ctx.moveTo(figX + seg.a.x * scale, figY - seg.a.y * scale);
      ctx.lineTo(figX + seg.b.x * scale, figY - seg.b.y * scale);
      ctx.stroke();
    }
  };
  const ghost = state.ghostSegments();
  if (ghost) drawFigure(ghost, "rgba(140,140,160,0.45)", 5);
  drawFigure(state.currentSegments(), "#2b6cb0", 5);

  // top-down trajectory on the right half; x axis = leftward, z = forward
  const mapX = width * 0.72;
  const mapY = height * 0.5;
  const mapScale = 28;
  ctx.strokeStyle = "#bbb";
  ctx.lineWidth = 1;
  ctx.strokeRect(width * 0.52, 10, width * 0.44, height - 20);
  const drawTrack = (frames: number[][], color: string, upTo: number) => {
    const track = rootTrack(frames);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    track.forEach(([x, z], i) => {
      const px = mapX - x * mapScale;   // +x (left) renders leftwards
      const py = mapY - z * mapScale;   // +z (forward) renders upwards
      if (i === 0) ctx.moveTo(px, py); else ctx.lineTo(px, py);
    });
    ctx.stroke();
    const head = track[Math.min(upTo, track.length - 1)];
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(mapX - head[0] * mapScale, mapY - head[1] * mapScale, 4, 0, 2 * Math.PI);
    ctx.fill();
  };
  if (state.ghost) drawTrack(state.ghost, "rgba(140,140,160,0.5)", state.current);
  drawTrack(state.frames, "#c53030", state.current);
}
