/** Wire types mirrored from the service's graph and generation schemas. */

export type Level = "motion" | "action" | "specific";

export const RELATIONS = [
  "ARG0", "ARG1", "ARG2", "ARG3", "ARG4",
  "ARGM-LOC", "ARGM-MNR", "ARGM-TMP", "ARGM-DIR", "ARGM-ADV",
  "ARGM-MA", "OTHERS",
] as const;

export type Relation = (typeof RELATIONS)[number];

export interface NodeDoc {
  id: string;
  level: Level;
  text: string;
  span: [number, number];
  masked: boolean;
}

export interface EdgeDoc {
  src: string;
  dst: string;
  relation: Relation;
  weight: number;
}

export interface GraphDoc {
  version: number;
  root: string;
  nodes: NodeDoc[];
  edges: EdgeDoc[];
}

export type EditOp =
  | { kind: "set_edge_weight"; src: string; dst: string; weight: number }
  | { kind: "mask_node"; node: string }
  | { kind: "modify_node"; node: string; text: string }
  | { kind: "delete_node"; node: string }
  | { kind: "add_node"; parent: string; level: Level; text: string;
      relation: Relation | null };

export interface MotionPayload {
  fps: number;
  frames: number[][];
  joint_count: number;
}

export interface GenerationResponse {
  graph: GraphDoc;
  seed: number;
  motion: MotionPayload;
  levels: Record<Level, MotionPayload>;
  latency_ms: number;
  edits?: Record<string, unknown>[];
}

export function graphKey(graph: GraphDoc): string {
  // canonical-enough key for exact-equality checks: the server already emits
  // canonicalized node/edge order
  return JSON.stringify(graph);
}
