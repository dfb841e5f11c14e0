import { RELATIONS, Relation } from "./types.js";

export interface RelationStyle {
  color: string;
  dash: string;   // SVG stroke-dasharray ("" = solid)
  label: string;
}

/** Distinct color + dash per relation so all 12 are tellable apart. */
const STYLES: Record<Relation, RelationStyle> = {
  "ARG0":     { color: "#e6194b", dash: "",      label: "agent" },
  "ARG1":     { color: "#3cb44b", dash: "",      label: "patient" },
  "ARG2":     { color: "#4363d8", dash: "",      label: "instrument" },
  "ARG3":     { color: "#f58231", dash: "6 3",   label: "start point" },
  "ARG4":     { color: "#911eb4", dash: "6 3",   label: "end point" },
  "ARGM-LOC": { color: "#42d4f4", dash: "2 3",   label: "location" },
  "ARGM-MNR": { color: "#f032e6", dash: "",      label: "manner" },
  "ARGM-TMP": { color: "#bfef45", dash: "2 3",   label: "time" },
  "ARGM-DIR": { color: "#fabed4", dash: "",      label: "direction" },
  "ARGM-ADV": { color: "#469990", dash: "8 2 2 2", label: "adverbial" },
  "ARGM-MA":  { color: "#9a6324", dash: "",      label: "motion-action" },
  "OTHERS":   { color: "#a9a9a9", dash: "1 3",   label: "other" },
};

export function relationStyle(relation: Relation): RelationStyle {
  return STYLES[relation];
}

export function allRelationStyles(): Array<[Relation, RelationStyle]> {
  return RELATIONS.map((r) => [r, STYLES[r]]);
}

/** Edge stroke width encodes the user weight (weight 1 -> 2px). */
export function strokeWidthFor(weight: number): number {
  return Math.max(0.5, 2 * Math.sqrt(Math.max(weight, 0)));
}
