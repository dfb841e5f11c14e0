import { describe, expect, it } from "vitest";

import { allRelationStyles, relationStyle, strokeWidthFor } from "./relations.js";
import { RELATIONS } from "./types.js";

describe("relation styling", () => {
  it("covers all 12 relations", () => {
    expect(RELATIONS).toHaveLength(12);
    for (const rel of RELATIONS) {
      expect(relationStyle(rel)).toBeDefined();
    }
    expect(allRelationStyles()).toHaveLength(12);
  });

  it("every relation renders distinguishably (unique color+dash pair)", () => {
    const keys = allRelationStyles().map(([, s]) => `${s.color}|${s.dash}`);
    expect(new Set(keys).size).toBe(12);
  });

  it("colors are distinct on their own", () => {
    const colors = allRelationStyles().map(([, s]) => s.color);
    expect(new Set(colors).size).toBe(12);
  });

  it("stroke width grows monotonically with weight and stays positive", () => {
    const widths = [0, 0.5, 1, 2, 4].map(strokeWidthFor);
    for (let i = 1; i < widths.length; i++) {
      expect(widths[i]).toBeGreaterThanOrEqual(widths[i - 1]);
    }
    expect(Math.min(...widths)).toBeGreaterThan(0);
    expect(strokeWidthFor(1)).toBe(2);
  });
});
