import { describe, expect, it } from "vitest";

import { DEFAULT_LAYOUT, anomalyIndices, scaleChannel, valueRange } from "../src/chart.js";

describe("value range", () => {
  it("pads constant series", () => {
    expect(valueRange([5, 5, 5])).toEqual({ min: 4, max: 6 });
  });

  it("finds extremes", () => {
    expect(valueRange([1, -2, 7])).toEqual({ min: -2, max: 7 });
  });
});

describe("scaleChannel", () => {
  it("maps extremes to the plot edges", () => {
    const layout = { ...DEFAULT_LAYOUT, width: 100, height: 60, padLeft: 10, padRight: 10, padTop: 5, padBottom: 5 };
    const s = scaleChannel([0, 5, 10], layout);
    expect(s.xs[0]).toBe(10);
    expect(s.xs[2]).toBe(90);
    expect(s.ys[2]).toBe(5); // max at the top
    expect(s.ys[0]).toBe(55); // min at the bottom
  });
});

describe("anomalyIndices", () => {
  it("flags a step against a quiet background", () => {
    const values = new Array(100).fill(0).map((_, i) => Math.sin((2 * Math.PI * i) / 24));
    const stepped = values.map((v, i) => (i >= 50 ? v + 10 : v));
    const found = anomalyIndices(stepped);
    expect(found).toContain(50);
  });

  it("stays quiet on a smooth sine", () => {
    const values = new Array(120).fill(0).map((_, i) => Math.sin((2 * Math.PI * i) / 24));
    expect(anomalyIndices(values)).toHaveLength(0);
  });
});
