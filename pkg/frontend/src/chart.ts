// Dependency-free canvas line chart for the 5-channel series with anomaly
// markers. Geometry helpers are pure so they can be unit-tested headless.

import { CHANNEL_NAMES } from "./types.js";

export interface ChartLayout {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 860,
  height: 300,
  padLeft: 48,
  padRight: 12,
  padTop: 12,
  padBottom: 24,
};

export interface ScaledSeries {
  xs: number[];
  ys: number[];
  min: number;
  max: number;
}

export function valueRange(values: number[]): { min: number; max: number } {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!isFinite(min) || !isFinite(max)) {
    return { min: 0, max: 1 };
  }
  if (min === max) {
    return { min: min - 1, max: max + 1 };
  }
  return { min, max };
}

export function scaleChannel(
  values: number[],
  layout: ChartLayout,
  range?: { min: number; max: number },
): ScaledSeries {
  const { min, max } = range ?? valueRange(values);
  const innerW = layout.width - layout.padLeft - layout.padRight;
  const innerH = layout.height - layout.padTop - layout.padBottom;
  const n = values.length;
  const xs: number[] = new Array(n);
  const ys: number[] = new Array(n);
  for (let i = 0; i < n; i++) {
    xs[i] = layout.padLeft + (n === 1 ? 0 : (i / (n - 1)) * innerW);
    ys[i] = layout.padTop + innerH - ((values[i] - min) / (max - min)) * innerH;
  }
  return { xs, ys, min, max };
}

// Gradient-rule anomaly indices (index t flags the jump from t-1 to t).
export function anomalyIndices(values: number[], sigmaFactor = 3): number[] {
  if (values.length < 2) return [];
  const diffs: number[] = [];
  for (let i = 1; i < values.length; i++) {
    diffs.push(values[i] - values[i - 1]);
  }
  const mean = diffs.reduce((a, b) => a + b, 0) / diffs.length;
  const variance = diffs.reduce((a, b) => a + (b - mean) * (b - mean), 0) / diffs.length;
  const threshold = sigmaFactor * Math.sqrt(variance);
  const out: number[] = [];
  diffs.forEach((d, i) => {
    if (Math.abs(d) > threshold) out.push(i + 1);
  });
  return out;
}

export const CHANNEL_COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#17becf"];

export function renderChart(
  canvas: HTMLCanvasElement,
  values: number[][],
  visible: boolean[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  canvas.width = layout.width;
  canvas.height = layout.height;
  ctx.clearRect(0, 0, layout.width, layout.height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, layout.width, layout.height);

  const t = values.length;
  const channels = CHANNEL_NAMES.length;
  for (let c = 0; c < channels; c++) {
    if (!visible[c]) continue;
    const column: number[] = new Array(t);
    for (let i = 0; i < t; i++) column[i] = values[i][c];
    const scaled = scaleChannel(column, layout);
    ctx.strokeStyle = CHANNEL_COLORS[c];
    ctx.lineWidth = c === 0 ? 1.8 : 1.0;
    ctx.beginPath();
    for (let i = 0; i < t; i++) {
      if (i === 0) ctx.moveTo(scaled.xs[i], scaled.ys[i]);
      else ctx.lineTo(scaled.xs[i], scaled.ys[i]);
    }
    ctx.stroke();

    if (c === 0) {
      // anomaly markers on the primary (temperature) trace
      ctx.fillStyle = "#000";
      for (const idx of anomalyIndices(column)) {
        ctx.beginPath();
        ctx.arc(scaled.xs[idx], scaled.ys[idx], 3.5, 0, 2 * Math.PI);
        ctx.fill();
      }
      // y-axis ticks for the primary channel
      ctx.fillStyle = "#555";
      ctx.font = "11px sans-serif";
      ctx.fillText(scaled.max.toFixed(1), 4, layout.padTop + 10);
      ctx.fillText(scaled.min.toFixed(1), 4, layout.height - layout.padBottom);
    }
  }
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText("t=0", layout.padLeft, layout.height - 6);
  ctx.fillText(`t=${t - 1}`, layout.width - layout.padRight - 36, layout.height - 6);
}
