/** Chart geometry and canvas rendering for history trends and histograms.
 *
 * The data shaping is pure (and unit-tested); the canvas calls are a thin
 * layer on top.  Every plotted value comes verbatim from an API row.
 */

import { HistogramPayload, HistoryRow } from "./api.js";

export interface Series {
  method: string;
  points: Array<[number, number]>;   // (session, metric value)
}

export type Metric = "fpr95" | "auroc";

/** Per-method (session, value) series for one eval group, sessions ascending. */
export function historySeries(rows: HistoryRow[], group: string,
                              metric: Metric): Series[] {
  const byMethod = new Map<string, Array<[number, number]>>();
  for (const row of rows) {
    if (row.group !== group) continue;
    const pts = byMethod.get(row.method) ?? [];
    pts.push([row.session, row[metric]]);
    byMethod.set(row.method, pts);
  }
  return [...byMethod.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([method, points]) => ({
      method,
      points: points.slice().sort((a, b) => a[0] - b[0]),
    }));
}

export interface Layout {
  x: (session: number) => number;
  y: (value: number) => number;
  xDomain: [number, number];
  yDomain: [number, number];
}

/** Linear scales mapping data space onto a padded pixel box. */
export function chartLayout(series: Series[], width: number, height: number,
                            pad = 32): Layout {
  const xs = series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = series.flatMap((s) => s.points.map((p) => p[1]));
  const xLo = Math.min(...xs, 0);
  const xHi = Math.max(...xs, 1);
  let yLo = Math.min(...ys, 0);
  let yHi = Math.max(...ys, 1);
  if (yLo === yHi) {
    yHi = yLo + 1;
  }
  const x = (v: number) => pad + ((v - xLo) / (xHi - xLo)) * (width - 2 * pad);
  const y = (v: number) => height - pad - ((v - yLo) / (yHi - yLo)) * (height - 2 * pad);
  return { x, y, xDomain: [xLo, xHi], yDomain: [yLo, yHi] };
}

const PALETTE = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#64748b"];

export function renderHistoryChart(canvas: HTMLCanvasElement, rows: HistoryRow[],
                                   group: string, metric: Metric): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const series = historySeries(rows, group, metric);
  if (!series.length) return;
  const layout = chartLayout(series, width, height);

  ctx.strokeStyle = "#cbd5e1";
  ctx.strokeRect(32, 32, width - 64, height - 64);
  ctx.font = "11px sans-serif";
  ctx.fillStyle = "#475569";
  ctx.fillText(`${metric} on ${group}`, 36, 20);
  ctx.fillText(String(layout.yDomain[1].toFixed(2)), 2, 36);
  ctx.fillText(String(layout.yDomain[0].toFixed(2)), 2, height - 28);

  series.forEach((s, si) => {
    ctx.strokeStyle = PALETTE[si % PALETTE.length];
    ctx.fillStyle = ctx.strokeStyle;
    ctx.beginPath();
    s.points.forEach(([sx, sy], i) => {
      const px = layout.x(sx);
      const py = layout.y(sy);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    for (const [sx, sy] of s.points) {
      ctx.beginPath();
      ctx.arc(layout.x(sx), layout.y(sy), 2.5, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.fillText(s.method, width - 60, 44 + 14 * si);
  });
}

export function renderHistogram(canvas: HTMLCanvasElement,
                                payload: HistogramPayload): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const bins = payload.id_counts.length;
  const peak = Math.max(...payload.id_counts, ...payload.ood_counts, 1);
  const pad = 24;
  const bw = (width - 2 * pad) / bins;
  const draw = (counts: number[], color: string) => {
    ctx.fillStyle = color;
    counts.forEach((c, i) => {
      const h = (c / peak) * (height - 2 * pad);
      ctx.fillRect(pad + i * bw, height - pad - h, Math.max(bw - 1, 1), h);
    });
  };
  ctx.globalAlpha = 0.55;
  draw(payload.id_counts, "#2563eb");
  draw(payload.ood_counts, "#dc2626");
  ctx.globalAlpha = 1.0;
  ctx.font = "11px sans-serif";
  ctx.fillStyle = "#475569";
  ctx.fillText(`${payload.method} scores on ${payload.group} (id=blue, ood=red)`,
    pad, 14);
}
