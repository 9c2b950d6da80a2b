/**
 * Dependency-free SVG chart builders. Pure string functions so tests can
 * assert on their output without a DOM.
 */

import type { AttentionPoint, DeltaBar, SeriesPoint } from "./viewmodel.js";

const W = 640;

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function formatCount(x: number): string {
  const sign = x < 0 ? "−" : x > 0 ? "+" : "";
  const ax = Math.abs(x);
  if (ax >= 1e6) return `${sign}${(ax / 1e6).toFixed(2)}M`;
  if (ax >= 1e3) return `${sign}${(ax / 1e3).toFixed(1)}k`;
  return `${sign}${ax.toFixed(ax === Math.round(ax) ? 0 : 1)}`;
}

/** Horizontal delta bars, one per region; negative deltas (cases averted)
 * grow left in green, increases grow right in red. */
export function deltaBarChart(bars: DeltaBar[]): string {
  const rowH = 26;
  const h = bars.length * rowH + 20;
  const maxAbs = Math.max(1e-9, ...bars.map((b) => Math.abs(b.delta)));
  const mid = W / 2;
  const scale = (W / 2 - 90) / maxAbs;
  const rows = bars
    .map((b, i) => {
      const y = 10 + i * rowH;
      const len = Math.abs(b.delta) * scale;
      const x = b.delta < 0 ? mid - len : mid;
      const fill = b.delta < 0 ? "#2e7d32" : b.delta > 0 ? "#c62828" : "#9e9e9e";
      return (
        `<text x="4" y="${y + 14}" class="lbl">${esc(b.region)}</text>` +
        `<rect data-region="${esc(b.region)}" data-delta="${b.delta}" x="${x.toFixed(2)}" y="${y}" ` +
        `width="${Math.max(len, b.delta === 0 ? 0 : 1).toFixed(2)}" height="${rowH - 8}" fill="${fill}"></rect>` +
        `<text x="${W - 4}" y="${y + 14}" text-anchor="end" class="val">${formatCount(b.delta)}</text>`
      );
    })
    .join("");
  return (
    `<svg viewBox="0 0 ${W} ${h}" role="img" aria-label="per-region case delta">` +
    `<line x1="${mid}" y1="0" x2="${mid}" y2="${h}" stroke="#999" stroke-dasharray="3,3"/>` +
    rows +
    `</svg>`
  );
}

function polyline(points: { x: number; y: number }[], stroke: string, dash = ""): string {
  const attr = dash ? ` stroke-dasharray="${dash}"` : "";
  const pts = points.map((p) => `${p.x.toFixed(2)},${p.y.toFixed(2)}`).join(" ");
  return `<polyline fill="none" stroke="${stroke}" stroke-width="2"${attr} points="${pts}"/>`;
}

/** Baseline vs scenario series (weekly epi-week totals or the daily toggle). */
export function comparisonLineChart(series: SeriesPoint[], title: string): string {
  const h = 220;
  if (series.length === 0) {
    return `<svg viewBox="0 0 ${W} ${h}"><text x="10" y="30">no complete epi-weeks in window</text></svg>`;
  }
  const values = series.flatMap((p) => [p.baseline, p.scenario]);
  const vmax = Math.max(...values, 1e-9);
  const x = (i: number) =>
    series.length === 1 ? W / 2 : 30 + (i * (W - 50)) / (series.length - 1);
  const y = (v: number) => h - 30 - (v / vmax) * (h - 60);
  const base = polyline(series.map((p, i) => ({ x: x(i), y: y(p.baseline) })), "#1565c0");
  const scen = polyline(series.map((p, i) => ({ x: x(i), y: y(p.scenario) })), "#e65100", "6,3");
  const labels =
    `<text x="30" y="16" class="lbl">${esc(title)}</text>` +
    `<text x="${W - 180}" y="16" fill="#1565c0">baseline</text>` +
    `<text x="${W - 100}" y="16" fill="#e65100">scenario</text>` +
    `<text x="2" y="${y(vmax) + 4}" class="val">${formatCount(vmax)}</text>` +
    `<text x="${x(0).toFixed(0)}" y="${h - 8}" class="val">${esc(series[0].x)}</text>` +
    `<text x="${x(series.length - 1).toFixed(0)}" y="${h - 8}" text-anchor="end" class="val">${esc(
      series[series.length - 1].x,
    )}</text>`;
  return `<svg viewBox="0 0 ${W} ${h}" role="img" aria-label="${esc(title)}">${base}${scen}${labels}</svg>`;
}

/** Per-offset average attention weights for both streams. */
export function attentionChart(points: AttentionPoint[]): string {
  const h = 200;
  if (points.length === 0) return "";
  const vmax = Math.max(...points.flatMap((p) => [p.caseWeight, p.mobilityWeight]), 1e-9);
  const x = (i: number) =>
    points.length === 1 ? W / 2 : 30 + (i * (W - 60)) / (points.length - 1);
  const y = (v: number) => h - 30 - (v / vmax) * (h - 60);
  const caseLine = polyline(points.map((p, i) => ({ x: x(i), y: y(p.caseWeight) })), "#6a1b9a");
  const mobLine = polyline(
    points.map((p, i) => ({ x: x(i), y: y(p.mobilityWeight) })),
    "#00838f",
    "5,3",
  );
  const marks = points
    .map(
      (p, i) =>
        `<circle data-offset="${p.offset}" data-weight="${p.caseWeight}" cx="${x(i).toFixed(2)}" cy="${y(
          p.caseWeight,
        ).toFixed(2)}" r="3" fill="#6a1b9a"/>`,
    )
    .join("");
  return (
    `<svg viewBox="0 0 ${W} ${h}" role="img" aria-label="attention weights">` +
    `${caseLine}${mobLine}${marks}` +
    `<text x="${W - 210}" y="16" fill="#6a1b9a">case stream</text>` +
    `<text x="${W - 110}" y="16" fill="#00838f">mobility stream</text>` +
    `<text x="30" y="${h - 8}" class="val">day ${points[0].offset}</text>` +
    `<text x="${W - 30}" y="${h - 8}" text-anchor="end" class="val">day ${points[points.length - 1].offset}</text>` +
    `</svg>`
  );
}
