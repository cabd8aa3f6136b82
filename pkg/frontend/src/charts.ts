// Chart geometry and canvas painting. Geometry functions are pure and map
// service payload values to pixels verbatim (no smoothing, no rescoring),
// so tests can invert them back onto the exact payload numbers.

import type { PdpSnapshot, RunMark, ScoredRecord } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export type Scale = (value: number) => number;

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0;
  if (span === 0) return () => (r0 + r1) / 2;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

export interface StripGeometry {
  points: Point[];
  thresholdY: number;
  flagged: Point[];
  markXs: number[];
  x: Scale;
  y: Scale;
}

/** Score strip chart: score in [0, 1] against arrival order. */
export function stripGeometry(
  records: ScoredRecord[],
  marks: RunMark[],
  threshold: number,
  width: number,
  height: number,
): StripGeometry {
  const n = records.length;
  const x = linearScale(0, Math.max(n - 1, 1), 0, width);
  const y = linearScale(0, 1, height, 0); // score 1 at the top
  const points = records.map((r, i) => ({ x: x(i), y: y(r.score) }));
  const flagged = records.flatMap((r, i) => (r.flagged ? [{ x: x(i), y: y(r.score) }] : []));
  const byId = new Map(records.map((r, i) => [r.instance_id, i]));
  const markXs = marks
    .filter((m) => byId.has(m.at_id))
    .map((m) => x(byId.get(m.at_id) as number));
  return { points, thresholdY: y(threshold), flagged, markXs, x, y };
}

export interface SeriesGeometry {
  name: string;
  points: Point[];
}

/** Multi-series FI chart for the given feature indices. */
export function fiGeometry(
  records: ScoredRecord[],
  featureNames: string[],
  indices: number[],
  width: number,
  height: number,
): SeriesGeometry[] {
  const n = records.length;
  let hi = 0;
  for (const r of records) for (const j of indices) hi = Math.max(hi, r.fi[j]);
  const x = linearScale(0, Math.max(n - 1, 1), 0, width);
  const y = linearScale(0, hi || 1, height, 0);
  return indices.map((j) => ({
    name: featureNames[j],
    points: records.map((r, i) => ({ x: x(i), y: y(r.fi[j]) })),
  }));
}

export interface PdpGeometry {
  pdp: Point[];
  ice: { weight: number; points: Point[] }[];
  yLo: number;
  yHi: number;
}

/** PDP curve plus fading ICE overlays, scaled to the payload's own range. */
export function pdpGeometry(snap: PdpSnapshot, width: number, height: number): PdpGeometry {
  const values = [...snap.pdp, ...snap.ice.flatMap((e) => e.values)];
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const x = linearScale(0, Math.max(snap.grid.length - 1, 1), 0, width);
  const y = linearScale(lo, hi, height, 0);
  const path = (vals: number[]) => vals.map((v, i) => ({ x: x(i), y: y(v) }));
  return {
    pdp: path(snap.pdp),
    ice: snap.ice.map((e) => ({ weight: e.weight, points: path(e.values) })),
    yLo: lo,
    yHi: hi,
  };
}

// -- canvas painting --------------------------------------------------------------

function polyline(ctx: CanvasRenderingContext2D, pts: Point[]) {
  if (!pts.length) return;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (let i = 1; i < pts.length; i++) ctx.lineTo(pts[i].x, pts[i].y);
  ctx.stroke();
}

export function drawStrip(
  canvas: HTMLCanvasElement,
  geometry: StripGeometry,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // headless environments render the DOM only
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#4ea1d3";
  ctx.lineWidth = 1;
  polyline(ctx, geometry.points);
  ctx.strokeStyle = "#e84a5f";
  ctx.setLineDash([5, 3]);
  ctx.beginPath();
  ctx.moveTo(0, geometry.thresholdY);
  ctx.lineTo(width, geometry.thresholdY);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#888";
  for (const mx of geometry.markXs) {
    ctx.beginPath();
    ctx.moveTo(mx, 0);
    ctx.lineTo(mx, height);
    ctx.stroke();
  }
  ctx.fillStyle = "#e84a5f";
  for (const p of geometry.flagged) {
    ctx.beginPath();
    ctx.arc(p.x, p.y, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

const SERIES_COLORS = ["#f6a821", "#4ea1d3", "#7bc96f", "#c678dd", "#e06c75"];

export function drawFi(canvas: HTMLCanvasElement, series: SeriesGeometry[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  series.forEach((s, k) => {
    ctx.strokeStyle = SERIES_COLORS[k % SERIES_COLORS.length];
    ctx.lineWidth = 1.2;
    polyline(ctx, s.points);
  });
}

export function drawPdp(canvas: HTMLCanvasElement, geometry: PdpGeometry): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  // fading ICE curves first: opacity equals the payload's fade weight
  for (const curve of geometry.ice) {
    ctx.save();
    ctx.globalAlpha = Math.max(0.05, Math.min(1, curve.weight));
    ctx.strokeStyle = "#9aa5b1";
    ctx.lineWidth = 1;
    polyline(ctx, curve.points);
    ctx.restore();
  }
  ctx.strokeStyle = "#f6a821";
  ctx.lineWidth = 2;
  polyline(ctx, geometry.pdp);
}
