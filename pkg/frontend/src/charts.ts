// Minimal dependency-free canvas line charts: a polyline per series, an
// optional horizontal threshold line, event markers, and shaded gap bands.

import { Gap } from './state.js';

export interface ChartOptions {
  color?: string;
  thresholdY?: number | null;
  markers?: { t: number; open: boolean }[];
  gaps?: Gap[];
  logY?: boolean;
  yLabel?: string;
}

const MARGIN = { left: 52, right: 10, top: 8, bottom: 18 };

export function drawChart(
  canvas: HTMLCanvasElement,
  points: { t: number; y: number }[],
  options: ChartOptions = {},
): void {
  const ctx = canvas.getContext('2d');
  if (ctx === null) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = '#11151c';
  ctx.fillRect(0, 0, w, h);
  if (points.length < 2) {
    ctx.fillStyle = '#6b7280';
    ctx.font = '11px sans-serif';
    ctx.fillText('waiting for data', MARGIN.left, h / 2);
    return;
  }
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const transform = options.logY ? (y: number) => Math.log10(Math.max(y, 1e-3)) : (y: number) => y;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const p of points) {
    const y = transform(p.y);
    if (y < yMin) yMin = y;
    if (y > yMax) yMax = y;
  }
  if (options.thresholdY != null) {
    yMin = Math.min(yMin, transform(options.thresholdY));
    yMax = Math.max(yMax, transform(options.thresholdY));
  }
  if (yMax - yMin < 1e-12) {
    yMax += 1;
    yMin -= 1;
  }
  const pad = 0.06 * (yMax - yMin);
  yMin -= pad;
  yMax += pad;
  const px = (t: number) => MARGIN.left + ((t - t0) / Math.max(t1 - t0, 1e-9)) * (w - MARGIN.left - MARGIN.right);
  const py = (y: number) => h - MARGIN.bottom - ((transform(y) - yMin) / (yMax - yMin)) * (h - MARGIN.top - MARGIN.bottom);

  for (const gap of options.gaps ?? []) {
    if (gap.toT < t0 || gap.fromT > t1) continue;
    ctx.fillStyle = 'rgba(148, 82, 0, 0.25)';
    const x0 = px(Math.max(gap.fromT, t0));
    ctx.fillRect(x0, MARGIN.top, Math.max(px(Math.min(gap.toT, t1)) - x0, 2), h - MARGIN.top - MARGIN.bottom);
  }

  if (options.thresholdY != null) {
    ctx.strokeStyle = '#e5c07b';
    ctx.setLineDash([5, 4]);
    ctx.beginPath();
    ctx.moveTo(MARGIN.left, py(options.thresholdY));
    ctx.lineTo(w - MARGIN.right, py(options.thresholdY));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  for (const marker of options.markers ?? []) {
    if (marker.t < t0 || marker.t > t1) continue;
    ctx.strokeStyle = marker.open ? '#e06c75' : '#e06c7580';
    ctx.beginPath();
    ctx.moveTo(px(marker.t), MARGIN.top);
    ctx.lineTo(px(marker.t), h - MARGIN.bottom);
    ctx.stroke();
  }

  ctx.strokeStyle = options.color ?? '#61afef';
  ctx.lineWidth = 1;
  ctx.beginPath();
  points.forEach((p, i) => {
    if (i === 0) ctx.moveTo(px(p.t), py(p.y));
    else ctx.lineTo(px(p.t), py(p.y));
  });
  ctx.stroke();

  ctx.fillStyle = '#9aa4b2';
  ctx.font = '10px sans-serif';
  const fmt = (v: number) => {
    const raw = options.logY ? Math.pow(10, v) : v;
    return Math.abs(raw) >= 1000 ? raw.toFixed(0) : raw.toPrecision(3);
  };
  ctx.fillText(fmt(yMax), 4, MARGIN.top + 8);
  ctx.fillText(fmt(yMin), 4, h - MARGIN.bottom);
  if (options.yLabel) ctx.fillText(options.yLabel, 4, h / 2);
  const span = t1 - t0;
  ctx.fillText(`${span.toFixed(0)}s window`, w - 80, h - 4);
}
