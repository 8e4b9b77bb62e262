/**
 * Canvas renderer.  Pure: the frame drawn is a function of (broadcast,
 * transform, staleness) only, so two tabs showing the same broadcast
 * draw identical scenes.
 *
 * Visual encoding: unattended cells stay transparent; attended cells a
 * single-hue white-to-red ramp; one oriented glyph per trail with its
 * recent path; one circle per highlighted object with per-viewer arcs
 * evenly distributed around it, arc length proportional to dwell
 * fraction; hint-active objects list their neighbor labels.
 */

import {
  BroadcastPayload,
  GridSnapshot,
  HighlightSnapshot,
  HintSnapshot,
  TrailSnapshot,
} from './protocol.js';
import { ViewTransform } from './transform.js';

/** The 2D-context subset used; a recording stub implements this in tests. */
export interface Ctx2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  textAlign: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(rad: number): void;
}

const BACKGROUND = '#101014';
const TABLE_EDGE = '#3a3a44';
const TRAIL_COLORS = ['#4fc3f7', '#ffb74d', '#aed581', '#f06292', '#ba68c8', '#fff176'];
const HIGHLIGHT_COLOR = '#ffd54f';
const ARC_GAP_RAD = 0.12;

function round2(x: number): number {
  return Math.round(x * 100) / 100;
}

/** White-to-red single-hue ramp; intensity 0 is fully transparent. */
export function heatColor(intensity: number): string | null {
  if (intensity <= 0) return null;
  const t = Math.min(intensity, 1);
  const gb = Math.round(255 * (1 - t));
  const alpha = round2(0.15 + 0.6 * t);
  return `rgba(255,${gb},${gb},${alpha})`;
}

export function trailColor(index: number): string {
  return TRAIL_COLORS[index % TRAIL_COLORS.length]!;
}

function drawGrid(ctx: Ctx2D, grid: GridSnapshot, vt: ViewTransform): void {
  const cellW = (vt.tableWidthMm / grid.cols) * vt.scale;
  const cellH = (vt.tableHeightMm / grid.rows) * vt.scale;
  for (let row = 0; row < grid.rows; row++) {
    for (let col = 0; col < grid.cols; col++) {
      const intensity = grid.intensity[row * grid.cols + col] ?? 0;
      const color = heatColor(intensity);
      if (color === null) continue; // uncolored until fixated upon
      const [x, y] = vt.mmToCss([
        (col * vt.tableWidthMm) / grid.cols,
        (row * vt.tableHeightMm) / grid.rows,
      ]);
      ctx.fillStyle = color;
      ctx.fillRect(x, y, cellW, cellH);
    }
  }
}

function drawTrail(
  ctx: Ctx2D,
  trail: TrailSnapshot,
  index: number,
  vt: ViewTransform,
): void {
  const color = trailColor(index);
  if (trail.history.length > 1) {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.globalAlpha = 0.45;
    ctx.beginPath();
    const [hx, hy] = vt.mmToCss(trail.history[0]!);
    ctx.moveTo(hx, hy);
    for (const p of trail.history.slice(1)) {
      const [x, y] = vt.mmToCss(p);
      ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.globalAlpha = 1;
  }

  const [x, y] = vt.mmToCss(trail.pos_mm);
  const size = 14 * Math.max(vt.scale, 0.2);
  ctx.save();
  ctx.translate(x, y);
  ctx.rotate(trail.heading_rad);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.moveTo(size, 0);
  ctx.lineTo(-size * 0.6, size * 0.5);
  ctx.lineTo(-size * 0.35, 0);
  ctx.lineTo(-size * 0.6, -size * 0.5);
  ctx.closePath();
  ctx.fill();
  ctx.restore();

  ctx.fillStyle = color;
  ctx.font = '12px sans-serif';
  ctx.textAlign = 'center';
  ctx.fillText(trail.participant_id, x, y - size - 4);
}

function drawHighlight(
  ctx: Ctx2D,
  state: HighlightSnapshot,
  vt: ViewTransform,
): void {
  const [x, y] = vt.mmToCss(state.center_mm);
  const radius = state.radius_mm * vt.scale;
  ctx.strokeStyle = HIGHLIGHT_COLOR;
  ctx.lineWidth = 1.5;
  ctx.globalAlpha = 0.8;
  ctx.beginPath();
  ctx.arc(x, y, radius, 0, Math.PI * 2);
  ctx.stroke();
  ctx.globalAlpha = 1;

  // One slot per viewer, evenly distributed; arc length within the slot
  // is proportional to that viewer's dwell fraction.
  const n = state.arcs.length;
  const slot = (Math.PI * 2) / n;
  const arcRadius = radius + 4 * vt.scale;
  ctx.lineWidth = 3;
  state.arcs.forEach((arc, i) => {
    const start = -Math.PI / 2 + i * slot + ARC_GAP_RAD / 2;
    const length = Math.max(arc.fraction, 0.02) * (slot - ARC_GAP_RAD);
    ctx.strokeStyle = HIGHLIGHT_COLOR;
    ctx.beginPath();
    ctx.arc(x, y, arcRadius, start, start + length);
    ctx.stroke();
  });
}

function drawHint(
  ctx: Ctx2D,
  hint: HintSnapshot,
  highlight: HighlightSnapshot | undefined,
  vt: ViewTransform,
): void {
  if (!hint.active) return;
  const anchor = highlight
    ? vt.mmToCss(highlight.center_mm)
    : ([vt.cssWidth / 2, vt.cssHeight / 2] as [number, number]);
  const label = `${hint.object_id} → ${hint.neighbors.join(', ')}`;
  ctx.font = '13px sans-serif';
  ctx.textAlign = 'center';
  ctx.fillStyle = HIGHLIGHT_COLOR;
  ctx.fillText(
    label,
    anchor[0],
    anchor[1] - (highlight ? (highlight.radius_mm + 14) * vt.scale : 0),
  );
}

export function renderFrame(
  ctx: Ctx2D,
  broadcast: BroadcastPayload | null,
  vt: ViewTransform,
  stale: boolean,
): void {
  ctx.clearRect(0, 0, vt.cssWidth, vt.cssHeight);
  ctx.fillStyle = BACKGROUND;
  ctx.fillRect(0, 0, vt.cssWidth, vt.cssHeight);

  const [ox, oy] = vt.mmToCss([0, 0]);
  ctx.strokeStyle = TABLE_EDGE;
  ctx.lineWidth = 1;
  ctx.strokeRect(
    ox,
    oy,
    vt.tableWidthMm * vt.scale,
    vt.tableHeightMm * vt.scale,
  );

  if (broadcast !== null) {
    if (broadcast.grid) drawGrid(ctx, broadcast.grid, vt);
    broadcast.trails?.forEach((trail, i) => drawTrail(ctx, trail, i, vt));
    broadcast.highlights?.forEach((h) => drawHighlight(ctx, h, vt));
    broadcast.hints?.forEach((hint) =>
      drawHint(
        ctx,
        hint,
        broadcast.highlights?.find((h) => h.object_id === hint.object_id),
        vt,
      ),
    );
  }

  if (stale) {
    ctx.fillStyle = 'rgba(0,0,0,0.55)';
    ctx.fillRect(0, 0, vt.cssWidth, vt.cssHeight);
    ctx.fillStyle = '#eeeeee';
    ctx.font = '20px sans-serif';
    ctx.textAlign = 'center';
    ctx.fillText('disconnected', vt.cssWidth / 2, vt.cssHeight / 2);
  }
}
