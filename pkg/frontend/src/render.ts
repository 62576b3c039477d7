// Canvas scene rendering: observation points, candidate arrows with
// index labels and group colors, optimal-action preview, replay rewards.

import type { ActionJson, ReplayRecord } from './types.js';
import type { ViewState } from './state.js';
import { toScreen, Viewport } from './transform.js';

export const GROUP_COLORS: Record<string, string> = {
  rankable: '#2ca02c',
  unrankable: '#d62728',
  unassigned: '#7f7f7f',
  optimal: '#9467bd',
  selected: '#ff7f0e',
};

export interface ArrowShape {
  line: [number, number, number, number];
  head: [number, number][];
}

/** Screen-space geometry for an action arrow (start -> end plus head). */
export function arrowShape(v: Viewport, action: ActionJson, headLen = 10): ArrowShape {
  const [x0, y0] = toScreen(v, action.params[0], action.params[1]);
  const [x1, y1] = toScreen(v, action.params[2], action.params[3]);
  const angle = Math.atan2(y1 - y0, x1 - x0);
  const head: [number, number][] = [
    [x1, y1],
    [x1 - headLen * Math.cos(angle - 0.4), y1 - headLen * Math.sin(angle - 0.4)],
    [x1 - headLen * Math.cos(angle + 0.4), y1 - headLen * Math.sin(angle + 0.4)],
  ];
  return { line: [x0, y0, x1, y1], head };
}

/** Squared distance from a screen point to an arrow segment (hover picking). */
export function distanceToArrow(v: Viewport, action: ActionJson, sx: number, sy: number): number {
  const { line } = arrowShape(v, action);
  const [x0, y0, x1, y1] = line;
  const dx = x1 - x0;
  const dy = y1 - y0;
  const len2 = dx * dx + dy * dy;
  const t = len2 === 0 ? 0 : Math.min(1, Math.max(0, ((sx - x0) * dx + (sy - y0) * dy) / len2));
  const px = x0 + t * dx;
  const py = y0 + t * dy;
  return (sx - px) * (sx - px) + (sy - py) * (sy - py);
}

export function pickCandidate(
  v: Viewport,
  candidates: ActionJson[],
  sx: number,
  sy: number,
  radius = 12,
): number | null {
  let best: number | null = null;
  let bestDist = radius * radius;
  candidates.forEach((c, i) => {
    const d = distanceToArrow(v, c, sx, sy);
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  });
  return best;
}

function drawArrow(ctx: CanvasRenderingContext2D, shape: ArrowShape, color: string, width: number): void {
  const [x0, y0, x1, y1] = shape.line;
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(shape.head[0][0], shape.head[0][1]);
  ctx.lineTo(shape.head[1][0], shape.head[1][1]);
  ctx.lineTo(shape.head[2][0], shape.head[2][1]);
  ctx.closePath();
  ctx.fill();
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  v: Viewport,
  state: ViewState,
  replay?: ReplayRecord | null,
): void {
  const canvas = ctx.canvas;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  // workspace frame
  const [fx0, fy0] = toScreen(v, 0, 1);
  const [fx1, fy1] = toScreen(v, 1, 0);
  ctx.strokeStyle = '#cccccc';
  ctx.lineWidth = 1;
  ctx.strokeRect(fx0, fy0, fx1 - fx0, fy1 - fy0);
  // observation points
  ctx.fillStyle = '#1f77b4';
  for (const [x, y] of state.task.obs) {
    const [sx, sy] = toScreen(v, x, y);
    ctx.beginPath();
    ctx.arc(sx, sy, 2.5, 0, Math.PI * 2);
    ctx.fill();
  }
  // candidates
  ctx.font = '12px sans-serif';
  state.task.candidates.forEach((c, i) => {
    const group = state.groupOf(i);
    const selected = replay != null && replay.selected === i;
    const color = selected ? GROUP_COLORS.selected : GROUP_COLORS[group];
    const shape = arrowShape(v, c);
    drawArrow(ctx, shape, color, state.hovered === i ? 3 : 1.5);
    const rank = state.rankedOrder.indexOf(i);
    let label = rank >= 0 ? `#${i} (rank ${rank + 1})` : `#${i}`;
    if (replay != null) {
      label = `#${i} r=${replay.rewards_norm[i].toFixed(2)}${selected ? ' *' : ''}`;
    }
    ctx.fillStyle = color;
    ctx.fillText(label, shape.line[2] + 4, shape.line[3] - 4);
  });
  // optimal action overlay
  if (state.optimal) {
    drawArrow(ctx, arrowShape(v, state.optimal), GROUP_COLORS.optimal, 2.5);
  } else if (state.placement.start) {
    const [sx, sy] = toScreen(v, state.placement.start[0], state.placement.start[1]);
    ctx.strokeStyle = GROUP_COLORS.optimal;
    ctx.beginPath();
    ctx.arc(sx, sy, 5, 0, Math.PI * 2);
    ctx.stroke();
  }
}
