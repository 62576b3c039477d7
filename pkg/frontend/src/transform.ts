// Workspace <-> screen coordinate mapping with pan and zoom. The
// workspace is the unit square; screen y grows downward.

export interface Viewport {
  size: number; // canvas pixels per workspace unit at zoom 1
  zoom: number;
  panX: number;
  panY: number;
}

export function defaultViewport(size = 560): Viewport {
  return { size, zoom: 1, panX: 0, panY: 0 };
}

export function toScreen(v: Viewport, x: number, y: number): [number, number] {
  return [x * v.size * v.zoom + v.panX, (1 - y) * v.size * v.zoom + v.panY];
}

export function toWorkspace(v: Viewport, sx: number, sy: number): [number, number] {
  return [(sx - v.panX) / (v.size * v.zoom), 1 - (sy - v.panY) / (v.size * v.zoom)];
}

export function clampWorkspace(x: number, y: number): [number, number] {
  return [Math.min(1, Math.max(0, x)), Math.min(1, Math.max(0, y))];
}

export function zoomAt(v: Viewport, sx: number, sy: number, factor: number): Viewport {
  const [wx, wy] = toWorkspace(v, sx, sy);
  const zoom = Math.min(16, Math.max(0.25, v.zoom * factor));
  const next = { ...v, zoom };
  const [nx, ny] = toScreen(next, wx, wy);
  return { ...next, panX: next.panX + sx - nx, panY: next.panY + sy - ny };
}
