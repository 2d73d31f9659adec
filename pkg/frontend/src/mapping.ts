// World (bench millimeters) to screen (canvas pixels) mapping. The scene
// geometry arrives in the hello message; the console fits it into the canvas
// with a margin, preserving aspect ratio. Dragging inverts the same mapping,
// so pose updates are world coordinates, as the server expects.

export interface Bounds {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

export interface Mapping {
  scale: number;   // px per mm
  offX: number;
  offY: number;
  height: number;  // canvas px height (y axis is flipped: world +y is up)
}

export function boundsOf(points: { x: number; y: number }[], pad = 50): Bounds {
  if (points.length === 0) {
    return { minX: -pad, maxX: pad, minY: -pad, maxY: pad };
  }
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minY = Math.min(minY, p.y);
    maxY = Math.max(maxY, p.y);
  }
  return { minX: minX - pad, maxX: maxX + pad, minY: minY - pad, maxY: maxY + pad };
}

export function fitBounds(bounds: Bounds, width: number, height: number): Mapping {
  const spanX = bounds.maxX - bounds.minX;
  const spanY = bounds.maxY - bounds.minY;
  const scale = Math.min(width / spanX, height / spanY);
  // center the drawing in both directions
  const offX = (width - spanX * scale) / 2 - bounds.minX * scale;
  const offY = (height - spanY * scale) / 2 - bounds.minY * scale;
  return { scale, offX, offY, height };
}

export function worldToScreen(m: Mapping, x: number, y: number): [number, number] {
  return [x * m.scale + m.offX, m.height - (y * m.scale + m.offY)];
}

export function screenToWorld(m: Mapping, px: number, py: number): [number, number] {
  return [(px - m.offX) / m.scale, (m.height - py - m.offY) / m.scale];
}
