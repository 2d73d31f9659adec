// Geometry for the four-axis performance radar (usability, inverted task
// load, efficiency, reliability), rendered as SVG polygons.

export const RADAR_AXES = [
  "usability",
  "inverted_task_load",
  "efficiency",
  "reliability",
] as const;

export type RadarScores = Record<string, number | null>;

export interface RadarGeometry {
  axisEnds: [number, number][];        // tip of each axis line
  labels: { x: number; y: number; text: string }[];
  rings: string[];                     // polygon points for 25/50/75/100 rings
}

function polar(cx: number, cy: number, r: number, axisIndex: number,
               nAxes: number): [number, number] {
  // axis 0 points straight up, the rest follow clockwise
  const angle = -Math.PI / 2 + (2 * Math.PI * axisIndex) / nAxes;
  return [cx + r * Math.cos(angle), cy + r * Math.sin(angle)];
}

export function radarPolygon(values: number[], cx: number, cy: number,
                             radius: number): [number, number][] {
  const n = values.length;
  return values.map((v, i) => {
    const clamped = Math.max(0, Math.min(100, v));
    return polar(cx, cy, (radius * clamped) / 100, i, n);
  });
}

export function pointsAttr(points: [number, number][]): string {
  return points.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(" ");
}

export function radarGeometry(cx: number, cy: number, radius: number,
                              axes: readonly string[] = RADAR_AXES): RadarGeometry {
  const axisEnds = axes.map((_, i) => polar(cx, cy, radius, i, axes.length));
  const labels = axes.map((text, i) => {
    const [x, y] = polar(cx, cy, radius + 16, i, axes.length);
    return { x, y, text };
  });
  const rings = [25, 50, 75, 100].map((v) =>
    pointsAttr(axes.map((_, i) => polar(cx, cy, (radius * v) / 100, i, axes.length))),
  );
  return { axisEnds, labels, rings };
}

export function scoresToValues(scores: RadarScores,
                               axes: readonly string[] = RADAR_AXES): number[] {
  return axes.map((a) => {
    const v = scores[a];
    return v == null || Number.isNaN(v) ? 0 : v;
  });
}
