// Pointer samples (device px) -> normalized stroke in the unit square.

import { Point } from "./protocol.js";

export interface Box {
  left: number;
  top: number;
  width: number;
  height: number;
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

export function normalizePoint(x: number, y: number, box: Box): Point {
  return [
    clamp01((x - box.left) / box.width),
    clamp01((y - box.top) / box.height),
  ];
}

/** A zero-length drag is a legal single-point stroke. */
export function normalizeStroke(samples: Array<[number, number]>, box: Box): Point[] {
  if (samples.length === 0) throw new Error("empty pointer sample list");
  const pts = samples.map(([x, y]) => normalizePoint(x, y, box));
  const out: Point[] = [pts[0]];
  for (const p of pts.slice(1)) {
    const last = out[out.length - 1];
    if (p[0] !== last[0] || p[1] !== last[1]) out.push(p);
  }
  return out;
}
