// Pure mapping from snapshot slot data to canvas draw commands for the
// driver view. The server's image-plane corners are authoritative: no
// client-side reprojection, only device-pixel-ratio scaling.

import type { SlotData } from "./protocol.js";

export interface QuadDrawCall {
  points: [number, number][]; // device pixels, 4 corners in draw order
  fill: string;
  stroke: string;
}

export const RED_FILL = "rgba(220, 60, 50, 0.42)";
export const RED_STROKE = "rgba(220, 60, 50, 0.9)";
export const GREEN_FILL = "rgba(70, 200, 90, 0.35)";
export const GREEN_STROKE = "rgba(70, 200, 90, 0.9)";

export function quadDrawCalls(
  slots: SlotData[],
  devicePixelRatio: number,
): QuadDrawCall[] {
  const calls: QuadDrawCall[] = [];
  for (const slot of slots) {
    if (!slot.quad.visible) continue; // invisible quads are never drawn
    const red = slot.status === "reserved_red";
    calls.push({
      points: slot.quad.corners.map(
        ([u, v]) => [u * devicePixelRatio, v * devicePixelRatio] as [number, number],
      ),
      fill: red ? RED_FILL : GREEN_FILL,
      stroke: red ? RED_STROKE : GREEN_STROKE,
    });
  }
  return calls;
}
