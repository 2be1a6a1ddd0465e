// Canvas rendering: a top-down corridor pane and a schematic driver pane
// with the server-projected AR slot quads, plus a HUD strip.

import { quadDrawCalls } from "./overlay.js";
import type { Snapshot, VehicleState } from "./protocol.js";

export interface View {
  topDown: CanvasRenderingContext2D;
  driver: CanvasRenderingContext2D;
  hud: HTMLElement;
  dpr: number;
}

const ROAD = "#3a3a42";
const LANE_LINE = "#6a6a72";
const NPC = "#d8d8e0";
const EGO = "#64b4ff";
const LANE_W = 3.5;
const SETBACK = 8;

export function renderFrame(view: View, snap: Snapshot, blocks: number[] = [0, 150, 300, 450]): void {
  renderTopDown(view.topDown, snap, blocks, view.dpr);
  renderDriver(view.driver, snap, view.dpr);
  renderHud(view.hud, snap);
}

function worldToScreen(
  ctx: CanvasRenderingContext2D,
  blocks: number[],
): (x: number, y: number) => [number, number] {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const minX = blocks[0] - 170;
  const maxX = blocks[blocks.length - 1] + 170;
  const scale = w / (maxX - minX);
  return (x, y) => [(x - minX) * scale, h / 2 - y * scale];
}

function renderTopDown(
  ctx: CanvasRenderingContext2D,
  snap: Snapshot,
  blocks: number[],
  dpr: number,
): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const toScreen = worldToScreen(ctx, blocks);
  const scale = w / (blocks[blocks.length - 1] - blocks[0] + 340);
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#17171c";
  ctx.fillRect(0, 0, w, h);

  // corridor road
  ctx.fillStyle = ROAD;
  const roadHalf = LANE_W * scale;
  const [, cy] = toScreen(0, 0);
  ctx.fillRect(0, cy - roadHalf, w, 2 * roadHalf);
  // side streets
  for (const bx of blocks) {
    const [sx] = toScreen(bx, 0);
    ctx.fillRect(sx - roadHalf, 0, 2 * roadHalf, h);
  }
  ctx.strokeStyle = LANE_LINE;
  ctx.setLineDash([4 * dpr, 6 * dpr]);
  ctx.beginPath();
  ctx.moveTo(0, cy);
  ctx.lineTo(w, cy);
  for (const bx of blocks) {
    const [sx] = toScreen(bx, 0);
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, h);
  }
  ctx.stroke();
  ctx.setLineDash([]);

  // fail-safe badges
  for (let i = 0; i < blocks.length; i++) {
    if (snap.failsafe.includes(`i${i}`)) {
      const [sx] = toScreen(blocks[i], 0);
      ctx.fillStyle = "rgba(255, 80, 60, 0.25)";
      ctx.beginPath();
      ctx.arc(sx, cy, SETBACK * 2 * scale, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  // signal state markers (baseline mode)
  if (snap.signals) {
    for (const bx of blocks) {
      const [sx] = toScreen(bx, 0);
      ctx.fillStyle = snap.signals.EW === "green" ? "#39c25c" :
        snap.signals.EW === "yellow" ? "#e7c53a" : "#d34b3e";
      ctx.fillRect(sx - roadHalf - 6 * dpr, cy - 3 * dpr, 4 * dpr, 6 * dpr);
      ctx.fillStyle = snap.signals.NS === "green" ? "#39c25c" :
        snap.signals.NS === "yellow" ? "#e7c53a" : "#d34b3e";
      ctx.fillRect(sx - 3 * dpr, cy - roadHalf - 8 * dpr, 6 * dpr, 4 * dpr);
    }
  }

  // vehicles
  for (const veh of snap.vehicles) {
    drawVehicle(ctx, veh, toScreen, scale);
  }
}

function drawVehicle(
  ctx: CanvasRenderingContext2D,
  veh: VehicleState,
  toScreen: (x: number, y: number) => [number, number],
  scale: number,
): void {
  const [sx, sy] = toScreen(veh.x, veh.y);
  ctx.save();
  ctx.translate(sx, sy);
  ctx.rotate(-veh.heading);
  ctx.fillStyle = veh.role === "hitl_ego" ? EGO : NPC;
  const l = Math.max(veh.length * scale, 4);
  const w = Math.max(veh.width * scale, 2);
  ctx.fillRect(-l, -w / 2, l, w);
  ctx.restore();
  if (veh.slot > 0) {
    ctx.fillStyle = "#9be79b";
    ctx.font = `${10 * (scale > 0.5 ? 1 : 1)}px monospace`;
    ctx.fillText(String(veh.slot), sx + 3, sy - 4);
  }
}

function renderDriver(ctx: CanvasRenderingContext2D, snap: Snapshot, dpr: number): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);
  // schematic road: sky, ground, lane wedge toward the vanishing point
  ctx.fillStyle = "#1d2330";
  ctx.fillRect(0, 0, w, h * 0.5);
  ctx.fillStyle = "#2d2d33";
  ctx.fillRect(0, h * 0.5, w, h * 0.5);
  ctx.fillStyle = ROAD;
  ctx.beginPath();
  ctx.moveTo(w * 0.5 - 8 * dpr, h * 0.5);
  ctx.lineTo(w * 0.5 + 8 * dpr, h * 0.5);
  ctx.lineTo(w * 0.78, h);
  ctx.lineTo(w * 0.22, h);
  ctx.closePath();
  ctx.fill();

  // AR slot quads exactly as projected by the server
  for (const call of quadDrawCalls(snap.slots, dpr)) {
    ctx.beginPath();
    ctx.moveTo(call.points[0][0], call.points[0][1]);
    for (const [u, v] of call.points.slice(1)) {
      ctx.lineTo(u, v);
    }
    ctx.closePath();
    ctx.fillStyle = call.fill;
    ctx.fill();
    ctx.strokeStyle = call.stroke;
    ctx.lineWidth = 2 * dpr;
    ctx.stroke();
  }
}

function renderHud(hud: HTMLElement, snap: Snapshot): void {
  const ego = snap.ego;
  const failsafe = snap.failsafe.length
    ? ` | ALL-WAY STOP at ${snap.failsafe.join(", ")}` : "";
  if (!ego) {
    hud.textContent = `t=${snap.time.toFixed(1)}s vehicles=${snap.vehicles.length}` +
      ` (view only)${failsafe}`;
    return;
  }
  const kmh = (ego.v * 3.6).toFixed(0);
  const eta = ego.eta === null ? "—" : `${ego.eta.toFixed(1)}s`;
  hud.textContent =
    `v ${kmh} km/h | slot ${ego.slot || "—"} | eta ${eta}` +
    ` | throttle ${(ego.throttle * 100).toFixed(0)}%` +
    ` | brake ${(ego.brake * 100).toFixed(0)}%${failsafe}`;
  hud.classList.toggle("failsafe", snap.failsafe.length > 0);
}
