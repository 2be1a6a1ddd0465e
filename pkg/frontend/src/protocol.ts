// Frame schemas exchanged with the telemetry server (JSON text frames,
// every frame carries "type" and protocol version "v").

export const PROTOCOL_VERSION = 1;

export interface VehicleState {
  id: number;
  role: "npc" | "hitl_ego";
  x: number;
  y: number;
  heading: number;
  v: number;
  a: number;
  slot: number;
  intersection: string | null;
  length: number;
  width: number;
}

export interface QuadData {
  visible: boolean;
  corners: [number, number][];
}

export interface SlotData {
  status: "reserved_red" | "available_green";
  target: number | null;
  length: number;
  width: number;
  dist_to_conflict: number;
  center_s: number | null;
  quad: QuadData;
}

export interface EgoData {
  id: number;
  v: number;
  a: number;
  a_ref: number;
  slot: number;
  eta: number | null;
  throttle: number;
  brake: number;
  s: number;
}

export interface Snapshot {
  type: "snapshot";
  v: number;
  tick: number;
  time: number;
  mode: string;
  state?: string;
  vehicles: VehicleState[];
  failsafe: string[];
  signals: { EW: string; NS: string } | null;
  slots: SlotData[];
  ego: EgoData | null;
}

export interface AckFrame {
  type: "ack";
  v: number;
  cmd: string;
  tick: number;
  state: string;
}

export interface ErrorFrame {
  type: "error";
  v: number;
  code: string;
  message: string;
  tick: number;
}

export type ServerFrame = Snapshot | AckFrame | ErrorFrame;

export interface ControlFrame {
  type: "control";
  v: number;
  throttle: number;
  brake: number;
}

export interface SessionFrame {
  type: "session";
  v: number;
  cmd: "start" | "pause" | "reset" | "load";
  scenario?: unknown;
}

export function controlFrame(throttle: number, brake: number): ControlFrame {
  return { type: "control", v: PROTOCOL_VERSION, throttle, brake };
}

export function sessionFrame(cmd: SessionFrame["cmd"]): SessionFrame {
  return { type: "session", v: PROTOCOL_VERSION, cmd };
}
