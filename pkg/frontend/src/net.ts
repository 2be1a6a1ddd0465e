// WebSocket session: keeps only the latest snapshot, rate-limits control
// frames, and surfaces connection state for the HUD.

import {
  controlFrame,
  sessionFrame,
  type ServerFrame,
  type SessionFrame,
  type Snapshot,
} from "./protocol.js";

const MAX_CONTROL_HZ = 50;

export type ConnectionState = "connecting" | "open" | "closed";

export class ClientSession {
  latest: Snapshot | null = null;
  state: ConnectionState = "connecting";
  lastError: string | null = null;
  private ws: WebSocket;
  private lastControlSent = 0;

  constructor(public url: string) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => {
      this.state = "open";
    };
    this.ws.onclose = () => {
      this.state = "closed";
    };
    this.ws.onmessage = (ev) => this.onFrame(String(ev.data));
  }

  private onFrame(raw: string): void {
    let frame: ServerFrame;
    try {
      frame = JSON.parse(raw) as ServerFrame;
    } catch {
      return;
    }
    if (frame.type === "snapshot") {
      this.latest = frame; // render loop reads only the newest one
    } else if (frame.type === "error") {
      this.lastError = `${frame.code}: ${frame.message}`;
    }
  }

  sendSession(cmd: SessionFrame["cmd"]): void {
    if (this.state === "open") {
      this.ws.send(JSON.stringify(sessionFrame(cmd)));
    }
  }

  /** Send pedals at most at the control rate; inputs are suppressed when
   * the connection is not open. */
  sendControl(throttle: number, brake: number, nowMs: number): boolean {
    if (this.state !== "open") return false;
    if (nowMs - this.lastControlSent < 1000 / MAX_CONTROL_HZ) return false;
    this.lastControlSent = nowMs;
    this.ws.send(JSON.stringify(controlFrame(throttle, brake)));
    return true;
  }

  close(): void {
    this.ws.close();
  }
}
