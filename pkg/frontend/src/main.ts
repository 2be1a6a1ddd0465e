// Entry point: connect to the telemetry server, capture pedals, render.

import { PedalInput, readGamepad } from "./input.js";
import { ClientSession } from "./net.js";
import { renderFrame, type View } from "./render.js";

function canvasCtx(id: string, dpr: number): CanvasRenderingContext2D {
  const canvas = document.getElementById(id) as HTMLCanvasElement;
  canvas.width = canvas.clientWidth * dpr;
  canvas.height = canvas.clientHeight * dpr;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error(`no 2d context for #${id}`);
  return ctx;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("url") ??
    `ws://${window.location.hostname || "127.0.0.1"}:${params.get("port") ?? "8765"}`;
  const session = new ClientSession(url);
  const pedals = new PedalInput();
  const dpr = window.devicePixelRatio || 1;
  const view: View = {
    topDown: canvasCtx("top-down", dpr),
    driver: canvasCtx("driver", dpr),
    hud: document.getElementById("hud")!,
    dpr,
  };
  const status = document.getElementById("status")!;

  window.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") session.sendSession("start");
    if (ev.key === "p") session.sendSession("pause");
    if (ev.key === "r") session.sendSession("reset");
    pedals.keyEvent(ev.key, true);
  });
  window.addEventListener("keyup", (ev) => pedals.keyEvent(ev.key, false));
  document.getElementById("start")?.addEventListener("click", () =>
    session.sendSession("start"));
  document.getElementById("pause")?.addEventListener("click", () =>
    session.sendSession("pause"));
  document.getElementById("reset")?.addEventListener("click", () =>
    session.sendSession("reset"));

  let lastTime = performance.now();
  const loop = (now: number) => {
    const dt = Math.min((now - lastTime) / 1000, 0.1);
    lastTime = now;
    const analog = readGamepad(navigator.getGamepads ? navigator.getGamepads() : []);
    const sample = analog !== null ? pedals.setAnalog(analog.throttle, analog.brake)
      : pedals.tick(dt);
    if (session.state === "open") {
      session.sendControl(sample.throttle, sample.brake, now);
    }
    const snap = session.latest;
    if (snap) {
      renderFrame(view, snap);
    }
    status.textContent = session.state === "open"
      ? `connected · ${snap ? snap.state ?? "" : "waiting for frames"}`
      : session.state;
    status.classList.toggle("disconnected", session.state !== "open");
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

main();
