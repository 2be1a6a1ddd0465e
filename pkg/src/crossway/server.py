"""Telemetry server: streams live simulation snapshots with AR slot quads
to browser clients over WebSocket and accepts human driving input and
session commands.

The simulation steps in its own thread; the server thread communicates
with it exclusively through bounded queues and a latest-wins input slot,
so slow clients can never stall the loop.
"""

from __future__ import annotations

import asyncio
import collections
import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import websockets

from . import projection as proj
from .engine import Simulation
from .errors import BadScenario, Crossed, NoEgo
from .scenario import ScenarioConfig, scenario_from_dict

PROTOCOL_VERSION = 1
CLIENT_QUEUE_FRAMES = 10
MAX_SNAPSHOT_HZ = 50.0


def build_ar_slots(sim: Simulation, ego) -> list[dict]:
    """Reserved (red) and available (green) slot boxes for the ego, with
    their image-plane quads for the driver view."""
    cam_cfg = sim.cfg.camera
    x, y = ego.position()
    heading = ego.heading()
    cam = proj.pose_camera(
        (x, y, cam_cfg.height), heading, math.radians(cam_cfg.pitch_deg),
        cam_cfg.focal, cam_cfg.pixel_size, cam_cfg.pixel_size,
        cam_cfg.cx, cam_cfg.cy,
    )
    out = []
    red_spans = []
    t_gap = sim.cfg.control.time_gap_s
    redundancy = sim.cfg.slot_redundancy
    for coupling in ego.slot_couplings:
        target = sim.vehicles.get(coupling.target_id)
        if target is None or coupling.same_path:
            continue
        shift = None
        conflict_s = None
        for off_e, off_t in coupling.shared_cps:
            if ego.s <= off_e:
                conflict_s = off_e
                shift = off_t
                break
        if conflict_s is None:
            continue
        target_dist = max(shift - target.s, 0.0)  # target's distance to the point
        try:
            box = proj.adjust_slot(
                target_est_dist=target_dist,
                ego_v=ego.v,
                ego_lateral=0.0,
                ego_dist_to_conflict=conflict_s - ego.s,
                target_length=target.length,
                target_width=target.width,
                time_gap=t_gap,
                redundancy=redundancy,
            )
        except Crossed:
            continue
        quad = proj.project_slot(box, ego.plan, conflict_s, cam)
        center = conflict_s - box.dist_to_conflict
        red_spans.append((center - box.length / 2.0, center + box.length / 2.0))
        out.append(_slot_dict(box, quad, target.vid))
    # green available slots: gaps between red boxes ahead of the ego
    if red_spans:
        red_spans.sort()
        window_start = ego.s + ego.length
        window_end = max(e for _, e in red_spans) + 25.0
        cursor = window_start
        greens = []
        for lo, hi in red_spans + [(window_end, window_end)]:
            if lo - cursor >= ego.length + 4.0:
                greens.append((cursor, lo))
            cursor = max(cursor, hi)
        for lo, hi in greens:
            center = (lo + hi) / 2.0
            box = proj.SlotBox(
                dist_to_conflict=0.0,
                lateral=0.0,
                length=hi - lo,
                width=sim.cfg.corridor.lane_width,
                status=proj.AVAILABLE_GREEN,
            )
            quad = proj.project_slot(box, ego.plan, center, cam)
            out.append(_slot_dict(box, quad, None, center_s=center))
    return out


def _slot_dict(box, quad, target_id, center_s=None):
    return {
        "status": box.status,
        "target": target_id,
        "length": round(box.length, 3),
        "width": round(box.width, 3),
        "dist_to_conflict": round(box.dist_to_conflict, 3),
        "center_s": None if center_s is None else round(center_s, 3),
        "quad": {
            "visible": quad.visible,
            "corners": [[round(u, 2), round(v, 2)] for u, v in quad.corners],
        },
    }


class SimSession:
    """Lifecycle wrapper around one Simulation with paced stepping.

    Snapshots are pushed into a bounded deque (drop-oldest); pedal input
    lands in a latest-wins slot applied at the next tick boundary.
    """

    def __init__(self, cfg: ScenarioConfig, out_dir: Optional[str] = None):
        self.cfg = cfg
        self.out_dir = out_dir
        self.sim = Simulation(cfg, collect_trace=out_dir is not None)
        self.state = "paused"
        self.snapshots = collections.deque(maxlen=CLIENT_QUEUE_FRAMES)
        self._lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._written = False
        decim = max(1, cfg.telemetry.decimation)
        # cap the publish rate at 50 Hz regardless of configuration
        min_decim = math.ceil(1.0 / (MAX_SNAPSHOT_HZ * cfg.dt_sim))
        self.decimation = max(decim, min_decim)

    # -- lifecycle ------------------------------------------------------

    def start(self):
        with self._lock:
            if self.state == "running":
                return
            self.state = "running"
            if self._thread is None or not self._thread.is_alive():
                self._stop.clear()
                self._thread = threading.Thread(target=self._loop, daemon=True)
                self._thread.start()

    def pause(self):
        with self._lock:
            if self.state == "running":
                self.state = "paused"
        self.publish()

    def reset(self):
        with self._lock:
            self.state = "paused"
            self.sim = Simulation(self.cfg, collect_trace=self.out_dir is not None)
            self._written = False
        self.publish()

    def load(self, cfg: ScenarioConfig):
        with self._lock:
            self.cfg = cfg
            self.state = "paused"
            self.sim = Simulation(cfg, collect_trace=self.out_dir is not None)
            self._written = False
            decim = max(1, cfg.telemetry.decimation)
            min_decim = math.ceil(1.0 / (MAX_SNAPSHOT_HZ * cfg.dt_sim))
            self.decimation = max(decim, min_decim)
        self.publish()

    def shutdown(self):
        self._stop.set()
        with self._lock:
            self.state = "stopped"
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=2.0)
        self.write_outputs()

    # -- sim thread -----------------------------------------------------

    def _loop(self):
        pace = max(self.cfg.telemetry.pace, 1e-6)
        next_wall = time.monotonic()
        while not self._stop.is_set():
            if self.state != "running":
                time.sleep(0.02)
                next_wall = time.monotonic()
                continue
            sim = self.sim
            if sim.tick >= sim.n_ticks:
                with self._lock:
                    self.state = "paused"
                self.write_outputs()
                continue
            sim.step()
            if sim.tick % self.decimation == 0:
                self.publish()
            next_wall += sim.dt / pace
            delay = next_wall - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_wall = time.monotonic()  # fell behind; don't burst

    # -- data plane -----------------------------------------------------

    def publish(self):
        """Build the current snapshot and enqueue it for fan-out."""
        sim = self.sim
        snap = sim.make_snapshot()
        ego = sim.hitl_ego()
        if ego is not None:
            snap["ego"] = {
                "id": ego.vid,
                "v": round(ego.v, 3),
                "a": round(ego.a, 3),
                "a_ref": round(ego.a_ref, 3),
                "slot": ego.slot_no,
                "eta": None if not math.isfinite(ego.eta) else round(ego.eta, 2),
                "throttle": round(ego.throttle, 4),
                "brake": round(ego.brake, 4),
                "s": round(ego.s, 3),
            }
            snap["slots"] = build_ar_slots(sim, ego)
        snap["state"] = self.state
        self.snapshots.append(snap)
        return snap

    def ingest_control(self, throttle: float, brake: float) -> dict:
        """Clamp and queue one pedal input; latest input per tick wins."""
        if self.sim.hitl_ego() is None and not self.cfg.hitl.enabled:
            raise NoEgo("scenario has no human-driven vehicle")
        clamped = not (0.0 <= throttle <= 1.0 and 0.0 <= brake <= 1.0)
        throttle = min(max(throttle, 0.0), 1.0)
        brake = min(max(brake, 0.0), 1.0)
        self.sim.apply_hitl_input(throttle, brake)
        return {"clamped": clamped, "tick": self.sim.tick}

    def write_outputs(self):
        if self.out_dir is None or self._written:
            return
        from .report import write_run_outputs

        self._written = True
        write_run_outputs(self.sim, self.out_dir)


class TelemetryServer:
    """WebSocket front end for a SimSession."""

    def __init__(self, session: SimSession, host: str = "127.0.0.1", port: int = 8765):
        self.session = session
        self.host = host
        self.port = port
        self._clients: set = set()
        self._started = asyncio.Event()
        self._stopping = asyncio.Event()

    async def handler(self, ws):
        queue: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_FRAMES)
        self._clients.add(queue)
        sender = asyncio.create_task(self._send_loop(ws, queue))
        try:
            async for raw in ws:
                reply = self.handle_frame(raw)
                if reply is not None:
                    await ws.send(json.dumps(reply))
        except websockets.ConnectionClosed:
            pass
        finally:
            self._clients.discard(queue)
            sender.cancel()
            if self.session.cfg.hitl.enabled and not self._clients:
                # driver left: the session ends and outputs are persisted
                self.session.pause()
                self.session.write_outputs()

    async def _send_loop(self, ws, queue):
        try:
            while True:
                frame = await queue.get()
                await ws.send(frame)
        except (websockets.ConnectionClosed, asyncio.CancelledError):
            pass

    def handle_frame(self, raw: str) -> Optional[dict]:
        """Process one inbound frame, returning the reply frame if any."""
        tick = self.session.sim.tick
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return _error("BadFrame", "frame is not valid JSON", tick)
        kind = msg.get("type")
        if kind == "control":
            try:
                result = self.session.ingest_control(
                    float(msg.get("throttle", 0.0)), float(msg.get("brake", 0.0))
                )
            except NoEgo as e:
                return _error("NoEgo", str(e), tick)
            except (TypeError, ValueError) as e:
                return _error("BadFrame", str(e), tick)
            if result["clamped"]:
                return _error("OutOfRange", "pedal input clamped to [0, 1]",
                              result["tick"])
            return None
        if kind == "session":
            cmd = msg.get("cmd")
            if cmd == "start":
                self.session.start()
            elif cmd == "pause":
                self.session.pause()
            elif cmd == "reset":
                self.session.reset()
            elif cmd == "load":
                try:
                    cfg = scenario_from_dict(msg.get("scenario", {}))
                    self.session.load(cfg)
                except BadScenario as e:
                    return _error("BadScenario", str(e), tick)
            else:
                return _error("BadFrame", f"unknown session command {cmd!r}", tick)
            return {"type": "ack", "v": PROTOCOL_VERSION, "cmd": cmd,
                    "tick": self.session.sim.tick, "state": self.session.state}
        return _error("BadFrame", f"unknown frame type {kind!r}", tick)

    async def _broadcast_loop(self):
        last = None
        while not self._stopping.is_set():
            snaps = self.session.snapshots
            frame = None
            while snaps:
                frame = snaps.popleft()
            if frame is not None and frame is not last:
                last = frame
                encoded = json.dumps(frame)
                for queue in list(self._clients):
                    if queue.full():
                        try:
                            queue.get_nowait()  # drop the oldest frame
                        except asyncio.QueueEmpty:
                            pass
                    queue.put_nowait(encoded)
            await asyncio.sleep(0.005)

    async def run(self):
        async with websockets.serve(self.handler, self.host, self.port):
            self._started.set()
            broadcaster = asyncio.create_task(self._broadcast_loop())
            try:
                await self._stopping.wait()
            finally:
                broadcaster.cancel()

    def stop(self):
        self._stopping.set()


def _error(code: str, message: str, tick: int) -> dict:
    return {"type": "error", "v": PROTOCOL_VERSION, "code": code,
            "message": message, "tick": tick}


def serve(cfg: ScenarioConfig, port: int, out_dir: Optional[str] = None,
          host: str = "127.0.0.1") -> None:
    """Run the telemetry server until interrupted.

    HITL scenarios start paused and wait for a driver; autonomous ones
    start immediately with clients as viewers.
    """
    session = SimSession(cfg, out_dir=out_dir)
    server = TelemetryServer(session, host=host, port=port)
    if not cfg.hitl.enabled:
        session.start()

    async def main():
        await server.run()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    finally:
        session.shutdown()
