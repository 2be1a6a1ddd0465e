"""Deterministic fixed-timestep orchestration of the cooperative corridor:
channel polling, horizon estimation, slot reservation, control selection,
plant integration, spawning, the fixed-timing signal baseline, the
all-way-stop fail-safe, and metrics.

Three independent seeded RNG streams (spawning, channel, misc) keep the
spawn sequence identical across modes of the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from . import estimation as est
from . import reservation as rsv
from .channel import Channel
from .corridor import build_corridor, entry_lanes, random_route, through_route
from .errors import NotHeld
from .plant import PlantParams, plan_actuation, step_plant, PlantState
from .scenario import COOPERATIVE, SIGNALIZED, ScenarioConfig
from .world_model import CROSSING, GeoFence, LaneGraph, PathPlan, build_plan

PRED_RANGE_M = 120.0  # how far ahead a lane predecessor still couples
OCCUPANCY_MARGIN_M = 1.0  # safety envelope added to the body at conflict points
STOP_SPEED = 0.1  # m/s, counted as standing
STOP_EPISODE_S = 0.5
AWS_SERVICE_GAP_S = 2.0  # all-way-stop departure spacing
AWS_LATCH_SPEED = 0.05  # must be fully stopped before joining the queue
AWS_LATCH_DIST_M = 6.0  # must stop within this range of the bar to queue
IDM_MIN_GAP_M = 2.0
IDM_HEADWAY_S = 1.2
IDM_BRAKE = 3.0  # comfortable deceleration for the IDM interaction term

GREEN, YELLOW, RED = "green", "yellow", "red"


def energy_surrogate(samples, params: PlantParams, dt: float) -> float:
    """Positive tractive work over a (v, a) per-tick trace, joules."""
    if not len(samples):
        raise ValueError("empty trace")
    total = 0.0
    m = params.mass
    cv = params.drag_coeff
    cf = params.friction_coeff
    fd = params.mech_drag
    for v, a in samples:
        p = m * a * v + cv * v**3 + cf * v * v + fd * v
        if p > 0.0:
            total += p
    return total * dt


def idm_accel(v, v0, sigma, a_max, gap, lead_v):
    """IDM acceleration with the braking interaction term."""
    if gap <= 0.1:
        gap = 0.1
    s_star = IDM_MIN_GAP_M + v * IDM_HEADWAY_S + v * (v - lead_v) / (
        2.0 * math.sqrt(a_max * IDM_BRAKE)
    )
    if s_star < 0.0:
        s_star = 0.0
    return a_max * (1.0 - (v / v0) ** sigma - (s_star / gap) ** 2)


def signal_stop_accel(v, gap_to_bar, phase, v0, sigma, a_max):
    """Baseline approach law: brake for a standing virtual object at the
    stop bar on yellow/red, free flow on green.

    A vehicle too close to stop comfortably is committed and proceeds.
    """
    if phase == GREEN:
        return ctl.free_flow_accel(v, v0, a_max, sigma)
    if gap_to_bar <= 0.0:
        return ctl.free_flow_accel(v, v0, a_max, sigma)
    if v > 3.0 and gap_to_bar < v * v / (2.0 * 3.5):
        return ctl.free_flow_accel(v, v0, a_max, sigma)  # committed
    return idm_accel(v, v0, sigma, a_max, gap_to_bar, 0.0)


class SignalController:
    """Fixed-timing two-phase plan: corridor pair then side-street pair."""

    def __init__(self, green_s: float, yellow_s: float):
        self.green = green_s
        self.yellow = yellow_s
        self.cycle = 2.0 * (green_s + yellow_s)

    def phase(self, approach: str, now: float) -> str:
        t = now % self.cycle
        half = self.green + self.yellow
        ew = approach in ("W", "E")
        local = t if ew else t - half
        if 0.0 <= local < self.green:
            return GREEN
        if self.green <= local < half:
            return YELLOW
        return RED

    def states(self, now: float) -> dict[str, str]:
        return {"EW": self.phase("W", now), "NS": self.phase("N", now)}


@dataclass
class SlotCoupling:
    target_id: int
    # (ego-plan offset, target-plan offset) of each shared conflict point
    shared_cps: list[tuple[float, float]]
    same_path: bool = False


class VehicleAgent:
    __slots__ = (
        "vid", "role", "plan", "s", "v", "a", "a_ref", "length", "width",
        "spawn_time", "exit_time", "crossing_idx", "nxt_crossing", "eta", "self_est",
        "received", "received_at", "fresh_from", "slot_couplings",
        "predecessor", "throttle", "brake", "min_v", "stops", "stop_clock",
        "stop_counted", "energy_j", "est_err", "aws_queued", "aws_granted",
        "aws_engaged", "slot_no", "slot_iid",
    )

    def __init__(self, vid: int, role: str, plan: PathPlan, speed: float,
                 length: float, width: float, now: float):
        self.vid = vid
        self.role = role
        self.plan = plan
        self.s = 0.0
        self.v = speed
        self.a = 0.0
        self.a_ref = 0.0
        self.length = length
        self.width = width
        self.spawn_time = now
        self.exit_time = None
        self.crossing_idx = 0
        self.nxt_crossing = plan.crossings[0] if plan.crossings else None
        self.eta = math.inf
        self.self_est = None
        self.received = {}
        self.received_at = {}
        self.fresh_from = set()
        self.slot_couplings = []
        self.predecessor = None
        self.throttle = 0.0
        self.brake = 0.0
        self.min_v = speed
        self.stops = 0
        self.stop_clock = 0.0
        self.stop_counted = False
        self.energy_j = 0.0
        self.est_err = 0.0
        self.aws_queued = False
        self.aws_granted = False
        self.aws_engaged = False
        self.slot_no = 0
        self.slot_iid = None

    def next_crossing(self):
        return self.nxt_crossing

    def advance_crossing(self):
        self.crossing_idx += 1
        crossings = self.plan.crossings
        self.nxt_crossing = (
            crossings[self.crossing_idx] if self.crossing_idx < len(crossings) else None
        )

    def position(self):
        return self.plan.polyline.point_at(self.s)

    def heading(self):
        return self.plan.polyline.heading_at(self.s)


@dataclass
class VehicleMetrics:
    vehicle_id: int
    role: str
    spawn_time: float
    exit_time: float | None
    travel_time: float | None
    min_speed: float
    full_stops: int
    energy_j: float
    distance_m: float


@dataclass
class RunMetrics:
    vehicles: list[VehicleMetrics] = field(default_factory=list)
    collisions: list[tuple[float, int, int]] = field(default_factory=list)
    occupancy_overlaps: list[tuple[str, int, int]] = field(default_factory=list)
    max_est_err: float = 0.0
    estimator_calls: int = 0
    duration_s: float = 0.0
    spawned: int = 0
    exited: int = 0

    def completed(self) -> list[VehicleMetrics]:
        return [m for m in self.vehicles if m.travel_time is not None]


class Simulation:
    def __init__(self, cfg: ScenarioConfig, graph: LaneGraph | None = None,
                 collect_trace: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.graph = graph if graph is not None else build_corridor(cfg.corridor)
        self.dt = cfg.dt_sim
        self.tick = 0
        self.now = 0.0
        self.n_ticks = int(round(cfg.duration_s / cfg.dt_sim))
        ss = np.random.SeedSequence(cfg.seed).spawn(3)
        self.spawn_rng = np.random.default_rng(ss[0])
        self.channel_rng = np.random.default_rng(ss[1])
        self.misc_rng = np.random.default_rng(ss[2])
        self.channel = Channel(cfg.channel, self.channel_rng)
        self.channel.log_enabled = collect_trace
        self.pool = rsv.SlotPool()
        self.geofences = {
            iid: GeoFence(
                intersection_id=iid,
                trigger_dist_m=cfg.reservation.trigger_dist_m,
                trigger_eta_s=cfg.reservation.trigger_eta_s,
            )
            for iid in self.graph.intersections
        }
        self.reservation_events: list[tuple] = []
        self.signals = SignalController(cfg.signals.green_s, cfg.signals.yellow_s)
        self.vehicles: dict[int, VehicleAgent] = {}
        self._next_vid = 0
        self.gain_table = None
        if cfg.control.gain_table_path:
            self.gain_table = ctl.GainTable.from_json(
                open(cfg.control.gain_table_path).read()
            )
        self.gains = ctl.lookup_gains(0.0, 0.0, 0.0, self.gain_table) \
            if self.gain_table else ctl.ControlGains(cfg.control.k, cfg.control.gamma)
        self.est_every = max(1, int(round(cfg.estimator.dt_pred / cfg.dt_sim)))
        if cfg.estimator.dt_pred < cfg.dt_sim:
            self.est_every = 1
        self.est_cfg = est.EstimatorConfig(
            dt_pred=cfg.estimator.dt_pred,
            n_steps=cfg.estimator.n_steps,
            accel_max=cfg.estimator.accel_max,
            sigma=cfg.estimator.sigma,
            target_speed=cfg.corridor.speed_limit,
            accel_min=cfg.control.accel_min,
        )
        self.policy = ctl.TimeGapPolicy(cfg.control.time_gap_s, cfg.dims.length)
        # estimates older than this cannot seed a brand-new association;
        # covers one full prediction interval plus channel-delay headroom
        self.stale_window = 2.0 * cfg.estimator.dt_pred + 0.5
        # precomputed spawn schedule: (time, lane, route lanes, speed, role)
        self.pending_spawns = self._build_spawn_schedule()
        self.spawned = 0
        self.exited = 0
        # failsafe / all-way-stop state per intersection
        self.failsafe: dict[str, bool] = {i: False for i in self.graph.intersections}
        self.aws_queue: dict[str, list[int]] = {i: [] for i in self.graph.intersections}
        self.aws_grant: dict[str, int | None] = {i: None for i in self.graph.intersections}
        self.aws_last_grant: dict[str, float] = {i: -math.inf for i in self.graph.intersections}
        self.aws_engaged_ids: dict[str, set[int]] = {i: set() for i in self.graph.intersections}
        self.link_iid: dict[tuple[int, int], str | None] = {}
        # merge geometry per movement: (offset on movement, sibling movement,
        # offset on sibling) for every merge locus, for baseline merge yield
        self._merge_map: dict[str, list[tuple[float, str, float]]] = {}
        for iid in self.graph.intersections:
            for cp in self.graph.intersection_conflicts(iid):
                if cp.kind != "merging":
                    continue
                movs = cp.movements()
                for mine in movs:
                    for other in movs:
                        if other != mine:
                            self._merge_map.setdefault(mine, []).append(
                                (cp.offsets[mine], other, cp.offsets[other])
                            )
        # conflict occupancy recording at crossing points
        self._cp_offsets: dict[int, list] = {}  # vid -> [(offset, cp_id, movement)]
        self._cp_idx: dict[int, int] = {}
        self._cp_open: dict[tuple[str, int], tuple[float, str]] = {}
        self._cp_intervals: dict[str, list] = {}
        self.metrics = RunMetrics()
        self.collect_trace = collect_trace
        self.trace_rows: list[tuple] = []
        self.estimator_calls = 0
        self._lane_occupancy: dict[str, list] = {}
        self._hitl_pending: tuple[float, float] | None = None
        self._guard_violation: str | None = None

    # ------------------------------------------------------------------
    # spawning

    def _build_spawn_schedule(self):
        cfg = self.cfg
        schedule = []
        if cfg.hitl.enabled:
            chain = self._route_from_turns(cfg.hitl.entry_lane, cfg.hitl.route)
            schedule.append((0.0, cfg.hitl.entry_lane, chain, cfg.hitl.start_speed, "hitl_ego"))
        for e in cfg.spawning.explicit:
            chain = self._route_from_turns(e.lane, e.route)
            schedule.append((e.time, e.lane, chain, e.speed, e.role))
        rate = cfg.spawning.rate_per_leg_hz
        if rate > 0.0:
            v0 = cfg.corridor.speed_limit * cfg.spawning.speed_factor
            for leg in entry_lanes(self.graph):
                t = 0.0
                while True:
                    t += float(self.spawn_rng.exponential(1.0 / rate))
                    if t >= cfg.duration_s:
                        break
                    chain = random_route(self.graph, leg, self.spawn_rng)
                    schedule.append((t, leg, chain, v0, "npc"))
        schedule.sort(key=lambda e: (e[0], e[1]))
        return schedule

    def _route_from_turns(self, entry_lane: str, turns):
        if turns is None:
            return through_route(self.graph, entry_lane)
        chain = [entry_lane]
        turn_names = {"T": "through", "L": "left", "R": "right"}
        idx = 0
        while True:
            sucs = self.graph.lanes[chain[-1]].successors
            if not sucs:
                return chain
            if len(sucs) == 1:
                chain.append(sucs[0])
                continue
            want = turn_names[turns[idx]] if idx < len(turns) else "through"
            idx += 1
            pick = next((s for s in sucs if self.graph.lanes[s].turn == want), sucs[0])
            chain.append(pick)

    def _process_spawns(self):
        spawned_any = False
        still_pending = []
        for entry in self.pending_spawns:
            t, lane, chain, speed, role = entry
            if t > self.now:
                still_pending.append(entry)
                continue
            if self._spawn_blocked(lane):
                still_pending.append(entry)  # deferred, not dropped
                continue
            plan = build_plan(chain, self.graph)
            agent = VehicleAgent(
                self._next_vid, role, plan, speed,
                self.cfg.dims.length, self.cfg.dims.width, self.now,
            )
            plan.vehicle_id = agent.vid
            self._next_vid += 1
            self.vehicles[agent.vid] = agent
            self.spawned += 1
            offs = []
            for crossing in plan.crossings:
                for cp in self.graph.intersection_conflicts(crossing.intersection_id):
                    if cp.kind == CROSSING and crossing.movement_id in cp.offsets:
                        offs.append(
                            (crossing.entry_s + cp.offsets[crossing.movement_id],
                             cp.id, crossing.movement_id)
                        )
            offs.sort()
            self._cp_offsets[agent.vid] = offs
            self._cp_idx[agent.vid] = 0
            self._lane_occupancy.setdefault(chain[0], []).insert(0, (0.0, agent.vid))
            spawned_any = True
        self.pending_spawns = still_pending
        return spawned_any

    def _spawn_blocked(self, lane: str) -> bool:
        occupants = self._lane_occupancy.get(lane)
        if not occupants:
            return False
        limit = self.cfg.spawning.min_headway_m
        return any(s_in < limit for s_in, _ in occupants)

    # ------------------------------------------------------------------
    # per-tick registries

    def _rebuild_lane_occupancy(self):
        occ: dict[str, list] = {}
        for agent in self.vehicles.values():
            lane = agent.plan.lane_at(agent.s)
            s_in = agent.s - agent.plan.lane_start_s[lane]
            occ.setdefault(lane, []).append((s_in, agent.vid))
        for lst in occ.values():
            lst.sort()
        self._lane_occupancy = occ

    def _find_predecessor(self, agent: VehicleAgent):
        """Nearest vehicle ahead on the agent's plan within coupling range.

        Returns (vid, gap_front_to_lead_rear, lead_pos_on_plan) or None.
        """
        plan = agent.plan
        lane = plan.lane_at(agent.s)
        lane_ids = plan.lane_ids
        start_idx = lane_ids.index(lane)
        s_in_lane = agent.s - plan.lane_start_s[lane]
        for lid in lane_ids[start_idx:]:
            occupants = self._lane_occupancy.get(lid)
            if occupants:
                floor = s_in_lane if lid == lane else -1.0
                for s_in, vid in occupants:
                    if vid == agent.vid or s_in <= floor:
                        continue
                    pos_on_plan = plan.lane_start_s[lid] + s_in
                    if pos_on_plan - agent.s > PRED_RANGE_M:
                        return None
                    return vid, pos_on_plan
        return None

    # ------------------------------------------------------------------
    # couplings and links

    def _movement_at(self, agent: VehicleAgent, iid: str):
        for crossing in agent.plan.crossings:
            if crossing.intersection_id == iid:
                return crossing
        return None

    def _build_slot_coupling(self, ego: VehicleAgent, target: VehicleAgent,
                             iid: str) -> SlotCoupling:
        ec = self._movement_at(ego, iid)
        tc = self._movement_at(target, iid)
        if ec is None or tc is None or ec.movement_id == tc.movement_id:
            return SlotCoupling(target.vid, [], same_path=True)
        shared = []
        for cp in self.graph.pair_conflicts(ec.movement_id, tc.movement_id):
            shared.append(
                (ec.entry_s + cp.offsets[ec.movement_id],
                 tc.entry_s + cp.offsets[tc.movement_id])
            )
        shared.sort()
        return SlotCoupling(target.vid, shared, same_path=not shared)

    def _active_axis_shift(self, ego: VehicleAgent, coupling: SlotCoupling):
        """Axis shift of the coupling's governing conflict point, or the
        lane-chain shift for same-path targets; None once inactive."""
        target = self.vehicles.get(coupling.target_id)
        if target is None:
            return None
        if coupling.same_path:
            return self._lane_chain_shift(ego, target)
        for off_e, off_t in coupling.shared_cps:
            if ego.s <= off_e:
                return off_e - off_t
        return None

    def _lane_chain_shift(self, ego: VehicleAgent, target: VehicleAgent):
        lane = target.plan.lane_at(target.s)
        if lane not in ego.plan.lane_start_s:
            return None
        return ego.plan.lane_start_s[lane] - target.plan.lane_start_s[lane]

    def _refresh_couplings(self):
        """Recompute per-vehicle upstream sets and sync channel links."""
        desired: dict[tuple[int, int], str | None] = {}
        use_channel = self.cfg.mode == COOPERATIVE
        for agent in self.vehicles.values():
            pred = self._find_predecessor(agent)
            agent.predecessor = pred
            if not use_channel:
                continue
            nxt = agent.nxt_crossing
            iid = nxt.intersection_id if nxt is not None else None
            if pred is not None:
                desired[(pred[0], agent.vid)] = iid
            for coupling in agent.slot_couplings:
                if self._active_axis_shift(agent, coupling) is None:
                    continue
                desired[(coupling.target_id, agent.vid)] = agent.slot_iid or iid
        if not use_channel:
            return
        for pair in list(self.link_iid):
            if pair not in desired:
                self.channel.drop_link(*pair)
                del self.link_iid[pair]
        for pair, iid in desired.items():
            if pair not in self.link_iid:
                self.channel.register_link(pair[0], pair[1], self.now)
                receiver = self.vehicles.get(pair[1])
                if receiver is not None:
                    old = receiver.received.get(pair[0])
                    if old is not None and self.now - old.origin_time > self.stale_window:
                        del receiver.received[pair[0]]  # pre-dates this association
                        receiver.received_at.pop(pair[0], None)
                sender = self.vehicles.get(pair[0])
                if sender is not None and sender.self_est is not None:
                    self.channel.send(pair[0], pair[1], sender.self_est, self.now)
            self.link_iid[pair] = iid

    # ------------------------------------------------------------------
    # pipeline stages

    def _poll_channel(self):
        for vid in self.vehicles:
            agent = self.vehicles[vid]
            for msg in self.channel.poll(vid, self.now):
                agent.received[msg.sender_id] = msg.payload
                agent.received_at[msg.sender_id] = self.now
                agent.fresh_from.add(msg.sender_id)

    def _upstream_sources(self, agent: VehicleAgent):
        """(estimate, age, axis shift, active-until) for every coupled
        upstream with a usable received estimate, plus whether any of them
        delivered since the last prediction update."""
        sources = []
        fresh = False
        if agent.predecessor is not None:
            pred_vid = agent.predecessor[0]
            received = agent.received.get(pred_vid)
            pred = self.vehicles.get(pred_vid)
            if received is not None and pred is not None:
                shift = self._lane_chain_shift(agent, pred)
                if shift is not None:
                    sources.append(
                        (received, self.now - received.origin_time, shift, math.inf)
                    )
                    fresh = fresh or pred_vid in agent.fresh_from
        for coupling in agent.slot_couplings:
            if agent.predecessor is not None and coupling.target_id == agent.predecessor[0]:
                continue
            shift = self._active_axis_shift(agent, coupling)
            if shift is None:
                continue
            received = agent.received.get(coupling.target_id)
            if received is None:
                continue
            active_until = math.inf
            if not coupling.same_path:
                for off_e, _ in coupling.shared_cps:
                    if agent.s <= off_e:
                        active_until = off_e
                        break
            sources.append(
                (received, self.now - received.origin_time, shift, active_until)
            )
            fresh = fresh or coupling.target_id in agent.fresh_from
        return sources, fresh

    def _estimation_stage(self):
        cfg = self.est_cfg
        policy = self.policy
        updates: dict[int, object] = {}
        for vid in self.vehicles:
            agent = self.vehicles[vid]
            self.estimator_calls += 1
            sources, fresh = self._upstream_sources(agent)
            if not sources:
                updates[vid] = est.estimate_leader(
                    agent.v, agent.s, cfg, vehicle_id=vid, origin_time=self.now
                )
                continue
            if not fresh and agent.self_est is not None:
                updates[vid] = agent.self_est  # no information update
                continue
            updates[vid] = est.follower_estimate(
                agent.v, agent.s, sources, self.gains, policy, cfg,
                vehicle_id=vid, origin_time=self.now,
            )
        for vid, estimate in updates.items():
            agent = self.vehicles[vid]
            agent.self_est = estimate
            agent.fresh_from.clear()
        # broadcast to subscribers
        subscribers: dict[int, list[int]] = {}
        for (sender, receiver) in self.link_iid:
            subscribers.setdefault(sender, []).append(receiver)
        for sender in sorted(subscribers):
            agent = self.vehicles.get(sender)
            if agent is None or agent.self_est is None:
                continue
            for receiver in sorted(subscribers[sender]):
                self.channel.send(sender, receiver, agent.self_est, self.now)

    def _reservation_stage(self):
        cfg = self.cfg
        rcfg = cfg.reservation
        vlim = cfg.corridor.speed_limit
        candidates = []
        # leaders first so the preceding vehicle's ETA is already final
        order = sorted(self.vehicles.values(), key=lambda a: -a.s)
        for agent in order:
            nxt = agent.nxt_crossing
            if nxt is None:
                agent.eta = math.inf
                continue
            d = max(nxt.entry_s - agent.s, 0.0)
            t_temp = rsv.temp_eta(agent.v, d, vlim, rcfg.preferred_accel, rcfg.max_accel)
            preceding_eta = None
            if agent.predecessor is not None:
                lead = self.vehicles[agent.predecessor[0]]
                lead_next = lead.nxt_crossing
                if lead_next is not None and lead_next.intersection_id == nxt.intersection_id:
                    preceding_eta = lead.eta if math.isfinite(lead.eta) else None
                elif lead.crossing_idx > 0 or lead_next is None:
                    preceding_eta = 0.0  # preceding already inside or beyond
            agent.eta = rsv.final_eta(t_temp, preceding_eta, rcfg.headway_s)
            if agent.slot_iid == nxt.intersection_id:
                continue  # already holds this crossing's slot
            if self.failsafe.get(nxt.intersection_id, False):
                continue  # reservations suspended during all-way stop
            candidates.append((agent.eta, agent.vid, agent, nxt, d))
        candidates.sort(key=lambda c: (c[0], c[1]))
        for eta, vid, agent, nxt, d in candidates:
            iid = nxt.intersection_id
            fence = self.geofences[iid]
            if not (eta <= fence.trigger_eta_s or d <= fence.trigger_dist_m):
                continue
            my_move = nxt.movement_id

            def conflicts_with(other_vid, _iid=iid, _move=my_move):
                other = self.vehicles.get(other_vid)
                if other is None:
                    return False
                oc = self._movement_at(other, _iid)
                return oc is not None and self.graph.movements_conflict(_move, oc.movement_id)

            pred_id = agent.predecessor[0] if agent.predecessor is not None else None
            assignment = rsv.try_reserve(
                vid, iid, eta, d, self.pool, conflicts_with, rcfg, preceding_id=pred_id
            )
            if assignment is None:
                continue
            agent.slot_no = assignment.slot
            agent.slot_iid = iid
            self.reservation_events.append(
                (self.tick, vid, iid, assignment.slot, sorted(assignment.target_ids))
            )
            agent.slot_couplings = [
                self._build_slot_coupling(agent, self.vehicles[t], iid)
                for t in sorted(assignment.target_ids)
                if t in self.vehicles
            ]
            # estimates predating this association are unusable unless the
            # sender already streams to us over a live link
            for coupling in agent.slot_couplings:
                if (coupling.target_id, vid) in self.link_iid:
                    continue
                old = agent.received.get(coupling.target_id)
                if old is not None and self.now - old.origin_time > self.stale_window:
                    del agent.received[coupling.target_id]
                    agent.received_at.pop(coupling.target_id, None)

    def _failsafe_stage(self):
        if self.cfg.mode != COOPERATIVE:
            return
        self.channel.update_links(self.now)
        flagged: dict[str, bool] = {i: False for i in self.graph.intersections}
        for link in self.channel.links():
            if link.failsafe_active:
                iid = self.link_iid.get(link.pair)
                if iid is not None:
                    flagged[iid] = True
        for iid in self.graph.intersections:
            self.failsafe[iid] = flagged[iid]
        # all-way-stop service; keeps running until engaged vehicles drain
        for iid in self.graph.intersections:
            if not (self.failsafe[iid] or self.aws_engaged_ids[iid]
                    or self.aws_grant[iid] is not None):
                continue
            grant = self.aws_grant[iid]
            if grant is not None:
                agent = self.vehicles.get(grant)
                crossing = self._movement_at(agent, iid) if agent else None
                if agent is None or crossing is None or agent.s > crossing.exit_s:
                    self.aws_grant[iid] = None
            if (
                self.aws_grant[iid] is None
                and self.aws_queue[iid]
                and self.now - self.aws_last_grant[iid] >= AWS_SERVICE_GAP_S
            ):
                vid = self.aws_queue[iid].pop(0)
                agent = self.vehicles.get(vid)
                if agent is not None:
                    agent.aws_queued = False
                    agent.aws_granted = True
                    self.aws_grant[iid] = vid
                    self.aws_last_grant[iid] = self.now
                    self.aws_engaged_ids[iid].discard(vid)

    def _query_received(self, agent: VehicleAgent, sender: int):
        estimate = agent.received.get(sender)
        if estimate is None:
            return None
        rel = self.now - estimate.origin_time
        horizon = (len(estimate.speeds) - 1) * estimate.dt
        if rel > horizon:
            return None  # exhausted horizon: unusable, caller skips/escalates
        return est.query_estimate(estimate, estimate.origin_time + max(rel, 0.0))

    def _control_stage(self):
        cfg = self.cfg
        vlim = cfg.corridor.speed_limit
        a_min, a_max = cfg.control.accel_min, cfg.control.accel_max
        sigma = cfg.control.sigma
        for agent in self.vehicles.values():
            if agent.role == "hitl_ego":
                if agent.brake > 0.0:
                    a_ref = agent.brake * a_min
                else:
                    a_ref = agent.throttle * a_max
                agent.a_ref = a_ref
                continue
            if cfg.mode == SIGNALIZED:
                agent.a_ref = self._signalized_accel(agent, vlim, sigma, a_max, a_min)
                continue
            agent.a_ref = self._cooperative_accel(agent, vlim, sigma, a_max, a_min)

    def _cooperative_accel(self, agent, vlim, sigma, a_max, a_min):
        nxt = agent.nxt_crossing
        if agent.aws_granted and (nxt is None or agent.s > nxt.exit_s):
            agent.aws_granted = False
            agent.aws_engaged = False
        # fail-safe all-way stop: local perception-based driving overrides
        # slot following. A vehicle that started braking for the stop bar
        # stays engaged until served, even if the blackout clears meanwhile.
        if nxt is not None:
            iid = nxt.intersection_id
            if agent.s < nxt.entry_s and not agent.aws_granted:
                if self.failsafe.get(iid, False) and not agent.aws_engaged:
                    agent.aws_engaged = True
                    self.aws_engaged_ids[iid].add(agent.vid)
            elif agent.aws_engaged and not agent.aws_granted:
                # overran the bar without service; proceed through
                agent.aws_engaged = False
                self.aws_engaged_ids[iid].discard(agent.vid)
                if agent.aws_queued:
                    agent.aws_queued = False
                    if agent.vid in self.aws_queue[iid]:
                        self.aws_queue[iid].remove(agent.vid)
            aws_mode = (
                agent.aws_granted
                or agent.aws_engaged
                or (self.failsafe.get(iid, False) and agent.s >= nxt.entry_s)
            )
            if aws_mode:
                if agent.aws_engaged and not agent.aws_granted:
                    gap = nxt.entry_s - agent.s
                    if agent.v < AWS_LATCH_SPEED and gap < AWS_LATCH_DIST_M \
                            and not agent.aws_queued:
                        agent.aws_queued = True
                        self.aws_queue[iid].append(agent.vid)
                    a = idm_accel(agent.v, vlim, sigma, a_max, gap, 0.0)
                else:
                    a = ctl.free_flow_accel(agent.v, vlim, a_max, sigma)
                if agent.predecessor is not None:
                    pred = self.vehicles[agent.predecessor[0]]
                    gap_pred = agent.predecessor[1] - pred.length - agent.s
                    a = min(a, idm_accel(agent.v, vlim, sigma, a_max, gap_pred, pred.v))
                return min(max(a, a_min), a_max)

        # slot-following: most conservative response over coupled targets,
        # never exceeding free-flow relaxation toward the limit
        ego_s = agent.s
        ego_v = agent.v
        k_gain = self.gains.k
        gamma = self.gains.gamma
        t_gap = self.policy.time_gap
        err = 0.0
        accel = None
        if agent.predecessor is not None:
            pred_vid, _ = agent.predecessor
            state = self._query_received(agent, pred_vid)
            pred = self.vehicles.get(pred_vid)
            if state is not None and pred is not None:
                shift = self._lane_chain_shift(agent, pred)
                if shift is not None:
                    v_t, d_t = state
                    e = abs(d_t - pred.s)
                    if e > err:
                        err = e
                    spacing = ego_s - (d_t + shift) + pred.length + ego_v * t_gap
                    accel = -k_gain * (spacing + gamma * (ego_v - v_t))
        for coupling in agent.slot_couplings:
            if agent.predecessor is not None and coupling.target_id == agent.predecessor[0]:
                continue  # already coupled as the lane predecessor
            shift = self._active_axis_shift(agent, coupling)
            if shift is None:
                continue
            state = self._query_received(agent, coupling.target_id)
            if state is None:
                continue  # association too fresh: no estimate yet
            tgt = self.vehicles.get(coupling.target_id)
            v_t, d_t = state
            length = self.policy.target_length
            if tgt is not None:
                e = abs(d_t - tgt.s)
                if e > err:
                    err = e
                length = tgt.length
            spacing = ego_s - (d_t + shift) + length + ego_v * t_gap
            a = -k_gain * (spacing + gamma * (ego_v - v_t))
            if accel is None or a < accel:
                accel = a
        agent.est_err = err
        if err > self.metrics.max_est_err:
            self.metrics.max_est_err = err
        free = ctl.free_flow_accel(ego_v, vlim, a_max, sigma)
        a = free if accel is None else min(accel, free)
        return min(max(a, a_min), a_max)

    def _signalized_accel(self, agent, vlim, sigma, a_max, a_min):
        candidates = [ctl.free_flow_accel(agent.v, vlim, a_max, sigma)]
        if agent.predecessor is not None:
            pred = self.vehicles[agent.predecessor[0]]
            pos_on_plan = agent.predecessor[1]
            gap = pos_on_plan - pred.length - agent.s
            candidates.append(idm_accel(agent.v, vlim, sigma, a_max, gap, pred.v))
        nxt = agent.nxt_crossing
        # merge yield: follow vehicles on sibling connectors feeding the
        # same exit (invisible to the own-plan predecessor walk)
        merge_crossing = None
        if nxt is not None and nxt.entry_s - agent.s < 60.0:
            merge_crossing = nxt
        elif agent.crossing_idx > 0:
            prev = agent.plan.crossings[agent.crossing_idx - 1]
            if agent.s <= prev.exit_s + 1e-9:
                merge_crossing = prev
        a_merge = None
        if merge_crossing is not None:
            a_merge = self._merge_follow_accel(agent, merge_crossing, vlim, sigma, a_max)
            if a_merge is not None:
                candidates.append(a_merge)
        if nxt is not None:
            if agent.s < nxt.entry_s:
                approach = nxt.movement_id.split(":")[-1][0]  # W|S|E|N
                phase = self.signals.phase(approach, self.now)
                candidates.append(signal_stop_accel(
                    agent.v, nxt.entry_s - agent.s, phase, vlim, sigma, a_max
                ))
            # permissive left: yield to opposing through traffic, both on
            # the approach and inside the connector up to the crossing
            # point; with a congested merge exit, hold at the yield point
            # rather than stall astride the through path
            if self.graph.lanes[nxt.movement_id].turn == "left":
                merge_pressure = a_merge is not None and a_merge < 0.2
                yield_gap = self._left_yield_gap(agent, nxt, merge_pressure)
                if yield_gap is not None:
                    candidates.append(idm_accel(agent.v, vlim, sigma, a_max,
                                                yield_gap, 0.0))
        a = min(candidates)
        return min(max(a, a_min), a_max)

    def _merge_follow_accel(self, agent, crossing, vlim, sigma, a_max):
        """IDM response to the nearest vehicle ahead on a merging sibling
        connector, projected through the shared merge locus."""
        merges = self._merge_map.get(crossing.movement_id)
        if not merges:
            return None
        ego_rel_base = agent.s - crossing.entry_s
        worst = None
        for off_mine, other_mov, off_other in merges:
            occupants = self._lane_occupancy.get(other_mov)
            if not occupants:
                continue
            ego_rel = ego_rel_base - off_mine
            for s_in, vid in occupants:
                other_rel = s_in - off_other
                if other_rel <= ego_rel:
                    continue  # behind or abreast on the common axis
                other = self.vehicles[vid]
                gap = other_rel - ego_rel - other.length
                a = idm_accel(agent.v, vlim, sigma, a_max, gap, other.v)
                if worst is None or a < worst:
                    worst = a
        return worst

    _OPPOSING = {"W": "E", "E": "W", "N": "S", "S": "N"}

    def _left_yield_gap(self, agent, crossing, hold_for_merge=False):
        """Gap to the yield point before the opposing-through crossing, or
        None when the crossing is clear for long enough to finish the turn
        and the merge exit beyond it is not backing up."""
        approach = crossing.movement_id.split(":")[-1][0]
        opposing = self._OPPOSING[approach]
        iid = crossing.intersection_id
        opposing_through = f"cn:{iid}:{opposing}T"
        cps = self.graph.pair_conflicts(crossing.movement_id, opposing_through)
        if not cps:
            return None
        cp = cps[0]
        # the opposing right merges across the turn exit; yield to it too
        watch = {opposing_through: cp.offsets[opposing_through]}
        opposing_right = f"cn:{iid}:{opposing}R"
        for mcp in self.graph.pair_conflicts(crossing.movement_id, opposing_right):
            watch[opposing_right] = mcp.offsets[opposing_right]
            break
        cp_off_mine = crossing.entry_s + cp.offsets[crossing.movement_id]
        yield_point = cp_off_mine - 4.0
        if agent.s >= cp_off_mine:
            return None  # past the crossing point
        last_stop = cp_off_mine - 1.0
        brake_dist = agent.v * agent.v / (2.0 * 4.8)
        if agent.s + brake_dist > last_stop and agent.v > 2.0:
            return None  # cannot stop before the point anymore: committed
        stop_target = yield_point if agent.s < yield_point - 0.5 else last_stop
        if hold_for_merge:
            return stop_target - agent.s
        # time for the ego to fully clear the crossing point if it goes now
        clear_dist = cp_off_mine - agent.s + agent.length + 2.0
        v0 = agent.v
        accel = 1.5
        t_clear = (-v0 + math.sqrt(v0 * v0 + 2.0 * accel * clear_dist)) / accel
        horizon = t_clear + 1.2
        for other in self.vehicles.values():
            if other.vid == agent.vid:
                continue
            oc = other.nxt_crossing
            ref = None
            if oc is not None and oc.intersection_id == iid \
                    and oc.movement_id in watch:
                ref = oc
            elif other.crossing_idx > 0:
                prev = other.plan.crossings[other.crossing_idx - 1]
                if prev.intersection_id == iid and prev.movement_id in watch \
                        and other.s <= prev.exit_s + 2.0:
                    ref = prev
            if ref is None:
                continue
            dist_to_cp = ref.entry_s + watch[ref.movement_id] - other.s
            if dist_to_cp < -(other.length + 2.0):
                continue  # fully cleared the shared locus
            if dist_to_cp <= 0.0 or dist_to_cp / max(other.v, 0.5) < horizon:
                return stop_target - agent.s
        return None

    def _plant_stage(self):
        dt = self.dt
        params = self.cfg.plant
        for agent in self.vehicles.values():
            f_net, t_brake = plan_actuation(agent.a_ref, agent.v, params)
            state = step_plant(
                PlantState(s=agent.s, v=agent.v, a=agent.a), f_net, t_brake, dt, params
            )
            agent.s = state.s
            agent.v = state.v
            agent.a = state.a
            # positive tractive power only
            p = (params.mass * state.a * state.v + params.drag_coeff * state.v**3
                 + params.friction_coeff * state.v**2 + params.mech_drag * state.v)
            if p > 0.0:
                agent.energy_j += p * dt
            if state.v < agent.min_v:
                agent.min_v = state.v
            if state.v < STOP_SPEED:
                agent.stop_clock += dt
                if agent.stop_clock > STOP_EPISODE_S and not agent.stop_counted:
                    agent.stops += 1
                    agent.stop_counted = True
            else:
                agent.stop_clock = 0.0
                agent.stop_counted = False

    def _housekeeping(self):
        to_remove = []
        for agent in self.vehicles.values():
            # conflict-point occupancy bookkeeping (offsets sorted; pointer
            # trails the vehicle's rear so each point is visited once)
            offs = self._cp_offsets.get(agent.vid)
            if offs:
                idx = self._cp_idx[agent.vid]
                rear = agent.s - agent.length - OCCUPANCY_MARGIN_M
                front = agent.s + OCCUPANCY_MARGIN_M
                while idx < len(offs) and offs[idx][0] < rear:
                    off, cp_id, movement = offs[idx]
                    key = (cp_id, agent.vid)
                    if key in self._cp_open:
                        start, mov = self._cp_open.pop(key)
                        self._cp_intervals.setdefault(cp_id, []).append(
                            (start, self.now, agent.vid, mov)
                        )
                    idx += 1
                self._cp_idx[agent.vid] = idx
                j = idx
                while j < len(offs) and offs[j][0] <= front:
                    key = (offs[j][1], agent.vid)
                    if key not in self._cp_open:
                        self._cp_open[key] = (self.now, offs[j][2])
                    j += 1
            # slot release at the intersection exit
            nxt = agent.nxt_crossing
            if nxt is not None and agent.s > nxt.exit_s:
                if agent.slot_iid == nxt.intersection_id:
                    try:
                        self.pool.release(agent.vid, nxt.intersection_id)
                    except NotHeld:
                        pass
                    agent.slot_no = 0
                    agent.slot_iid = None
                    agent.slot_couplings = []
                    self.reservation_events.append(
                        (self.tick, agent.vid, nxt.intersection_id, 0, [])
                    )
                agent.advance_crossing()
            # rear-end check against the plan predecessor: 1-D overlap along
            # the plan, confirmed by 2-D bumper proximity (merging arcs can
            # overlap in plan coordinates while laterally separate)
            if agent.predecessor is not None:
                pred = self.vehicles.get(agent.predecessor[0])
                if pred is not None:
                    lane = pred.plan.lane_at(pred.s)
                    if lane in agent.plan.lane_start_s:
                        pred_pos = agent.plan.lane_start_s[lane] + (
                            pred.s - pred.plan.lane_start_s[lane]
                        )
                        if pred_pos - pred.length - agent.s < -0.01 and agent.s > 0:
                            fx, fy = agent.plan.polyline.point_at(agent.s)
                            rx, ry = pred.plan.polyline.point_at(pred.s - pred.length)
                            if math.hypot(fx - rx, fy - ry) < 0.6:
                                self.metrics.collisions.append(
                                    (self.now, agent.vid, pred.vid)
                                )
            if agent.s >= agent.plan.length:
                to_remove.append(agent.vid)
        for vid in to_remove:
            self._retire(vid, exited=True)

    def _retire(self, vid: int, exited: bool):
        agent = self.vehicles.pop(vid)
        if exited:
            agent.exit_time = self.now
            self.exited += 1
        if agent.slot_iid is not None:
            try:
                self.pool.release(vid, agent.slot_iid)
            except NotHeld:
                pass
        for key in [k for k in self._cp_open if k[1] == vid]:
            start, mov = self._cp_open.pop(key)
            self._cp_intervals.setdefault(key[0], []).append(
                (start, self.now, vid, mov)
            )
        self._cp_offsets.pop(vid, None)
        self._cp_idx.pop(vid, None)
        for iid in self.graph.intersections:
            if vid in self.aws_queue[iid]:
                self.aws_queue[iid].remove(vid)
            if self.aws_grant[iid] == vid:
                self.aws_grant[iid] = None
            self.aws_engaged_ids[iid].discard(vid)
        self.channel.forget_receiver(vid)
        for pair in [p for p in self.link_iid if vid in p]:
            self.channel.drop_link(*pair)
            del self.link_iid[pair]
        self.metrics.vehicles.append(self._vehicle_metrics(agent))

    def _vehicle_metrics(self, agent: VehicleAgent) -> VehicleMetrics:
        travel = None
        if agent.exit_time is not None:
            travel = agent.exit_time - agent.spawn_time
        return VehicleMetrics(
            vehicle_id=agent.vid,
            role=agent.role,
            spawn_time=agent.spawn_time,
            exit_time=agent.exit_time,
            travel_time=travel,
            min_speed=agent.min_v,
            full_stops=agent.stops,
            energy_j=agent.energy_j,
            distance_m=agent.s,
        )

    def _trace_stage(self):
        if not self.collect_trace:
            return
        mode = self.cfg.mode
        t = round(self.now, 6)
        for agent in self.vehicles.values():
            x, y = agent.position()
            nxt = agent.nxt_crossing
            iid = agent.slot_iid or (nxt.intersection_id if nxt else "")
            self.trace_rows.append((
                t, agent.vid, agent.role, agent.s, x, y, agent.v, agent.a,
                agent.slot_no, iid, agent.est_err, mode,
            ))

    # ------------------------------------------------------------------

    def apply_hitl_input(self, throttle: float, brake: float):
        """Queue pedal input; applied atomically at the next tick boundary."""
        self._hitl_pending = (min(max(throttle, 0.0), 1.0),
                              min(max(brake, 0.0), 1.0))

    def hitl_ego(self) -> VehicleAgent | None:
        for agent in self.vehicles.values():
            if agent.role == "hitl_ego":
                return agent
        return None

    def step(self):
        """One deterministic tick of the full pipeline."""
        self._rebuild_lane_occupancy()
        self._process_spawns()
        self._refresh_couplings()
        if self._hitl_pending is not None:
            ego = self.hitl_ego()
            if ego is not None:
                ego.throttle, ego.brake = self._hitl_pending
            self._hitl_pending = None
        if self.cfg.mode == COOPERATIVE:
            self._poll_channel()
            if self.tick % self.est_every == 0:
                self._estimation_stage()
            self._reservation_stage()
            self._failsafe_stage()
        self._control_stage()
        self._plant_stage()
        self._housekeeping()
        self._trace_stage()
        self.tick += 1
        self.now = self.tick * self.dt

    def run(self) -> RunMetrics:
        while self.tick < self.n_ticks:
            self.step()
        return self.finalize()

    def finalize(self) -> RunMetrics:
        if self.metrics.duration_s > 0.0:
            return self.metrics  # already finalized
        for vid in list(self.vehicles):
            self._retire(vid, exited=False)
        self.metrics.duration_s = self.now
        self.metrics.estimator_calls = self.estimator_calls
        self.metrics.spawned = self.spawned
        self.metrics.exited = self.exited
        self.metrics.occupancy_overlaps = self._find_occupancy_overlaps()
        return self.metrics

    def _find_occupancy_overlaps(self):
        overlaps = []
        for cp_id, intervals in sorted(self._cp_intervals.items()):
            ordered = sorted(intervals)
            for i, (s0, e0, v0, m0) in enumerate(ordered):
                for s1, e1, v1, m1 in ordered[i + 1 :]:
                    if s1 >= e0:
                        break
                    if v1 != v0 and m1 != m0:
                        overlaps.append((cp_id, v0, v1))
        return overlaps

    # ------------------------------------------------------------------

    def make_snapshot(self) -> dict:
        """Immutable state summary for telemetry and the UI."""
        vehicles = []
        for agent in self.vehicles.values():
            x, y = agent.position()
            nxt = agent.nxt_crossing
            vehicles.append({
                "id": agent.vid,
                "role": agent.role,
                "x": round(x, 3),
                "y": round(y, 3),
                "heading": round(agent.heading(), 4),
                "v": round(agent.v, 3),
                "a": round(agent.a, 3),
                "slot": agent.slot_no,
                "intersection": agent.slot_iid or (nxt.intersection_id if nxt else None),
                "length": agent.length,
                "width": agent.width,
            })
        snap = {
            "type": "snapshot",
            "v": 1,
            "tick": self.tick,
            "time": round(self.now, 4),
            "mode": self.cfg.mode,
            "vehicles": vehicles,
            "failsafe": [i for i in self.graph.intersections if self.failsafe[i]],
            "signals": self.signals.states(self.now) if self.cfg.mode == SIGNALIZED else None,
            "slots": [],
            "ego": None,
        }
        return snap


def run_sensitivity(cfg: ScenarioConfig, dt_pred_values) -> list[dict]:
    """Run the scenario once per prediction step and tabulate the maximum
    position-estimation error and the estimator invocation rate."""
    from dataclasses import replace

    rows = []
    for dt_pred in dt_pred_values:
        n_steps = max(1, int(round(cfg.estimator.horizon / dt_pred)))
        variant = replace(
            cfg, estimator=replace(cfg.estimator, dt_pred=dt_pred, n_steps=n_steps)
        )
        sim = Simulation(variant)
        metrics = sim.run()
        rows.append({
            "dt_pred": dt_pred,
            "max_est_err_m": metrics.max_est_err,
            "estimator_calls_per_s": metrics.estimator_calls / metrics.duration_s,
        })
    return rows
