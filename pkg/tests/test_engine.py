import math

import numpy as np
import pytest

from crossway.channel import ChannelConfig
from crossway.corridor import CorridorParams
from crossway.engine import (
    GREEN,
    RED,
    SignalController,
    Simulation,
    energy_surrogate,
    signal_stop_accel,
)
from crossway.estimation import EstimatorConfig
from crossway.plant import PlantParams
from crossway.presets import corridor_nominal, failsafe, sensitivity
from crossway.scenario import (
    COOPERATIVE,
    SIGNALIZED,
    ExplicitSpawn,
    ScenarioConfig,
    SpawnConfig,
)

QUIET_CHANNEL = ChannelConfig(loss_prob=0.0, burst_windows=())


def single_spawn(lane="EB:entry", speed=14.0, t=0.0, route=("T",)):
    return SpawnConfig(explicit=(ExplicitSpawn(time=t, lane=lane, speed=speed,
                                               route=route),))


# ---------------------------------------------------------------------------
# stepping basics


def test_empty_world_time_advances():
    cfg = ScenarioConfig(duration_s=1.0, channel=QUIET_CHANNEL)
    sim = Simulation(cfg)
    sim.step()
    assert sim.tick == 1 and sim.now == pytest.approx(0.02)
    assert not sim.vehicles


def test_single_vehicle_crosses_at_limit():
    cfg = ScenarioConfig(duration_s=60.0, channel=QUIET_CHANNEL,
                         spawning=single_spawn())
    m = Simulation(cfg).run()
    assert m.exited == 1
    vm = m.vehicles[0]
    assert vm.min_speed > 13.95
    assert vm.full_stops == 0


def test_equal_eta_tie_break_and_separation():
    # two vehicles in perfectly symmetric positions trigger the same tick;
    # the smaller id reserves first and the other follows without overlap
    cfg = ScenarioConfig(
        duration_s=60.0, channel=QUIET_CHANNEL,
        spawning=SpawnConfig(explicit=(
            ExplicitSpawn(time=0.0, lane="EB:entry", speed=14.0, route=("T",)),
            ExplicitSpawn(time=0.0, lane="NB:i0:in", speed=14.0, route=("T",)),
        )),
    )
    sim = Simulation(cfg)
    slots = {}
    while sim.tick < sim.n_ticks:
        sim.step()
        for vid, a in sim.vehicles.items():
            if a.slot_no and vid not in slots:
                slots[vid] = a.slot_no
        if len(slots) == 2:
            break
    assert slots[0] == 1 and slots[1] == 2
    m = Simulation(cfg).run()
    assert not m.occupancy_overlaps and not m.collisions
    assert m.vehicles[1].travel_time > m.vehicles[0].travel_time


def test_conservation_every_tick():
    cfg = corridor_nominal(seed=2, duration_s=60.0, rate_per_leg_hz=0.1)
    sim = Simulation(cfg)
    while sim.tick < sim.n_ticks:
        sim.step()
        assert sim.spawned == sim.exited + len(sim.vehicles)


# ---------------------------------------------------------------------------
# spawning


def test_rate_zero_spawns_nothing():
    cfg = ScenarioConfig(duration_s=5.0, channel=QUIET_CHANNEL,
                         spawning=SpawnConfig(rate_per_leg_hz=0.0))
    m = Simulation(cfg).run()
    assert m.spawned == 0


def test_seeded_spawn_sequence_reproducible():
    cfg = corridor_nominal(seed=8, duration_s=100.0)
    a = Simulation(cfg).pending_spawns
    b = Simulation(cfg).pending_spawns
    assert a == b
    c = Simulation(cfg.with_seed(9)).pending_spawns
    assert a != c


def test_blocked_spawn_deferred_not_dropped():
    cfg = ScenarioConfig(
        duration_s=30.0, channel=QUIET_CHANNEL,
        spawning=SpawnConfig(explicit=(
            ExplicitSpawn(time=0.0, lane="EB:entry", speed=3.0, route=("T",)),
            ExplicitSpawn(time=0.1, lane="EB:entry", speed=3.0, route=("T",)),
        ), min_headway_m=10.0),
    )
    sim = Simulation(cfg)
    spawn_times = {}
    while sim.tick < sim.n_ticks and len(spawn_times) < 2:
        sim.step()
        for vid, a in sim.vehicles.items():
            spawn_times.setdefault(vid, a.spawn_time)
    assert len(spawn_times) == 2
    # second vehicle waited until the leader opened a 10 m headway
    assert spawn_times[1] > 0.1 + 1.0


# ---------------------------------------------------------------------------
# signals and baseline


def test_signal_phase_plan():
    ctl = SignalController(30.0, 3.0)
    assert ctl.phase("W", 0.0) == GREEN
    assert ctl.phase("E", 31.0) == "yellow"
    assert ctl.phase("W", 40.0) == RED
    assert ctl.phase("N", 10.0) == RED
    assert ctl.phase("S", 40.0) == GREEN
    assert ctl.cycle == 66.0


def test_signal_stop_accel_green_free_flow():
    a = signal_stop_accel(10.0, 50.0, GREEN, 14.0, 4.0, 2.0)
    assert a == pytest.approx(2.0 * (1.0 - (10.0 / 14.0) ** 4))


def test_signal_stop_accel_rest_at_bar():
    a = signal_stop_accel(0.0, 2.0, RED, 14.0, 4.0, 2.0)
    assert abs(a) < 1e-9  # standing at the IDM standoff distance


def test_signal_stop_closed_loop_stops_before_bar():
    v, s = 10.0, 0.0
    bar = 30.0
    dt = 0.02
    for _ in range(2000):
        a = signal_stop_accel(v, bar - s, RED, 14.0, 4.0, 2.0)
        a = min(max(a, -5.0), 2.0)
        s += v * dt
        v = max(v + a * dt, 0.0)
        if v < 0.01:
            break
    assert v < 0.01
    assert s < bar


def test_signalized_run_is_clean_and_stops_at_reds():
    cfg = corridor_nominal(seed=4, duration_s=120.0, rate_per_leg_hz=0.06)
    m = Simulation(cfg.with_mode(SIGNALIZED)).run()
    assert not m.collisions
    assert sum(vm.full_stops for vm in m.vehicles) > 0  # somebody met a red


# ---------------------------------------------------------------------------
# energy surrogate


def test_energy_zero_at_rest():
    assert energy_surrogate([(0.0, 0.0)] * 50, PlantParams(), 0.02) == 0.0


def test_energy_steady_state_hand_value():
    # 10 s at 10 m/s: (0.4*1000 + 10*100 + 100*10) W * 10 s
    samples = [(10.0, 0.0)] * 500
    got = energy_surrogate(samples, PlantParams(), 0.02)
    assert got == pytest.approx(24000.0)


def test_energy_ignores_braking():
    samples = [(10.0, -3.0)] * 100
    assert energy_surrogate(samples, PlantParams(), 0.02) == 0.0


def test_engine_accumulation_matches_surrogate():
    cfg = ScenarioConfig(duration_s=30.0, channel=QUIET_CHANNEL,
                         spawning=single_spawn(speed=8.0))
    sim = Simulation(cfg, collect_trace=True)
    m = sim.run()
    samples = [(row[6], row[7]) for row in sim.trace_rows if row[1] == 0]
    # the trace holds post-step state; accumulate the same way
    assert m.vehicles[0].energy_j == pytest.approx(
        energy_surrogate(samples, cfg.plant, cfg.dt_sim), rel=1e-9)


# ---------------------------------------------------------------------------
# fail-safe


def test_failsafe_scenario_stops_and_recovers():
    cfg = failsafe(seed=3)
    sim = Simulation(cfg)
    approaching = {}
    stopped = set()
    activated = None
    cleared = None
    while sim.tick < sim.n_ticks:
        sim.step()
        active = sim.failsafe["i0"]
        if active and activated is None:
            activated = sim.now
            for vid, a in sim.vehicles.items():
                nxt = a.nxt_crossing
                if nxt is not None and a.s < nxt.entry_s:
                    approaching[vid] = nxt.entry_s
        if activated is not None and cleared is None and not active:
            cleared = sim.now
        for vid, a in sim.vehicles.items():
            if vid in approaching and a.v < 0.1 and a.s < approaching[vid]:
                stopped.add(vid)
    m = sim.finalize()
    burst_lo, burst_hi = cfg.channel.burst_windows[0]
    assert activated is not None
    # blackout is measured from the last pre-burst delivery, so activation
    # can lead burst start + threshold by up to one delivery interval
    assert burst_lo + cfg.channel.failsafe_timeout_s - 0.3 <= activated <= burst_hi
    assert cleared is not None and cleared > burst_hi
    assert stopped == set(approaching)  # everyone stood before the bar
    assert m.exited == m.spawned  # throughput resumed
    assert not m.collisions
    exits_after = [vm.exit_time for vm in m.vehicles if vm.exit_time > burst_hi]
    assert len(exits_after) == m.spawned


# ---------------------------------------------------------------------------
# determinism


def test_determinism_bitwise_trace():
    cfg = sensitivity(seed=5)

    def trace(seed_cfg):
        sim = Simulation(seed_cfg, collect_trace=True)
        sim.run()
        return sim.trace_rows

    assert trace(cfg) == trace(cfg)


def test_modes_share_spawn_sequence():
    cfg = corridor_nominal(seed=12, duration_s=60.0, rate_per_leg_hz=0.08)
    coop = Simulation(cfg.with_mode(COOPERATIVE)).pending_spawns
    sig = Simulation(cfg.with_mode(SIGNALIZED)).pending_spawns
    assert coop == sig


# ---------------------------------------------------------------------------
# estimates in the loop


def test_perfect_channel_consistency():
    # zero delay/loss, matched steps: the predicted positions of a free
    # leader track the truth to well under 5 cm over a 30 s run
    cfg = ScenarioConfig(
        duration_s=30.0, dt_sim=0.01,
        corridor=CorridorParams(n_intersections=1, leg_length=250.0),
        channel=ChannelConfig(delay_mean_s=0.0, delay_std_s=0.0, loss_prob=0.0,
                              failsafe_timeout_s=5.0),
        estimator=EstimatorConfig(dt_pred=0.01, n_steps=500),
        spawning=SpawnConfig(explicit=(
            ExplicitSpawn(time=0.0, lane="EB:entry", speed=11.0, route=("T",)),
            ExplicitSpawn(time=1.0, lane="EB:entry", speed=11.5, route=("T",)),
        )),
    )
    m = Simulation(cfg).run()
    assert m.max_est_err < 0.05


def test_hitl_ego_obeys_pedals():
    cfg = ScenarioConfig(duration_s=10.0, channel=QUIET_CHANNEL)
    from dataclasses import replace
    from crossway.scenario import HitlConfig

    cfg = replace(cfg, hitl=HitlConfig(enabled=True, entry_lane="EB:entry",
                                       start_speed=0.0)).validate()
    sim = Simulation(cfg)
    for _ in range(50):
        sim.step()
    ego = sim.hitl_ego()
    assert ego is not None and ego.v == 0.0  # no pedals, no motion
    sim.apply_hitl_input(1.0, 0.0)
    for _ in range(100):
        sim.step()
        sim.apply_hitl_input(1.0, 0.0)
    assert sim.hitl_ego().v > 3.0
    sim.apply_hitl_input(0.3, 0.9)  # brake wins
    sim.step()
    assert sim.hitl_ego().a_ref == pytest.approx(0.9 * cfg.control.accel_min)
