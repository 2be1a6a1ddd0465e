"""Canonical scenario builders used by the CLI examples and the
acceptance suite.

Each returns a fully-validated ScenarioConfig; pass a seed to vary the
stochastic streams while keeping the layout.
"""

from __future__ import annotations

from dataclasses import replace

from .channel import ChannelConfig
from .corridor import CorridorParams
from .estimation import EstimatorConfig
from .scenario import (
    ExplicitSpawn,
    HitlConfig,
    ScenarioConfig,
    SpawnConfig,
    TelemetryConfig,
)


def corridor_nominal(seed: int = 0, duration_s: float = 300.0,
                     rate_per_leg_hz: float = 0.08) -> ScenarioConfig:
    """Four-intersection corridor under Poisson demand with the nominal
    delay-only communication channel."""
    return ScenarioConfig(
        name="corridor-nominal",
        seed=seed,
        duration_s=duration_s,
        spawning=SpawnConfig(rate_per_leg_hz=rate_per_leg_hz),
        channel=ChannelConfig(loss_prob=0.0, burst_windows=()),
    ).validate()


def comparison(seed: int = 0, duration_s: float = 240.0,
               rate_per_leg_hz: float = 0.06) -> ScenarioConfig:
    """Corridor used for the cooperative-versus-signalized comparison."""
    return ScenarioConfig(
        name="comparison",
        seed=seed,
        duration_s=duration_s,
        spawning=SpawnConfig(rate_per_leg_hz=rate_per_leg_hz),
        channel=ChannelConfig(loss_prob=0.0, burst_windows=()),
    ).validate()


def sensitivity(seed: int = 0) -> ScenarioConfig:
    """Single intersection with a platoon and crossing traffic, impaired
    channel (random loss plus a 3 s outage), for prediction-step sweeps.

    Spawn times are multiples of every swept prediction step so the
    estimator invocation count scales exactly with the update rate.
    """
    return ScenarioConfig(
        name="sensitivity",
        seed=seed,
        duration_s=30.0,
        dt_sim=0.01,
        corridor=CorridorParams(n_intersections=1, leg_length=250.0),
        spawning=SpawnConfig(explicit=(
            ExplicitSpawn(time=0.0, lane="NB:i0:in", speed=13.0, route=("T",)),
            ExplicitSpawn(time=0.0, lane="EB:entry", speed=11.0, route=("T",)),
            ExplicitSpawn(time=2.0, lane="EB:entry", speed=12.0, route=("T",)),
            ExplicitSpawn(time=3.0, lane="EB:entry", speed=12.0, route=("T",)),
            ExplicitSpawn(time=4.0, lane="SB:i0:in", speed=12.5, route=("T",)),
        )),
        channel=ChannelConfig(
            loss_prob=0.05,
            burst_windows=((12.0, 15.0),),
            failsafe_timeout_s=6.0,
        ),
        estimator=EstimatorConfig(dt_pred=0.1, n_steps=60),
    ).validate()


def failsafe(seed: int = 0) -> ScenarioConfig:
    """Loaded single intersection hit by a 5 s total outage that exceeds
    the 2 s blackout threshold, driving it to an all-way stop."""
    return ScenarioConfig(
        name="failsafe",
        seed=seed,
        duration_s=60.0,
        corridor=CorridorParams(n_intersections=1, leg_length=100.0),
        spawning=SpawnConfig(explicit=(
            ExplicitSpawn(time=0.0, lane="EB:entry", speed=8.0, route=("T",)),
            ExplicitSpawn(time=0.0, lane="NB:i0:in", speed=8.0, route=("T",)),
            ExplicitSpawn(time=0.0, lane="WB:entry", speed=8.0, route=("T",)),
            ExplicitSpawn(time=0.0, lane="SB:i0:in", speed=8.0, route=("T",)),
            ExplicitSpawn(time=0.7, lane="EB:entry", speed=8.0, route=("T",)),
            ExplicitSpawn(time=0.7, lane="NB:i0:in", speed=8.0, route=("T",)),
        )),
        channel=ChannelConfig(
            loss_prob=0.0,
            burst_windows=((2.0, 7.0),),
            failsafe_timeout_s=2.0,
        ),
        estimator=EstimatorConfig(dt_pred=0.1, n_steps=60),
    ).validate()


def hitl_demo(seed: int = 0, pace: float = 1.0, port: int = 8765) -> ScenarioConfig:
    """Human-driven ego on the corridor entry with light NPC traffic."""
    base = corridor_nominal(seed=seed, duration_s=300.0, rate_per_leg_hz=0.04)
    return replace(
        base,
        name="hitl-demo",
        hitl=HitlConfig(enabled=True, entry_lane="EB:entry", start_speed=0.0),
        telemetry=TelemetryConfig(decimation=2, port=port, pace=pace),
    ).validate()


PRESETS = {
    "corridor-nominal": corridor_nominal,
    "comparison": comparison,
    "sensitivity": sensitivity,
    "failsafe": failsafe,
    "hitl-demo": hitl_demo,
}
