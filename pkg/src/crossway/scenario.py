"""Scenario configuration: typed parameter blocks, JSON loading, and
validation. The JSON schema is documented in the repository README.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .channel import ChannelConfig
from .corridor import CorridorParams
from .errors import BadScenario
from .estimation import EstimatorConfig
from .plant import PlantParams
from .reservation import ReservationConfig

COOPERATIVE = "cooperative"
SIGNALIZED = "signalized"


@dataclass(frozen=True)
class ExplicitSpawn:
    time: float
    lane: str  # entry lane id
    speed: float
    route: Optional[tuple[str, ...]] = None  # turn choices, e.g. ("T", "L")
    role: str = "npc"


@dataclass(frozen=True)
class SpawnConfig:
    rate_per_leg_hz: float = 0.0  # Poisson rate per entry leg
    min_headway_m: float = 10.0
    speed_factor: float = 0.6  # spawn speed as a fraction of the limit
    explicit: tuple[ExplicitSpawn, ...] = ()


@dataclass(frozen=True)
class ControlConfig:
    k: float = 0.45
    gamma: float = 2.2
    time_gap_s: float = 1.2
    accel_min: float = -5.0
    accel_max: float = 2.0
    sigma: float = 4.0
    gain_table_path: Optional[str] = None


@dataclass(frozen=True)
class SignalConfig:
    green_s: float = 30.0
    yellow_s: float = 3.0

    @property
    def cycle_s(self) -> float:
        return 2.0 * (self.green_s + self.yellow_s)


@dataclass(frozen=True)
class VehicleDims:
    length: float = 5.0
    width: float = 2.0


@dataclass(frozen=True)
class CameraConfig:
    focal: float = 0.01
    pixel_size: float = 1e-5
    cx: float = 640.0
    cy: float = 360.0
    height: float = 1.3
    pitch_deg: float = 5.0


@dataclass(frozen=True)
class TelemetryConfig:
    decimation: int = 2  # snapshot every N sim ticks
    port: int = 8765
    pace: float = 1.0  # sim seconds per wall second in serve mode


@dataclass(frozen=True)
class HitlConfig:
    enabled: bool = False
    entry_lane: str = "EB:entry"
    start_speed: float = 0.0
    route: Optional[tuple[str, ...]] = None  # default: straight through


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    mode: str = COOPERATIVE
    seed: int = 0
    duration_s: float = 60.0
    dt_sim: float = 0.02
    slot_redundancy: float = 2.0
    corridor: CorridorParams = field(default_factory=CorridorParams)
    spawning: SpawnConfig = field(default_factory=SpawnConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    reservation: ReservationConfig = field(default_factory=ReservationConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    dims: VehicleDims = field(default_factory=VehicleDims)
    signals: SignalConfig = field(default_factory=SignalConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)
    hitl: HitlConfig = field(default_factory=HitlConfig)

    def validate(self) -> "ScenarioConfig":
        if self.mode not in (COOPERATIVE, SIGNALIZED):
            raise BadScenario(f"unknown mode {self.mode!r}")
        if self.dt_sim <= 0 or self.duration_s <= 0:
            raise BadScenario("dt_sim and duration must be positive")
        ratio = self.estimator.dt_pred / self.dt_sim
        inv = self.dt_sim / self.estimator.dt_pred
        if abs(ratio - round(ratio)) > 1e-9 and abs(inv - round(inv)) > 1e-9:
            raise BadScenario("dt_pred must be an integer multiple of dt_sim or vice versa")
        if self.mode == COOPERATIVE:
            if self.estimator.horizon < self.channel.failsafe_timeout_s - 1e-9:
                raise BadScenario("estimation horizon must cover the fail-safe timeout")
        if self.mode == SIGNALIZED and self.signals.green_s <= 0:
            raise BadScenario("signalized mode requires a signal plan")
        try:
            self.corridor.validate()
        except ValueError as e:
            raise BadScenario(str(e)) from e
        return self

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def with_mode(self, mode: str) -> "ScenarioConfig":
        return replace(self, mode=mode).validate()


def _pick(doc: dict, key: str, cls, **renames):
    block = doc.get(key, {})
    if not isinstance(block, dict):
        raise BadScenario(f"section {key!r} must be an object")
    kwargs = {}
    for k, v in block.items():
        k = renames.get(k, k)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise BadScenario(f"bad field in section {key!r}: {e}") from e
    except ValueError as e:
        raise BadScenario(f"bad value in section {key!r}: {e}") from e


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise BadScenario("scenario root must be a JSON object")
    try:
        spawning = doc.get("spawning", {})
        explicit = tuple(
            ExplicitSpawn(
                time=e["time"],
                lane=e["lane"],
                speed=e["speed"],
                route=tuple(e["route"]) if e.get("route") else None,
                role=e.get("role", "npc"),
            )
            for e in spawning.get("explicit", [])
        )
        channel = doc.get("channel", {})
        bursts = tuple(tuple(w) for w in channel.get("burst_windows", []))
        cfg = ScenarioConfig(
            name=doc.get("name", "scenario"),
            mode=doc.get("mode", COOPERATIVE),
            seed=int(doc.get("seed", 0)),
            duration_s=float(doc.get("duration_s", 60.0)),
            dt_sim=float(doc.get("dt_sim", 0.02)),
            slot_redundancy=float(doc.get("slot_redundancy", 2.0)),
            corridor=_pick(doc, "corridor", CorridorParams),
            spawning=SpawnConfig(
                rate_per_leg_hz=float(spawning.get("rate_per_leg_hz", 0.0)),
                min_headway_m=float(spawning.get("min_headway_m", 10.0)),
                speed_factor=float(spawning.get("speed_factor", 0.6)),
                explicit=explicit,
            ),
            channel=ChannelConfig(
                delay_mean_s=float(channel.get("delay_mean_s", 0.040)),
                delay_std_s=float(channel.get("delay_std_s", 0.0259)),
                loss_prob=float(channel.get("loss_prob", 0.05)),
                burst_windows=bursts,
                failsafe_timeout_s=float(channel.get("failsafe_timeout_s", 2.0)),
            ),
            estimator=_pick(doc, "estimator", EstimatorConfig),
            control=_pick(doc, "control", ControlConfig),
            reservation=_pick(doc, "reservation", ReservationConfig),
            plant=_pick(doc, "plant", PlantParams),
            dims=_pick(doc, "dims", VehicleDims),
            signals=_pick(doc, "signals", SignalConfig),
            camera=_pick(doc, "camera", CameraConfig),
            telemetry=_pick(doc, "telemetry", TelemetryConfig),
            hitl=HitlConfig(
                enabled=bool(doc.get("hitl", {}).get("enabled", False)),
                entry_lane=doc.get("hitl", {}).get("entry_lane", "EB:entry"),
                start_speed=float(doc.get("hitl", {}).get("start_speed", 0.0)),
                route=tuple(doc["hitl"]["route"]) if doc.get("hitl", {}).get("route") else None,
            ),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise BadScenario(f"malformed scenario: {e}") from e
    return cfg.validate()


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise BadScenario(f"cannot read scenario file: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise BadScenario(f"scenario is not valid JSON: {e}") from e
    return scenario_from_dict(doc)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "dt_sim": cfg.dt_sim,
        "slot_redundancy": cfg.slot_redundancy,
        "corridor": asdict(cfg.corridor),
        "spawning": {
            "rate_per_leg_hz": cfg.spawning.rate_per_leg_hz,
            "min_headway_m": cfg.spawning.min_headway_m,
            "speed_factor": cfg.spawning.speed_factor,
            "explicit": [
                {
                    "time": e.time,
                    "lane": e.lane,
                    "speed": e.speed,
                    "route": list(e.route) if e.route else None,
                    "role": e.role,
                }
                for e in cfg.spawning.explicit
            ],
        },
        "channel": {
            "delay_mean_s": cfg.channel.delay_mean_s,
            "delay_std_s": cfg.channel.delay_std_s,
            "loss_prob": cfg.channel.loss_prob,
            "burst_windows": [list(w) for w in cfg.channel.burst_windows],
            "failsafe_timeout_s": cfg.channel.failsafe_timeout_s,
        },
        "estimator": asdict(cfg.estimator),
        "control": asdict(cfg.control),
        "reservation": asdict(cfg.reservation),
        "plant": asdict(cfg.plant),
        "dims": asdict(cfg.dims),
        "signals": asdict(cfg.signals),
        "camera": asdict(cfg.camera),
        "telemetry": asdict(cfg.telemetry),
        "hitl": {
            "enabled": cfg.hitl.enabled,
            "entry_lane": cfg.hitl.entry_lane,
            "start_speed": cfg.hitl.start_speed,
            "route": list(cfg.hitl.route) if cfg.hitl.route else None,
        },
    }
