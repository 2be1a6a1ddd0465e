"""Longitudinal reference-acceleration laws.

Slot-following couples a vehicle to each target through a shared axis
(positions negative before the conflict point) with a double-integrator
spacing-and-speed feedback; without targets the vehicle relaxes toward
the road speed limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InactiveLink, MissingEstimate

DEFAULT_K = 0.45
DEFAULT_GAMMA = 2.2


@dataclass(frozen=True)
class ControlGains:
    k: float  # coupling stiffness, 1/s^2
    gamma: float  # speed-error weighting, s
    alpha: int = 1  # adjacency: 1 when the communication link is active

    def __post_init__(self):
        if self.k <= 0 or self.gamma <= 0 or self.alpha not in (0, 1):
            raise ValueError("bad control gains")


@dataclass(frozen=True)
class TimeGapPolicy:
    time_gap: float  # desired time gap behind the target, s
    target_length: float  # target vehicle length, m

    def __post_init__(self):
        if self.time_gap <= 0 or self.target_length <= 0:
            raise ValueError("bad time-gap policy")


class GainTable:
    """Gain lookup keyed by initial speeds and initial gap.

    Nearest-cell lookup over (v_ego0, v_target0, gap0); falls back to the
    configured defaults when empty.
    """

    def __init__(self, cells=None, default=(DEFAULT_K, DEFAULT_GAMMA)):
        self.cells = [((float(v1), float(v2), float(g)), (float(k), float(ga)))
                      for (v1, v2, g), (k, ga) in (cells or [])]
        self.default = (float(default[0]), float(default[1]))

    @classmethod
    def from_json(cls, text: str) -> "GainTable":
        doc = json.loads(text)
        cells = [
            ((e["v_ego0"], e["v_target0"], e["gap0"]), (e["k"], e["gamma"]))
            for e in doc.get("entries", [])
        ]
        default = doc.get("default", {})
        return cls(cells, (default.get("k", DEFAULT_K), default.get("gamma", DEFAULT_GAMMA)))


def lookup_gains(v_ego0: float, v_target0: float, gap0: float,
                 table: Optional[GainTable]) -> ControlGains:
    if table is None or not table.cells:
        k, gamma = (DEFAULT_K, DEFAULT_GAMMA) if table is None else table.default
        return ControlGains(k=k, gamma=gamma)
    best = min(
        table.cells,
        key=lambda cell: (cell[0][0] - v_ego0) ** 2
        + (cell[0][1] - v_target0) ** 2
        + (cell[0][2] - gap0) ** 2,
    )
    return ControlGains(k=best[1][0], gamma=best[1][1])


def consensus_accel(
    ego_s: float,
    ego_v: float,
    target_s: float,
    target_v: float,
    gains: ControlGains,
    policy: TimeGapPolicy,
    a_min: float,
    a_max: float,
) -> float:
    """Slot-following acceleration toward a target on the shared axis.

    Zero at the equilibrium where the target leads by its length plus the
    ego speed times the time gap, at matched speeds.
    """
    if gains.alpha == 0:
        raise InactiveLink("link inactive; use free_flow_accel")
    spacing = ego_s - target_s + policy.target_length + ego_v * policy.time_gap
    raw = -gains.k * (spacing + gains.gamma * (ego_v - target_v))
    return min(max(raw, a_min), a_max)


def free_flow_accel(v: float, v_target: float, a_max: float, sigma: float) -> float:
    """Free-road acceleration decaying as speed approaches the target speed."""
    if v < 0 or v_target <= 0:
        raise ValueError("bad free-flow inputs")
    return a_max * (1.0 - (v / v_target) ** sigma)


@dataclass(frozen=True)
class TargetInput:
    """One control target: its estimated state on the ego's axis, or None
    when no estimate has been received and no stale fallback exists."""

    estimate: Optional[tuple[float, float]]  # (s, v) on the ego axis
    gains: ControlGains
    policy: TimeGapPolicy
    target_id: int = -1


def select_control(
    ego_s: float,
    ego_v: float,
    targets: Sequence[TargetInput],
    v_free: float,
    a_free_max: float,
    sigma: float,
    a_min: float,
    a_max: float,
) -> float:
    """Reference acceleration: the most conservative consensus response
    over all targets, or free flow when there are none."""
    if not targets:
        raw = free_flow_accel(ego_v, v_free, a_free_max, sigma)
        return min(max(raw, a_min), a_max)
    accel = math.inf
    for t in targets:
        if t.estimate is None:
            raise MissingEstimate(f"no estimate for target {t.target_id}")
        ts, tv = t.estimate
        accel = min(
            accel,
            consensus_accel(ego_s, ego_v, ts, tv, t.gains, t.policy, a_min, a_max),
        )
    return accel
