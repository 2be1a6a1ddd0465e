"""Arrival-time estimation and slot reservation for intersection crossing.

Slots are per-intersection integer crossing-order tokens: lower numbers
cross first, 0 means unassigned. A triggered vehicle receives the next
number above every live holder and targets the conflicting holders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import NotHeld, StalledVehicle


@dataclass(frozen=True)
class ReservationConfig:
    trigger_eta_s: float = 8.0  # reservation fires when ETA drops below this
    trigger_dist_m: float = 50.0  # or when inside this geo-fence distance
    headway_s: float = 1.5  # minimum ETA spacing behind the preceding vehicle
    preferred_accel: float = 2.0  # assumed acceleration for the ETA profile
    max_accel: float = 2.0

    def __post_init__(self):
        for name in ("trigger_eta_s", "trigger_dist_m", "headway_s",
                     "preferred_accel", "max_accel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EtaEstimate:
    t_temp: float  # kinematic arrival time ignoring traffic
    t: float  # final ETA after the preceding-vehicle constraint

    def __post_init__(self):
        if self.t < self.t_temp - 1e-12 or self.t_temp < 0:
            raise ValueError("final ETA cannot precede the kinematic ETA")


@dataclass(frozen=True)
class SlotAssignment:
    vehicle_id: int
    intersection_id: str
    slot: int
    target_ids: frozenset[int]
    immediate_preceding_id: Optional[int] = None


class SlotPool:
    """Live slot assignments per intersection.

    The per-intersection counter is a high-water mark over the current
    occupancy epoch: releases leave it unchanged so later arrivals keep
    strictly increasing numbers, and it rewinds to zero only once the
    intersection has fully drained.
    """

    def __init__(self):
        self._assignments: dict[str, dict[int, SlotAssignment]] = {}
        self._max_issued: dict[str, int] = {}

    def holders(self, intersection_id: str) -> dict[int, SlotAssignment]:
        return self._assignments.get(intersection_id, {})

    def assignment(self, vehicle_id: int, intersection_id: str) -> Optional[SlotAssignment]:
        return self._assignments.get(intersection_id, {}).get(vehicle_id)

    def max_issued(self, intersection_id: str) -> int:
        return self._max_issued.get(intersection_id, 0)

    def issue(self, assignment: SlotAssignment) -> None:
        iid = assignment.intersection_id
        self._assignments.setdefault(iid, {})[assignment.vehicle_id] = assignment
        self._max_issued[iid] = max(self.max_issued(iid), assignment.slot)

    def release(self, vehicle_id: int, intersection_id: str) -> None:
        held = self._assignments.get(intersection_id, {})
        if vehicle_id not in held:
            raise NotHeld(f"vehicle {vehicle_id} holds no slot at {intersection_id}")
        del held[vehicle_id]
        if not held:
            self._max_issued[intersection_id] = 0


def temp_eta(v: float, d: float, v_lim: float, a_pref: float, a_max: float) -> float:
    """Kinematic arrival time over distance d.

    At or above the speed limit the vehicle cruises; below it, it either
    accelerates the whole way (cannot reach the limit in d) or accelerates
    to the limit and cruises the remainder.
    """
    if d < 0 or v < 0 or v_lim <= 0 or a_pref <= 0 or a_max <= 0:
        raise ValueError("bad ETA inputs")
    if d == 0.0:
        return 0.0
    if v >= v_lim:
        return d / v
    if v == 0.0 and a_pref == 0.0:
        raise StalledVehicle("zero speed with zero acceleration")
    if v * v + 2.0 * a_pref * d <= v_lim * v_lim:
        return (-v + math.sqrt(v * v + 2.0 * a_pref * d)) / a_pref
    return (2.0 * a_max * d + (v_lim - v) ** 2) / (2.0 * a_max * v_lim)


def final_eta(t_temp: float, preceding_eta: Optional[float], t_headway: float) -> float:
    """ETA floored by the preceding vehicle's ETA plus the car-following headway."""
    if t_temp < 0 or (preceding_eta is not None and preceding_eta < 0) or t_headway < 0:
        raise ValueError("ETA inputs must be nonnegative")
    if preceding_eta is None:
        return t_temp
    return max(t_temp, preceding_eta + t_headway)


def try_reserve(
    vehicle_id: int,
    intersection_id: str,
    eta: float,
    d: float,
    pool: SlotPool,
    conflicts_with: Callable[[int], bool],
    config: ReservationConfig,
    preceding_id: Optional[int] = None,
) -> Optional[SlotAssignment]:
    """Issue a slot if the time or distance trigger fires, else None.

    conflicts_with(other_vehicle_id) must say whether the other holder's
    path conflicts with this vehicle's path at this intersection. Targets
    are the conflicting live holders; the immediate preceding vehicle is
    recorded regardless of conflict.
    """
    if not (eta <= config.trigger_eta_s or d <= config.trigger_dist_m):
        return None
    targets = frozenset(
        vid for vid in pool.holders(intersection_id) if conflicts_with(vid)
    )
    assignment = SlotAssignment(
        vehicle_id=vehicle_id,
        intersection_id=intersection_id,
        slot=pool.max_issued(intersection_id) + 1,
        target_ids=targets,
        immediate_preceding_id=preceding_id,
    )
    pool.issue(assignment)
    return assignment


def release(vehicle_id: int, intersection_id: str, pool: SlotPool) -> SlotPool:
    """Drop the vehicle's assignment once it leaves the intersection."""
    pool.release(vehicle_id, intersection_id)
    return pool
