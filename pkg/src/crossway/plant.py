"""Longitudinal vehicle dynamics and actuator mapping.

Net engine force accelerates, brake torque decelerates through the
effective gear ratio; aerodynamic, friction, and mechanical drag always
resist. Exactly one actuator may be active per step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ModeConflict


@dataclass(frozen=True)
class PlantParams:
    mass: float = 1500.0  # kg
    gear_ratio: float = 10.0  # wheel force per unit brake torque
    drag_coeff: float = 0.4  # aerodynamic, kg/m (force = coeff * v^2)
    friction_coeff: float = 10.0  # speed-proportional, kg/s
    mech_drag: float = 100.0  # constant mechanical drag, N
    engine_force_max: float = 6000.0  # N
    brake_torque_max: float = 1500.0  # N*m
    wheel_radius: float = 0.3  # m, informational

    def __post_init__(self):
        for name in ("mass", "gear_ratio", "engine_force_max",
                     "brake_torque_max", "wheel_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.drag_coeff < 0 or self.friction_coeff < 0 or self.mech_drag < 0:
            raise ValueError("drag terms must be nonnegative")

    def resistive_force(self, v: float) -> float:
        return self.drag_coeff * v * v + self.friction_coeff * v + self.mech_drag


@dataclass(frozen=True)
class PlantState:
    s: float  # position along the path, m
    v: float  # speed, m/s (never negative)
    a: float = 0.0  # realized acceleration, m/s^2

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed cannot be negative")


def required_net_force(a_ref: float, v: float, p: PlantParams) -> float:
    """Engine force tracking a_ref against the resistive losses.

    Clamped to [0, engine_force_max]; a negative demand means braking is
    needed instead and yields 0.
    """
    raw = a_ref * p.mass + p.resistive_force(v)
    return min(max(raw, 0.0), p.engine_force_max)


def required_brake_torque(a_ref: float, v: float, p: PlantParams) -> float:
    """Brake torque tracking a_ref once drag alone is insufficient.

    Clamped to [0, brake_torque_max]; 0 when coasting already decelerates
    at least as hard as requested.
    """
    raw = -(a_ref * p.mass + p.resistive_force(v)) / p.gear_ratio
    return min(max(raw, 0.0), p.brake_torque_max)


def plan_actuation(a_ref: float, v: float, p: PlantParams) -> tuple[float, float]:
    """Split a reference acceleration into (engine force, brake torque)."""
    if a_ref * p.mass + p.resistive_force(v) >= 0.0:
        return required_net_force(a_ref, v, p), 0.0
    return 0.0, required_brake_torque(a_ref, v, p)


def step_plant(state: PlantState, f_net: float, t_brake: float, dt: float,
               p: PlantParams) -> PlantState:
    """Explicit-Euler step: speed from the force balance, then position
    from the pre-step speed. Speed is floored at zero (no reverse)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if f_net != 0.0 and t_brake != 0.0:
        raise ModeConflict("engine force and brake torque both nonzero")
    v = state.v
    a = (f_net - p.gear_ratio * t_brake - p.resistive_force(v)) / p.mass
    v_next = v + a * dt
    if v_next < 0.0:
        v_next = 0.0
        a = (v_next - v) / dt
    return PlantState(s=state.s + v * dt, v=v_next, a=a)
