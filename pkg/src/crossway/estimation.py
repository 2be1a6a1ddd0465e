"""Model-based horizon estimation of target-vehicle motion under
communication delay and packet loss.

A topology leader predicts itself with the free-flow law; followers chain
their prediction from the latest estimate received upstream, compensating
each sample for the link delay. Positions integrate the speed samples, so
consumers can query any instant inside the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ControlGains, TimeGapPolicy
from .errors import FailSafe, HorizonExceeded


@dataclass(frozen=True)
class EstimatorConfig:
    dt_pred: float = 0.1  # prediction step, s
    n_steps: int = 50  # horizon length in steps
    accel_max: float = 2.0  # free-flow acceleration ceiling
    sigma: float = 4.0  # free-acceleration exponent
    target_speed: float = 14.0  # asymptotic free-flow speed
    accel_min: float = -5.0  # braking floor mirrored from the controller

    def __post_init__(self):
        if self.dt_pred <= 0 or self.n_steps < 1:
            raise ValueError("bad estimator configuration")
        if self.accel_max <= 0 or self.target_speed <= 0:
            raise ValueError("bad estimator configuration")

    @property
    def horizon(self) -> float:
        return self.dt_pred * self.n_steps


@dataclass(frozen=True)
class TrajectoryEstimate:
    """Predicted speeds and positions at origin_time + k*dt, k = 0..N.

    Index 0 carries the seed (current) state; positions are arc length
    along the subject vehicle's own plan.
    """

    vehicle_id: int
    origin_time: float
    speeds: np.ndarray
    positions: np.ndarray
    dt: float

    @property
    def end_time(self) -> float:
        return self.origin_time + (len(self.speeds) - 1) * self.dt


def estimate_leader(v_now: float, d_now: float, cfg: EstimatorConfig,
                    vehicle_id: int = -1, origin_time: float = 0.0) -> TrajectoryEstimate:
    """Horizon prediction for a vehicle with no target: free-flow relaxation
    toward the preset target speed, positions integrated per step."""
    n = cfg.n_steps
    v = float(v_now)
    d = float(d_now)
    speeds = [v]
    positions = [d]
    a_max = cfg.accel_max
    vt = cfg.target_speed
    sig = cfg.sigma
    dt = cfg.dt_pred
    for _ in range(n):
        d += v * dt
        v += a_max * (1.0 - (v / vt) ** sig) * dt
        if v < 0.0:
            v = 0.0
        speeds.append(v)
        positions.append(d)
    return TrajectoryEstimate(vehicle_id, origin_time, np.asarray(speeds),
                              np.asarray(positions), dt)


def compensate_delay(v: float, v_step_delta: float, d: float, tau: float,
                     cfg: EstimatorConfig) -> tuple[float, float]:
    """Shift one received sample forward by the link delay tau.

    Below one prediction step the speed is held; otherwise it is linearly
    extrapolated with the per-step speed increment. The position always
    advances by the adjusted speed over the delay interval.
    """
    if tau < 0:
        raise ValueError("delay cannot be negative")
    if tau < cfg.dt_pred:
        v_adj = v
    else:
        v_adj = v + (tau / cfg.dt_pred) * v_step_delta
    return v_adj, d + v_adj * tau


def propagate_follower(
    v_prev: float,
    d_prev: float,
    target_v_adj: float,
    target_d_adj: float,
    gains: ControlGains,
    policy: TimeGapPolicy,
    cfg: EstimatorConfig,
) -> tuple[float, float]:
    """One explicit step of the follower's predicted state.

    The slot-following feedback is evaluated with the previous-step
    follower state against the delay-adjusted target sample and scaled by
    the prediction step; speed is floored at zero and the position
    integrates the previous speed.
    """
    spacing = d_prev - target_d_adj + policy.target_length + v_prev * policy.time_gap
    v_next = v_prev - gains.k * (spacing + gains.gamma * (v_prev - target_v_adj)) * cfg.dt_pred
    if v_next < 0.0:
        v_next = 0.0
    return v_next, d_prev + v_prev * cfg.dt_pred


def follower_estimate(
    v_now: float,
    d_now: float,
    sources: list[tuple[TrajectoryEstimate, float, float, float]],
    gains: ControlGains,
    policy: TimeGapPolicy,
    cfg: EstimatorConfig,
    vehicle_id: int = -1,
    origin_time: float = 0.0,
) -> TrajectoryEstimate:
    """Chain the follower's horizon from its coupled upstream estimates.

    Each source is (estimate, age, axis_shift, active_until): age is the
    elapsed time since that estimate's origin (transmission delay plus
    hold time), axis_shift maps the sender's plan positions onto this
    vehicle's plan, and active_until is the own-plan position beyond
    which the coupling lapses (the shared conflict point; inf for plain
    lane following). Whole prediction steps of age are consumed by
    time-aligned indexing; the sub-step remainder is compensated per
    received sample.

    The predicted acceleration mirrors the executed control law: the most
    conservative slot-following response over the still-active sources,
    capped above by free-flow relaxation toward the target speed and
    floored at the braking limit.
    """
    if not sources:
        raise ValueError("follower needs at least one upstream source")
    n = cfg.n_steps
    v = float(v_now)
    d = float(d_now)
    speeds = [v]
    positions = [d]
    dt = cfg.dt_pred
    prepared = []
    for received, age, axis_shift, active_until in sources:
        step_shift = int(age / dt)
        resid = age - step_shift * dt
        prepared.append((
            received.speeds.tolist(),
            received.positions.tolist(),
            len(received.speeds) - 1,
            step_shift,
            resid,
            resid / dt,
            axis_shift,
            active_until,
        ))
    k_gain = gains.k
    gamma = gains.gamma
    l_t = policy.target_length
    t_gap = policy.time_gap
    a_max = cfg.accel_max
    a_min = cfg.accel_min
    vt = cfg.target_speed
    sig = cfg.sigma
    for k in range(1, n + 1):
        acc = None
        for rv, rd, last, step_shift, resid, ratio, shift, active_until in prepared:
            if d > active_until:
                continue  # conflict point passed: constraint lapses
            i = k + step_shift
            if i > last:
                i = last
            tv = rv[i]
            if resid >= dt and i >= 1:  # residual delay spans a step
                tv = tv + ratio * (rv[i] - rv[i - 1])
            td = rd[i] + tv * resid + shift
            a = -k_gain * (d - td + l_t + v * t_gap + gamma * (v - tv))
            if acc is None or a < acc:
                acc = a
        free = a_max * (1.0 - (v / vt) ** sig)
        acc = free if acc is None else min(acc, free)
        if acc < a_min:
            acc = a_min
        v_next = v + acc * dt
        if v_next < 0.0:
            v_next = 0.0
        d += v * dt
        v = v_next
        speeds.append(v)
        positions.append(d)
    return TrajectoryEstimate(vehicle_id, origin_time, np.asarray(speeds),
                              np.asarray(positions), cfg.dt_pred)


def estimate_chain(
    states: list[tuple[float, float]],
    link_delays: list[float],
    loss_flags: list[bool],
    blackouts: list[float],
    failsafe_threshold: float,
    gains: ControlGains,
    policy: TimeGapPolicy,
    cfg: EstimatorConfig,
    previous: list[TrajectoryEstimate | None] | None = None,
    now: float = 0.0,
) -> TrajectoryEstimate:
    """Estimate the last vehicle of an ordered chain.

    states[k] holds (speed, position) of chain vehicle k, vehicle 0 being
    the topology leader; link_delays[k-1], loss_flags[k-1] and
    blackouts[k-1] describe the link from vehicle k-1 to vehicle k.
    Raises FailSafe when any blackout exceeds the threshold.
    """
    if len(states) < 1:
        raise ValueError("empty chain")
    for b in blackouts:
        if b > failsafe_threshold:
            raise FailSafe(f"blackout {b:.2f}s exceeds {failsafe_threshold:.2f}s")
    est = estimate_leader(states[0][0], states[0][1], cfg, vehicle_id=0, origin_time=now)
    chain = [est]
    for k in range(1, len(states)):
        if loss_flags[k - 1]:
            prev = previous[k] if previous is not None else None
            if prev is None:
                est = estimate_leader(states[k][0], states[k][1], cfg,
                                      vehicle_id=k, origin_time=now)
            else:
                est = prev  # no information update: the estimate stays the same
        else:
            est = follower_estimate(
                states[k][0], states[k][1],
                [(chain[k - 1], link_delays[k - 1], 0.0, float("inf"))],
                gains, policy, cfg, vehicle_id=k, origin_time=now,
            )
        chain.append(est)
    return chain[-1]


def query_estimate(est: TrajectoryEstimate, t_query: float) -> tuple[float, float]:
    """Linearly interpolated (speed, position) at an instant in the horizon."""
    rel = t_query - est.origin_time
    n = len(est.speeds) - 1
    if rel < -1e-9 or rel > n * est.dt + 1e-9:
        raise HorizonExceeded(
            f"t={t_query:.3f} outside [{est.origin_time:.3f}, {est.end_time:.3f}]"
        )
    x = min(max(rel / est.dt, 0.0), float(n))
    i = int(x)
    if i >= n:
        return float(est.speeds[n]), float(est.positions[n])
    f = x - i
    v = est.speeds[i] * (1.0 - f) + est.speeds[i + 1] * f
    d = est.positions[i] * (1.0 - f) + est.positions[i + 1] * f
    return float(v), float(d)
