import numpy as np
import pytest

from crossway.control import (
    ControlGains,
    GainTable,
    TargetInput,
    TimeGapPolicy,
    consensus_accel,
    free_flow_accel,
    lookup_gains,
    select_control,
)
from crossway.errors import InactiveLink, MissingEstimate


def gains(k=0.45, gamma=2.2, alpha=1):
    return ControlGains(k=k, gamma=gamma, alpha=alpha)


def policy(t_gap=1.0, length=5.0):
    return TimeGapPolicy(time_gap=t_gap, target_length=length)


# ---------------------------------------------------------------------------
# gain lookup


def test_lookup_default_when_empty():
    g = lookup_gains(7.0, 9.0, 30.0, None)
    assert (g.k, g.gamma) == (0.45, 2.2)
    g = lookup_gains(7.0, 9.0, 30.0, GainTable())
    assert (g.k, g.gamma) == (0.45, 2.2)


def test_lookup_nearest_cell():
    table = GainTable([((10.0, 10.0, 20.0), (0.3, 1.8))])
    g = lookup_gains(10.2, 9.9, 21.0, table)
    assert (g.k, g.gamma) == (0.3, 1.8)


def test_lookup_exact_hit():
    table = GainTable([
        ((10.0, 10.0, 20.0), (0.3, 1.8)),
        ((5.0, 5.0, 10.0), (0.6, 2.5)),
    ])
    g = lookup_gains(5.0, 5.0, 10.0, table)
    assert (g.k, g.gamma) == (0.6, 2.5)


def test_gain_table_json():
    table = GainTable.from_json(
        '{"entries": [{"v_ego0": 8, "v_target0": 9, "gap0": 15, "k": 0.5, "gamma": 2.0}],'
        ' "default": {"k": 0.4, "gamma": 2.1}}'
    )
    assert lookup_gains(8, 9, 15, table).k == 0.5


# ---------------------------------------------------------------------------
# consensus law


def test_equilibrium_zero():
    # target leads by length + v * gap at matched speed
    v = 10.0
    a = consensus_accel(-55.0, v, -55.0 + 5.0 + v * 1.0, v,
                        gains(), policy(), -5.0, 2.0)
    assert abs(a) < 1e-12


def test_hand_value():
    a = consensus_accel(-55.0, 10.0, -30.0, 8.0, gains(k=0.1, gamma=2.0),
                        policy(t_gap=1.0, length=5.0), -5.0, 2.0)
    assert abs(a - 0.6) < 1e-12


def test_clamp():
    a = consensus_accel(0.0, 30.0, -100.0, 0.0, gains(k=1.0, gamma=5.0),
                        policy(), -5.0, 2.0)
    assert a == -5.0


def test_inactive_link():
    with pytest.raises(InactiveLink):
        consensus_accel(0.0, 0.0, 10.0, 0.0, gains(alpha=0), policy(), -5, 2)


def test_sign_correctness():
    v = 10.0
    eq_target = 5.0 + v * 1.0
    wide = consensus_accel(-50.0, v, -50.0 + eq_target + 5.0, v, gains(), policy(), -5, 2)
    tight = consensus_accel(-50.0, v, -50.0 + eq_target - 5.0, v, gains(), policy(), -5, 2)
    assert wide > 0.0 > tight


def test_equilibrium_independent_of_gains():
    # the spacing nulling the feedback depends only on the gap policy
    v = 12.0
    spacing = 5.0 + v * 1.0
    for k, gamma in ((0.1, 1.0), (0.45, 2.2), (0.9, 4.0)):
        a = consensus_accel(0.0, v, spacing, v, gains(k=k, gamma=gamma),
                            policy(), -5, 2)
        assert abs(a) < 1e-12


# ---------------------------------------------------------------------------
# free flow


def test_free_flow_cases():
    assert free_flow_accel(10.0, 10.0, 2.0, 4.0) == 0.0
    assert free_flow_accel(0.0, 10.0, 2.0, 4.0) == 2.0
    assert abs(free_flow_accel(5.0, 10.0, 2.0, 4.0) - 1.875) < 1e-12


# ---------------------------------------------------------------------------
# selection


def test_select_no_targets_is_free_flow():
    a = select_control(0.0, 5.0, [], 10.0, 2.0, 4.0, -5.0, 2.0)
    assert abs(a - free_flow_accel(5.0, 10.0, 2.0, 4.0)) < 1e-12


def test_select_min_rule():
    t1 = TargetInput(estimate=(30.0, 8.0), gains=gains(k=0.1, gamma=2.0),
                     policy=policy(), target_id=1)
    t2 = TargetInput(estimate=(6.0, 6.0), gains=gains(k=0.1, gamma=2.0),
                     policy=policy(), target_id=2)
    ego_s, ego_v = -55.0 + 55.0, 10.0  # s = 0 axis
    a1 = consensus_accel(ego_s, ego_v, 30.0, 8.0, t1.gains, t1.policy, -5, 2)
    a2 = consensus_accel(ego_s, ego_v, 6.0, 6.0, t2.gains, t2.policy, -5, 2)
    got = select_control(ego_s, ego_v, [t1, t2], 14.0, 2.0, 4.0, -5.0, 2.0)
    assert got == min(a1, a2)


def test_select_single_target():
    t = TargetInput(estimate=(22.0, 9.0), gains=gains(), policy=policy(), target_id=1)
    got = select_control(0.0, 10.0, [t], 14.0, 2.0, 4.0, -5.0, 2.0)
    want = consensus_accel(0.0, 10.0, 22.0, 9.0, gains(), policy(), -5.0, 2.0)
    assert got == want


def test_select_missing_estimate():
    t = TargetInput(estimate=None, gains=gains(), policy=policy(), target_id=7)
    with pytest.raises(MissingEstimate):
        select_control(0.0, 10.0, [t], 14.0, 2.0, 4.0, -5.0, 2.0)


# ---------------------------------------------------------------------------
# two-vehicle closed loop


def closed_loop(gap_err, dv_err, leader_v=10.0, dt=0.1, t_end=60.0):
    """Explicit-Euler two-vehicle loop; returns spacing and speed errors."""
    g = gains()
    p = policy(t_gap=1.2, length=5.0)
    lead_s = 0.0
    ego_v = leader_v + dv_err
    ego_s = -(p.target_length + ego_v * p.time_gap) - gap_err
    t = 0.0
    while t < t_end:
        a = consensus_accel(ego_s, ego_v, lead_s, leader_v, g, p, -5.0, 2.0)
        free = free_flow_accel(ego_v, 14.0, 2.0, 4.0)
        a = min(a, free)
        ego_s += ego_v * dt
        ego_v = max(ego_v + a * dt, 0.0)
        lead_s += leader_v * dt
        t += dt
    spacing_err = lead_s - ego_s - (p.target_length + ego_v * p.time_gap)
    return abs(spacing_err), abs(ego_v - leader_v)


def test_two_vehicle_convergence_sample():
    se, ve = closed_loop(15.0, -4.0)
    assert se < 0.1 and ve < 0.05
