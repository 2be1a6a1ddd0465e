import numpy as np
import pytest

from crossway.channel import (
    Channel,
    ChannelConfig,
    LinkStatus,
    calibrated_normal_params,
    sample_delay,
    send,
    update_link_status,
)


def cfg(**kw):
    base = dict(delay_mean_s=0.040, delay_std_s=0.0259, loss_prob=0.0,
                burst_windows=(), failsafe_timeout_s=2.0)
    base.update(kw)
    return ChannelConfig(**base)


# ---------------------------------------------------------------------------
# send


def test_burst_window_drops():
    rng = np.random.default_rng(0)
    msg = send(1, 2, "x", 12.0, cfg(burst_windows=((10.0, 15.0),)), rng)
    assert msg.dropped


def test_degenerate_delay():
    rng = np.random.default_rng(0)
    msg = send(1, 2, "x", 5.0, cfg(delay_std_s=0.0), rng)
    assert msg.deliver_at == 5.0 + 0.040


def test_seeded_first_draw_regression():
    # pinned from the seeded stream: the delivery schedule is part of the
    # deterministic contract
    rng = np.random.default_rng(7)
    msg = send(1, 2, "x", 12.0, cfg(), rng)
    assert msg.deliver_at == pytest.approx(12.039017304867805, abs=1e-15)


def test_calibration_hits_target_moments():
    mu, sigma = calibrated_normal_params(0.040, 0.0259)
    rng = np.random.default_rng(123)
    x = np.maximum(0.0, rng.normal(mu, sigma, 2_000_000))
    assert abs(x.mean() - 0.040) < 2e-4
    assert abs(x.std() - 0.0259) < 2e-4


def test_delay_statistics_bounds():
    rng = np.random.default_rng(42)
    c = cfg()
    delays = np.array([sample_delay(c, rng) for _ in range(100_000)])
    assert (delays >= 0.0).all()
    assert abs(delays.mean() - 0.040) <= 0.001
    assert abs(delays.std() - 0.0259) <= 0.0015


def test_determinism_same_seed_same_schedule():
    def schedule(seed):
        ch = Channel(cfg(loss_prob=0.3), np.random.default_rng(seed))
        out = []
        for k in range(200):
            m = ch.send(1, 2, k, k * 0.1)
            out.append((m.sent_at, m.deliver_at))
        return out

    assert schedule(5) == schedule(5)
    assert schedule(5) != schedule(6)


# ---------------------------------------------------------------------------
# delivery semantics


def test_poll_empty():
    ch = Channel(cfg(), np.random.default_rng(0))
    assert ch.poll(2, 100.0) == []


def test_in_order_delivery():
    ch = Channel(cfg(delay_std_s=0.0), np.random.default_rng(0))
    for k in range(3):
        ch.send(1, 2, k, float(k))
    msgs = ch.poll(2, 10.0)
    assert [m.payload for m in msgs] == [0, 1, 2]


def test_stale_filter_discards_rewinds():
    ch = Channel(cfg(), np.random.default_rng(0))
    # craft two messages with inverted delivery order by hand
    early = ch.send(1, 2, "early", 0.0)
    late = ch.send(1, 2, "late", 0.1)
    early.deliver_at = 0.30
    late.deliver_at = 0.20
    ch._queues[2] = []
    ch._seq = 0
    import heapq

    for m in (early, late):
        ch._seq += 1
        heapq.heappush(ch._queues[2], (m.deliver_at, ch._seq, m))
    first = ch.poll(2, 0.25)
    assert [m.payload for m in first] == ["late"]
    second = ch.poll(2, 0.5)
    assert second == []  # the earlier-sent message is stale on arrival


def test_receiver_sent_sequence_strictly_increasing():
    ch = Channel(cfg(loss_prob=0.1), np.random.default_rng(17))
    seen = []
    t = 0.0
    for k in range(500):
        ch.send(1, 2, k, t)
        t += 0.05
        seen.extend(m.sent_at for m in ch.poll(2, t))
    seen.extend(m.sent_at for m in ch.poll(2, t + 1.0))
    assert all(b > a for a, b in zip(seen, seen[1:]))


def test_no_delivery_from_burst_sends():
    c = cfg(burst_windows=((1.0, 2.0),))
    ch = Channel(c, np.random.default_rng(3))
    t = 0.0
    for k in range(60):
        ch.send(1, 2, k, t)
        t += 0.05
    got = ch.poll(2, 10.0)
    assert all(not (1.0 <= m.sent_at < 2.0) for m in got)
    assert got  # deliveries outside the window still flow


# ---------------------------------------------------------------------------
# link status / fail-safe


def test_blackout_below_threshold():
    link = LinkStatus(pair=(1, 2), last_delivery_at=9.5)
    update_link_status(link, 10.0, cfg())
    assert link.blackout == pytest.approx(0.5)
    assert not link.failsafe_active


def test_blackout_crossing_threshold():
    link = LinkStatus(pair=(1, 2), last_delivery_at=7.5)
    update_link_status(link, 10.0, cfg())
    assert link.failsafe_active


def test_hysteresis_deactivation():
    link = LinkStatus(pair=(1, 2), last_delivery_at=0.0)
    update_link_status(link, 2.5, cfg())
    assert link.failsafe_active
    link.last_delivery_at = 2.6  # delivery resumed
    update_link_status(link, 3.5, cfg())  # blackout 0.9 < 1.0
    assert not link.failsafe_active
    # blackout between half and full threshold keeps an active flag latched
    link2 = LinkStatus(pair=(1, 2), last_delivery_at=0.0, failsafe_active=True)
    update_link_status(link2, 1.5, cfg())
    assert link2.failsafe_active
