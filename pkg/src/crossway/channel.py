"""V2X link model: per-message Gaussian delay, hybrid random/burst packet
loss, in-order delivery with stale filtering, and blackout tracking with
an all-way-stop fail-safe trigger.

All randomness comes from the caller-supplied seeded generator, so equal
seeds reproduce the full delivery schedule bit for bit.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional

DROPPED = None


@dataclass(frozen=True)
class ChannelConfig:
    delay_mean_s: float = 0.040
    delay_std_s: float = 0.0259
    loss_prob: float = 0.05  # random loss over the whole run
    burst_windows: tuple[tuple[float, float], ...] = ()  # total-outage intervals
    failsafe_timeout_s: float = 2.0

    def __post_init__(self):
        if self.delay_mean_s < 0 or self.delay_std_s < 0:
            raise ValueError("delay parameters must be nonnegative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss probability must be in [0, 1]")
        last = None
        for lo, hi in self.burst_windows:
            if hi <= lo or (last is not None and lo < last):
                raise ValueError("burst windows must be sorted and non-overlapping")
            last = hi

    def in_burst(self, t: float) -> bool:
        return any(lo <= t < hi for lo, hi in self.burst_windows)


@dataclass
class ChannelMessage:
    sender_id: int
    receiver_id: int
    sent_at: float
    payload: Any
    deliver_at: Optional[float]  # None when dropped

    @property
    def dropped(self) -> bool:
        return self.deliver_at is None


@dataclass
class LinkStatus:
    pair: tuple[int, int]  # (sender, receiver)
    last_delivery_at: float
    blackout: float = 0.0
    failsafe_active: bool = False


def _pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _clamped_moments(mu: float, sigma: float) -> tuple[float, float]:
    z = mu / sigma
    m1 = mu * _cdf(z) + sigma * _pdf(z)
    m2 = (mu * mu + sigma * sigma) * _cdf(z) + mu * sigma * _pdf(z)
    return m1, math.sqrt(max(m2 - m1 * m1, 0.0))


@lru_cache(maxsize=32)
def calibrated_normal_params(mean: float, std: float) -> tuple[float, float]:
    """Pre-clamp normal parameters whose zero-clamped draws have exactly
    the requested mean and standard deviation.

    Clamping negatives of a Normal(mean, std) to zero would bias both
    moments at these parameter ratios; the calibration undoes that so the
    delivered delays match the configured statistics.
    """
    mu, sigma = mean, std
    for _ in range(80):
        m, s = _clamped_moments(mu, sigma)
        f1, f2 = m - mean, s - std
        if abs(f1) < 1e-14 and abs(f2) < 1e-14:
            break
        eps = 1e-8
        ma, sa = _clamped_moments(mu + eps, sigma)
        mb, sb = _clamped_moments(mu, sigma + eps)
        j11, j12 = (ma - m) / eps, (mb - m) / eps
        j21, j22 = (sa - s) / eps, (sb - s) / eps
        det = j11 * j22 - j12 * j21
        if abs(det) < 1e-18:
            break
        mu -= (f1 * j22 - f2 * j12) / det
        sigma = max(sigma - (f2 * j11 - f1 * j21) / det, 1e-9)
    return mu, sigma


def sample_delay(cfg: ChannelConfig, rng) -> float:
    """One nonnegative delay draw with the configured mean and spread."""
    if cfg.delay_std_s == 0.0:
        return cfg.delay_mean_s
    mu, sigma = calibrated_normal_params(cfg.delay_mean_s, cfg.delay_std_s)
    return max(0.0, float(rng.normal(mu, sigma)))


def send(
    sender_id: int,
    receiver_id: int,
    payload: Any,
    now: float,
    cfg: ChannelConfig,
    rng,
) -> ChannelMessage:
    """Sample the fate of one message: burst and random loss, then delay."""
    if cfg.in_burst(now) or (cfg.loss_prob > 0.0 and rng.random() < cfg.loss_prob):
        return ChannelMessage(sender_id, receiver_id, now, payload, DROPPED)
    return ChannelMessage(sender_id, receiver_id, now, payload, now + sample_delay(cfg, rng))


def update_link_status(link: LinkStatus, now: float, cfg: ChannelConfig) -> LinkStatus:
    """Recompute blackout and apply the fail-safe hysteresis.

    Activates when the blackout exceeds the timeout; once active it holds
    until deliveries resume and the blackout falls below half the timeout.
    """
    link.blackout = now - link.last_delivery_at
    if link.failsafe_active:
        if link.blackout < cfg.failsafe_timeout_s / 2.0:
            link.failsafe_active = False
    elif link.blackout > cfg.failsafe_timeout_s:
        link.failsafe_active = True
    return link


class Channel:
    """Message queue plus per-link delivery state for the whole fleet."""

    def __init__(self, cfg: ChannelConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self._seq = 0
        self._queues: dict[int, list] = {}  # receiver -> heap of (deliver_at, seq, msg)
        self._links: dict[tuple[int, int], LinkStatus] = {}
        self._latest_sent: dict[tuple[int, int], float] = {}
        self.sent_log: list[ChannelMessage] = []
        self.log_enabled = False

    def register_link(self, sender_id: int, receiver_id: int, now: float) -> None:
        pair = (sender_id, receiver_id)
        if pair not in self._links:
            self._links[pair] = LinkStatus(pair=pair, last_delivery_at=now)

    def drop_link(self, sender_id: int, receiver_id: int) -> None:
        self._links.pop((sender_id, receiver_id), None)

    def link(self, sender_id: int, receiver_id: int) -> Optional[LinkStatus]:
        return self._links.get((sender_id, receiver_id))

    def links(self) -> list[LinkStatus]:
        return [self._links[k] for k in sorted(self._links)]

    def send(self, sender_id: int, receiver_id: int, payload: Any, now: float) -> ChannelMessage:
        msg = send(sender_id, receiver_id, payload, now, self.cfg, self.rng)
        if self.log_enabled:
            self.sent_log.append(msg)
        if not msg.dropped:
            self._seq += 1
            heapq.heappush(
                self._queues.setdefault(receiver_id, []),
                (msg.deliver_at, self._seq, msg),
            )
        return msg

    def poll(self, receiver_id: int, now: float) -> list[ChannelMessage]:
        """Messages due by now, sorted by send time, stale ones discarded.

        Variable delay can reorder messages in flight; any arrival older
        than the newest already-delivered send on its link is dropped so
        the receiver's view never rewinds.
        """
        q = self._queues.get(receiver_id)
        if not q:
            return []
        due = []
        while q and q[0][0] <= now:
            due.append(heapq.heappop(q)[2])
        if not due:
            return []
        due.sort(key=lambda m: (m.sent_at, m.sender_id))
        out = []
        for msg in due:
            pair = (msg.sender_id, receiver_id)
            if msg.sent_at <= self._latest_sent.get(pair, -1.0):
                continue  # stale: a newer message already arrived
            self._latest_sent[pair] = msg.sent_at
            out.append(msg)
            link = self._links.get(pair)
            if link is not None and msg.deliver_at > link.last_delivery_at:
                link.last_delivery_at = msg.deliver_at
        return out

    def update_links(self, now: float) -> None:
        for key in self._links:
            update_link_status(self._links[key], now, self.cfg)

    def forget_receiver(self, receiver_id: int) -> None:
        self._queues.pop(receiver_id, None)
        for pair in [p for p in self._links if receiver_id in p]:
            del self._links[pair]
