"""Planar polyline primitives: arc-length parameterization, projection,
segment intersection, and line-departure detection.

All coordinates are meters in a flat world frame.
"""

from __future__ import annotations

import math

import numpy as np


class Polyline:
    """An arc-length parameterized polyline with at least two points."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs an (n>=2, 2) array of points")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("polyline has a zero-length segment")
        self.points = pts
        self.seg_len = seg_len
        self.cum_s = np.concatenate(([0.0], np.cumsum(seg_len)))
        self.length = float(self.cum_s[-1])

    def point_at(self, s: float) -> tuple[float, float]:
        """World point at arc length s (clamped to [0, length])."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        t = (s - self.cum_s[i]) / self.seg_len[i]
        p = self.points[i] + t * (self.points[i + 1] - self.points[i])
        return float(p[0]), float(p[1])

    def heading_at(self, s: float) -> float:
        """Tangent direction (radians, CCW from +x) at arc length s."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def start_direction(self) -> tuple[float, float]:
        d = self.points[1] - self.points[0]
        n = math.hypot(d[0], d[1])
        return d[0] / n, d[1] / n

    def end_direction(self) -> tuple[float, float]:
        d = self.points[-1] - self.points[-2]
        n = math.hypot(d[0], d[1])
        return d[0] / n, d[1] / n

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Nearest-point projection of (x, y) onto the polyline.

        Returns (s, lateral, distance) where lateral is signed positive to
        the left of the direction of travel.
        """
        p = np.array([x, y])
        a = self.points[:-1]
        d = self.points[1:] - a
        t = np.einsum("ij,ij->i", p - a, d) / (self.seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        foot = a + t[:, None] * d
        dist2 = np.einsum("ij,ij->i", p - foot, p - foot)
        i = int(np.argmin(dist2))
        s = float(self.cum_s[i] + t[i] * self.seg_len[i])
        cross = d[i, 0] * (p[1] - a[i, 1]) - d[i, 1] * (p[0] - a[i, 0])
        dist = math.sqrt(float(dist2[i]))
        lateral = math.copysign(dist, cross) if dist > 0 else 0.0
        return s, lateral, dist


def stitch(polylines: list[Polyline]) -> Polyline:
    """Concatenate polylines whose endpoints coincide (within 1 mm)."""
    pts = [polylines[0].points]
    for prev, nxt in zip(polylines, polylines[1:]):
        gap = math.hypot(*(nxt.points[0] - prev.points[-1]))
        if gap > 1e-3:
            raise ValueError(f"polylines not contiguous (gap {gap:.4f} m)")
        pts.append(nxt.points[1:])
    return Polyline(np.vstack(pts))


def line_distance(origin, direction, x: float, y: float) -> float:
    """Distance from (x, y) to the infinite line through origin along direction."""
    return abs(direction[0] * (y - origin[1]) - direction[1] * (x - origin[0]))


def departure_arc(poly: Polyline, origin, direction, tol: float = 1e-3,
                  step: float = 0.25, from_end: bool = False) -> float:
    """Arc length where the polyline departs from a line by more than tol.

    Walking from the start (from_end=False) it returns the last arc length
    still within tol of the line, i.e. the split point of a turn leaving a
    straight lane; poly.length if the whole polyline hugs the line.
    Walking from the end it returns the first arc length after which the
    polyline stays within tol, i.e. the join point; 0.0 if it never left.
    """

    def dist_at(s: float) -> float:
        px, py = poly.point_at(s)
        return line_distance(origin, direction, px, py)

    n = int(poly.length / step) + 1
    if not from_end:
        prev = 0.0
        for k in range(1, n + 1):
            s = min(k * step, poly.length)
            if dist_at(s) > tol:
                lo, hi = prev, s
                for _ in range(40):
                    mid = 0.5 * (lo + hi)
                    if dist_at(mid) > tol:
                        hi = mid
                    else:
                        lo = mid
                return lo
            prev = s
        return poly.length
    prev = poly.length
    for k in range(1, n + 1):
        s = max(poly.length - k * step, 0.0)
        if dist_at(s) > tol:
            lo, hi = s, prev
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if dist_at(mid) > tol:
                    lo = mid
                else:
                    hi = mid
            return hi
        prev = s
    return 0.0


def _seg_intersection(p1, p2, q1, q2):
    """Proper intersection of segments p1p2 and q1q2, or None.

    Near-parallel segments (cross product below 1e-12) are treated as
    non-intersecting; collinear overlap is the coincidence case handled
    by the departure-based classification instead.
    """
    r = (p2[0] - p1[0], p2[1] - p1[1])
    s = (q2[0] - q1[0], q2[1] - q1[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-12:
        return None
    qp = (q1[0] - p1[0], q1[1] - p1[1])
    tp = (qp[0] * s[1] - qp[1] * s[0]) / denom
    tq = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if -1e-9 <= tp <= 1.0 + 1e-9 and -1e-9 <= tq <= 1.0 + 1e-9:
        tp = min(max(tp, 0.0), 1.0)
        tq = min(max(tq, 0.0), 1.0)
        return tp, tq, (p1[0] + tp * r[0], p1[1] + tp * r[1])
    return None


def polyline_crossings(a: Polyline, b: Polyline, merge_tol: float = 0.05):
    """All transversal intersections between two polylines.

    Returns a list of (s_a, s_b, (x, y)); duplicates closer than merge_tol
    in arc length on both lines are collapsed.
    """
    out = []
    pa = a.points
    pb = b.points
    for i in range(len(pa) - 1):
        p1, p2 = pa[i], pa[i + 1]
        lo_x, hi_x = min(p1[0], p2[0]), max(p1[0], p2[0])
        lo_y, hi_y = min(p1[1], p2[1]), max(p1[1], p2[1])
        for j in range(len(pb) - 1):
            q1, q2 = pb[j], pb[j + 1]
            if (
                max(q1[0], q2[0]) < lo_x - 1e-9
                or min(q1[0], q2[0]) > hi_x + 1e-9
                or max(q1[1], q2[1]) < lo_y - 1e-9
                or min(q1[1], q2[1]) > hi_y + 1e-9
            ):
                continue
            hit = _seg_intersection(p1, p2, q1, q2)
            if hit is None:
                continue
            tp, tq, pt = hit
            s_a = float(a.cum_s[i] + tp * a.seg_len[i])
            s_b = float(b.cum_s[j] + tq * b.seg_len[j])
            for ea, eb, _ in out:
                if abs(ea - s_a) < merge_tol and abs(eb - s_b) < merge_tol:
                    break
            else:
                out.append((s_a, s_b, pt))
    out.sort(key=lambda e: e[0])
    return out


def arc_points(center, radius: float, angle_from: float, angle_to: float,
               step: float) -> np.ndarray:
    """Points along a circular arc, endpoints included, swept monotonically."""
    sweep = angle_to - angle_from
    n = max(2, int(math.ceil(abs(sweep) * radius / step)) + 1)
    angles = np.linspace(angle_from, angle_to, n)
    return np.stack(
        [center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)],
        axis=1,
    )


def straight_points(p0, p1, step: float) -> np.ndarray:
    """Points along a straight segment at roughly uniform spacing."""
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(2, int(math.ceil(length / step)) + 1)
    t = np.linspace(0.0, 1.0, n)
    return np.stack(
        [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])], axis=1
    )
