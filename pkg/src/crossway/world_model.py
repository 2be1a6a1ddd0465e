"""Corridor map model: lanes, lane-level paths, map matching, geo-fencing,
and conflict-point enumeration between intersection movements.

Immutable after construction; safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlreadyPassed, DegenerateGeometry, OffMap, Unreachable
from .geometry import Polyline, departure_arc, polyline_crossings, stitch

MATCH_TOLERANCE_M = 10.0
COINCIDENCE_TOL_M = 0.2
ANCHOR_GUARD_M = 0.6  # crossings this close to a merge/diverge locus are grazes

CROSSING = "crossing"
MERGING = "merging"
DIVERGING = "diverging"


@dataclass(frozen=True)
class Lane:
    """One directed lane with an arc-length parameterized centerline."""

    id: str
    centerline: Polyline
    speed_limit: float
    successors: tuple[str, ...] = ()
    intersection_id: str | None = None  # set only for in-intersection connectors
    kind: str = "lane"  # approach | exit | connector | lane
    turn: str | None = None  # through | left | right, connectors only


@dataclass(frozen=True)
class Link:
    """A street segment grouping its directed lanes."""

    id: str
    lane_ids: tuple[str, ...]


@dataclass(frozen=True)
class GeoFence:
    """Reservation trigger thresholds for one intersection."""

    intersection_id: str
    trigger_dist_m: float
    trigger_eta_s: float

    def __post_init__(self):
        if self.trigger_dist_m <= 0 or self.trigger_eta_s <= 0:
            raise ValueError("geo-fence thresholds must be positive")


@dataclass(frozen=True)
class MapMatchResult:
    lane_id: str
    s: float  # arc length along the matched PathPlan
    lateral: float  # signed offset, positive left of travel


@dataclass(frozen=True)
class ConflictPoint:
    """A location where movement paths cross, merge, or diverge.

    offsets maps movement (connector lane) id -> arc length of this point
    from the start of that connector. Crossing points involve exactly two
    movements; a merge or diverge locus may be shared by three.
    """

    id: str
    intersection_id: str
    kind: str
    position: tuple[float, float]
    offsets: dict[str, float]

    def movements(self) -> tuple[str, ...]:
        return tuple(sorted(self.offsets))


@dataclass(frozen=True)
class PlanCrossing:
    """One intersection traversal within a PathPlan."""

    intersection_id: str
    movement_id: str  # connector lane id
    entry_s: float  # plan arc length of the stop bar / connector start
    exit_s: float  # plan arc length where the connector ends


@dataclass
class PathPlan:
    """A stitched lane-level route for one vehicle."""

    lane_ids: tuple[str, ...]
    polyline: Polyline
    lane_start_s: dict[str, float]  # lane id -> arc length where it begins
    crossings: list[PlanCrossing] = field(default_factory=list)
    vehicle_id: int | None = None

    @property
    def length(self) -> float:
        return self.polyline.length

    def lane_at(self, s: float) -> str:
        best = self.lane_ids[0]
        for lid in self.lane_ids:
            if self.lane_start_s[lid] <= s + 1e-9:
                best = lid
            else:
                break
        return best

    def offset_of(self, cp: ConflictPoint) -> float:
        """Plan arc length of a conflict point lying on this plan's movement."""
        for lid in self.lane_ids:
            if lid in cp.offsets:
                return self.lane_start_s[lid] + cp.offsets[lid]
        raise KeyError(f"conflict point {cp.id} not on this plan")


class LaneGraph:
    """The full map: lanes, links, intersections, and their conflict points."""

    def __init__(self, lanes: list[Lane], links: list[Link]):
        self.lanes: dict[str, Lane] = {ln.id: ln for ln in lanes}
        self.links: list[Link] = links
        for ln in lanes:
            for suc in ln.successors:
                if suc not in self.lanes:
                    raise ValueError(f"lane {ln.id} references unknown successor {suc}")
        self.intersections: list[str] = sorted(
            {ln.intersection_id for ln in lanes if ln.intersection_id is not None}
        )
        self._conflicts: dict[str, list[ConflictPoint]] = {}
        self._pair_conflicts: dict[tuple[str, str], list[ConflictPoint]] = {}
        for iid in self.intersections:
            self._enumerate_intersection(iid)

    def movements(self, intersection_id: str) -> list[Lane]:
        return [
            ln
            for ln in self.lanes.values()
            if ln.intersection_id == intersection_id and ln.kind == "connector"
        ]

    def _enumerate_intersection(self, intersection_id: str) -> None:
        movements = self.movements(intersection_id)
        raw = []
        for i, ma in enumerate(movements):
            for mb in movements[i + 1 :]:
                for kind, pos, sa, sb in classify_pair(
                    ma.centerline, mb.centerline, COINCIDENCE_TOL_M
                ):
                    raw.append((kind, pos, ma.id, sa, mb.id, sb))
        # merge/diverge loci shared by three movements collapse into single
        # points; crossings are pairwise and geometrically distinct
        clusters: list[tuple[str, tuple[float, float], dict[str, float]]] = []
        for kind, pos, ida, sa, idb, sb in raw:
            for ck, cpos, offs in clusters:
                if ck == kind and _close(cpos, pos, COINCIDENCE_TOL_M):
                    offs.setdefault(ida, sa)
                    offs.setdefault(idb, sb)
                    break
            else:
                clusters.append((kind, pos, {ida: sa, idb: sb}))
        points = [
            ConflictPoint(
                id=f"{intersection_id}:{kind[:5]}:{n}",
                intersection_id=intersection_id,
                kind=kind,
                position=pos,
                offsets=offs,
            )
            for n, (kind, pos, offs) in enumerate(sorted(clusters, key=_cluster_key))
        ]
        self._conflicts[intersection_id] = points
        for cp in points:
            movs = cp.movements()
            for i, a in enumerate(movs):
                for b in movs[i + 1 :]:
                    self._pair_conflicts.setdefault((a, b), []).append(cp)
                    self._pair_conflicts.setdefault((b, a), []).append(cp)

    # ------------------------------------------------------------------

    def intersection_conflicts(self, intersection_id: str) -> list[ConflictPoint]:
        return list(self._conflicts[intersection_id])

    def pair_conflicts(self, movement_a: str, movement_b: str) -> list[ConflictPoint]:
        """Conflict points shared by two movements (empty if independent)."""
        return list(self._pair_conflicts.get((movement_a, movement_b), ()))

    def movements_conflict(self, movement_a: str, movement_b: str) -> bool:
        if movement_a == movement_b:
            return True  # identical path: a following conflict
        return (movement_a, movement_b) in self._pair_conflicts

    # ------------------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "links": [
                {
                    "id": lk.id,
                    "lanes": [
                        {
                            "id": lid,
                            "speed_limit": self.lanes[lid].speed_limit,
                            "successors": list(self.lanes[lid].successors),
                            "intersection_id": self.lanes[lid].intersection_id,
                            "kind": self.lanes[lid].kind,
                            "turn": self.lanes[lid].turn,
                            "waypoints": self.lanes[lid].centerline.points.tolist(),
                        }
                        for lid in lk.lane_ids
                    ],
                }
                for lk in self.links
            ]
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LaneGraph":
        doc = json.loads(text)
        lanes = []
        links = []
        for lk in doc["links"]:
            lane_ids = []
            for ld in lk["lanes"]:
                lanes.append(
                    Lane(
                        id=ld["id"],
                        centerline=Polyline(np.array(ld["waypoints"])),
                        speed_limit=ld["speed_limit"],
                        successors=tuple(ld["successors"]),
                        intersection_id=ld["intersection_id"],
                        kind=ld["kind"],
                        turn=ld["turn"],
                    )
                )
                lane_ids.append(ld["id"])
            links.append(Link(id=lk["id"], lane_ids=tuple(lane_ids)))
        return cls(lanes, links)


def _close(a, b, tol):
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol


def _cluster_key(cluster):
    kind, pos, _ = cluster
    return (kind, round(pos[0], 3), round(pos[1], 3))


def classify_pair(a: Polyline, b: Polyline, tol: float):
    """Conflict records between two movement polylines.

    Returns (kind, position, s_a, s_b) tuples. Movements sharing their
    upstream straight produce a diverging record where the first of them
    departs it; movements feeding the same exit produce a merging record
    where the later one joins; transversal intersections away from those
    loci are crossings.
    """
    records = []
    anchors = []
    starts_close = _dist(a.points[0], b.points[0]) <= tol
    ends_close = _dist(a.points[-1], b.points[-1]) <= tol
    if starts_close and ends_close and _max_deviation(a, b) < tol:
        raise DegenerateGeometry("distinct paths overlap for their entire length")

    if starts_close:
        da, db = a.start_direction(), b.start_direction()
        if da[0] * db[0] + da[1] * db[1] > 0.96:
            split_a = departure_arc(a, a.points[0], da)
            split_b = departure_arc(b, a.points[0], da)
            if split_a <= split_b:
                sa = split_a
                pos = a.point_at(sa)
                sb, _, _ = b.project(*pos)
            else:
                sb = split_b
                pos = b.point_at(sb)
                sa, _, _ = a.project(*pos)
            records.append((DIVERGING, pos, sa, sb))
            anchors.append(pos)

    if ends_close:
        da, db = a.end_direction(), b.end_direction()
        if da[0] * db[0] + da[1] * db[1] > 0.96:
            join_a = departure_arc(a, a.points[-1], da, from_end=True)
            join_b = departure_arc(b, a.points[-1], da, from_end=True)
            # the pair is merged only once the later stream has joined
            if a.length - join_a <= b.length - join_b:
                sa = join_a
                pos = a.point_at(sa)
                sb, _, _ = b.project(*pos)
            else:
                sb = join_b
                pos = b.point_at(sb)
                sa, _, _ = a.project(*pos)
            records.append((MERGING, pos, sa, sb))
            anchors.append(pos)

    for sa, sb, pos in polyline_crossings(a, b):
        if all(_dist(pos, anc) > ANCHOR_GUARD_M for anc in anchors):
            records.append((CROSSING, pos, sa, sb))
    return records


def _dist(p, q):
    return math.hypot(p[0] - q[0], p[1] - q[1])


def _max_deviation(a: Polyline, b: Polyline) -> float:
    worst = 0.0
    for s in np.arange(0.0, a.length + 0.5, 1.0):
        _, _, d = b.project(*a.point_at(float(s)))
        worst = max(worst, d)
    return worst


# ----------------------------------------------------------------------
# operations


def match_position(coord: tuple[float, float], plan: PathPlan) -> MapMatchResult:
    """Project a world coordinate onto the plan polyline.

    Raises OffMap when the nearest point is farther than the 10 m bound,
    signaling that the vehicle left its path.
    """
    s, lateral, dist = plan.polyline.project(coord[0], coord[1])
    if dist > MATCH_TOLERANCE_M:
        raise OffMap(f"coordinate {coord} is {dist:.1f} m from the path")
    return MapMatchResult(lane_id=plan.lane_at(s), s=s, lateral=lateral)


def plan_path(origin_lane: str, destination_lane: str, graph: LaneGraph) -> PathPlan:
    """Unique successor chain from origin to destination, stitched.

    The single-lane corridor geometry admits at most one route per
    origin/destination pair; raises Unreachable when none exists.
    """
    if origin_lane not in graph.lanes or destination_lane not in graph.lanes:
        raise Unreachable("unknown origin or destination lane")
    chain = _search_chain(origin_lane, destination_lane, graph)
    if chain is None:
        raise Unreachable(f"no route {origin_lane} -> {destination_lane}")
    return build_plan(chain, graph)


def _search_chain(origin, destination, graph):
    stack = [[origin]]
    while stack:
        chain = stack.pop()
        if chain[-1] == destination:
            return chain
        for suc in graph.lanes[chain[-1]].successors:
            if suc not in chain:
                stack.append(chain + [suc])
    return None


def build_plan(lane_chain: list[str], graph: LaneGraph) -> PathPlan:
    """Stitch an explicit lane chain into a PathPlan."""
    for cur, nxt in zip(lane_chain, lane_chain[1:]):
        if nxt not in graph.lanes[cur].successors:
            raise Unreachable(f"{nxt} is not a successor of {cur}")
    lines = [graph.lanes[lid].centerline for lid in lane_chain]
    poly = stitch(lines) if len(lines) > 1 else lines[0]
    starts: dict[str, float] = {}
    crossings = []
    s = 0.0
    for lid, line in zip(lane_chain, lines):
        starts[lid] = s
        lane = graph.lanes[lid]
        if lane.kind == "connector":
            crossings.append(
                PlanCrossing(
                    intersection_id=lane.intersection_id,
                    movement_id=lid,
                    entry_s=s,
                    exit_s=s + line.length,
                )
            )
        s += line.length
    return PathPlan(
        lane_ids=tuple(lane_chain),
        polyline=poly,
        lane_start_s=starts,
        crossings=crossings,
    )


def enumerate_conflicts(intersection_id: str, graph: LaneGraph) -> list[ConflictPoint]:
    """All conflict points among the intersection's movement paths."""
    return graph.intersection_conflicts(intersection_id)


def distance_to_conflict(plan: PathPlan, s: float, cp: ConflictPoint) -> float:
    """Remaining distance from plan arc length s to a conflict point.

    Raises AlreadyPassed once s is beyond the point (conflict cleared).
    """
    offset = plan.offset_of(cp)
    if s > offset + 1e-9:
        raise AlreadyPassed(f"s={s:.3f} beyond conflict at {offset:.3f}")
    return offset - s
