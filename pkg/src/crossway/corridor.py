"""Synthetic corridor generator: four-leg single-lane intersections in a
line, with turn connectors built from tangent circular arcs.

The corridor street runs along +x with intersections at multiples of the
block length; each intersection also crosses a stub side street. Right-hand
traffic, one lane per direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Polyline, arc_points, straight_points
from .world_model import Lane, LaneGraph, Link

SETBACK = 8.0  # stop bar / connector zone half-extent from the center
LEFT_RADIUS = 8.0
RIGHT_RADIUS = 5.0
STRAIGHT_STEP = 1.0
ARC_STEP = 0.5

APPROACHES = ("W", "S", "E", "N")  # canonical frame rotated 90 deg CCW each


@dataclass(frozen=True)
class CorridorParams:
    n_intersections: int = 4
    block_length: float = 150.0
    lane_width: float = 3.5
    leg_length: float = 150.0
    speed_limit: float = 14.0

    def validate(self) -> None:
        if self.n_intersections < 1:
            raise ValueError("need at least one intersection")
        if self.block_length <= 2 * SETBACK:
            raise ValueError("block length must exceed the connector zones")
        if self.lane_width / 2 + RIGHT_RADIUS >= SETBACK:
            raise ValueError("lane too wide for the right-turn radius")
        if self.leg_length <= 10.0:
            raise ValueError("leg length too short for spawning")


def _rot90(points: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate points about the origin by exact multiples of 90 degrees."""
    k = quarter_turns % 4
    x, y = points[:, 0], points[:, 1]
    if k == 0:
        return points.copy()
    if k == 1:
        return np.stack([-y, x], axis=1)
    if k == 2:
        return np.stack([-x, -y], axis=1)
    return np.stack([y, -x], axis=1)


def _dedupe(chunks: list[np.ndarray]) -> np.ndarray:
    pts = [chunks[0]]
    for c in chunks[1:]:
        if math.hypot(*(c[0] - pts[-1][-1])) < 1e-9:
            pts.append(c[1:])
        else:
            pts.append(c)
    return np.vstack(pts)


def _canonical_connectors(half: float) -> dict[str, np.ndarray]:
    """Connector centerlines for the canonical west approach (heading +x)."""
    enter = (-SETBACK, -half)
    through = straight_points(enter, (SETBACK, -half), STRAIGHT_STEP)

    # left turn onto the northbound exit line x = +half
    lc = (half - LEFT_RADIUS, -half + LEFT_RADIUS)
    left = _dedupe(
        [
            straight_points(enter, (half - LEFT_RADIUS, -half), STRAIGHT_STEP),
            arc_points(lc, LEFT_RADIUS, -math.pi / 2, 0.0, ARC_STEP),
            straight_points((half, -half + LEFT_RADIUS), (half, SETBACK), STRAIGHT_STEP),
        ]
    )

    # right turn onto the southbound exit line x = -half
    rc = (-half - RIGHT_RADIUS, -half - RIGHT_RADIUS)
    right = _dedupe(
        [
            straight_points(enter, (-half - RIGHT_RADIUS, -half), STRAIGHT_STEP),
            arc_points(rc, RIGHT_RADIUS, math.pi / 2, 0.0, ARC_STEP),
            straight_points((-half, -half - RIGHT_RADIUS), (-half, -SETBACK), STRAIGHT_STEP),
        ]
    )
    return {"T": through, "L": left, "R": right}


def build_corridor(params: CorridorParams = CorridorParams()) -> LaneGraph:
    params.validate()
    n = params.n_intersections
    half = params.lane_width / 2
    leg = params.leg_length
    block = params.block_length
    vlim = params.speed_limit
    centers = [k * block for k in range(n)]

    lanes: list[Lane] = []
    links: list[Link] = []

    def add_lane(lid, pts, successors=(), intersection_id=None, kind="lane", turn=None):
        lanes.append(
            Lane(
                id=lid,
                centerline=Polyline(pts),
                speed_limit=vlim,
                successors=tuple(successors),
                intersection_id=intersection_id,
                kind=kind,
                turn=turn,
            )
        )

    def iid(k):
        return f"i{k}"

    def eb_approach(k):
        return "EB:entry" if k == 0 else f"EB:seg{k}"

    def eb_next(k):
        return f"EB:seg{k + 1}" if k < n - 1 else "EB:exit"

    def wb_approach(k):
        return "WB:entry" if k == n - 1 else f"WB:seg{k + 1}"

    def wb_next(k):
        return f"WB:seg{k}" if k >= 1 else "WB:exit"

    cn = lambda k, a, t: f"cn:{iid(k)}:{a}{t}"

    # corridor lanes, eastbound (y = -half) and westbound (y = +half)
    add_lane(
        "EB:entry",
        straight_points((centers[0] - SETBACK - leg, -half), (centers[0] - SETBACK, -half), STRAIGHT_STEP),
        successors=[cn(0, "W", t) for t in "TLR"],
        kind="approach",
    )
    for k in range(1, n):
        add_lane(
            f"EB:seg{k}",
            straight_points((centers[k - 1] + SETBACK, -half), (centers[k] - SETBACK, -half), STRAIGHT_STEP),
            successors=[cn(k, "W", t) for t in "TLR"],
            kind="approach",
        )
    add_lane(
        "EB:exit",
        straight_points((centers[-1] + SETBACK, -half), (centers[-1] + SETBACK + leg, -half), STRAIGHT_STEP),
        kind="exit",
    )
    add_lane(
        "WB:entry",
        straight_points((centers[-1] + SETBACK + leg, half), (centers[-1] + SETBACK, half), STRAIGHT_STEP),
        successors=[cn(n - 1, "E", t) for t in "TLR"],
        kind="approach",
    )
    for k in range(1, n):
        add_lane(
            f"WB:seg{k}",
            straight_points((centers[k] - SETBACK, half), (centers[k - 1] + SETBACK, half), STRAIGHT_STEP),
            successors=[cn(k - 1, "E", t) for t in "TLR"],
            kind="approach",
        )
    add_lane(
        "WB:exit",
        straight_points((centers[0] - SETBACK, half), (centers[0] - SETBACK - leg, half), STRAIGHT_STEP),
        kind="exit",
    )

    links.append(Link("lnk:corridor:west", ("EB:entry", "WB:exit")))
    for k in range(1, n):
        links.append(Link(f"lnk:corridor:{k - 1}-{k}", (f"EB:seg{k}", f"WB:seg{k}")))
    links.append(Link("lnk:corridor:east", ("EB:exit", "WB:entry")))

    # side streets and connectors per intersection
    canonical = _canonical_connectors(half)
    successor_of_turn = {
        "W": {"T": eb_next, "L": lambda k: f"NB:{iid(k)}:out", "R": lambda k: f"SB:{iid(k)}:out"},
        "S": {"T": lambda k: f"NB:{iid(k)}:out", "L": wb_next, "R": eb_next},
        "E": {"T": wb_next, "L": lambda k: f"SB:{iid(k)}:out", "R": lambda k: f"NB:{iid(k)}:out"},
        "N": {"T": lambda k: f"SB:{iid(k)}:out", "L": eb_next, "R": wb_next},
    }

    for k, xc in enumerate(centers):
        add_lane(
            f"NB:{iid(k)}:in",
            straight_points((xc + half, -SETBACK - leg), (xc + half, -SETBACK), STRAIGHT_STEP),
            successors=[cn(k, "S", t) for t in "TLR"],
            kind="approach",
        )
        add_lane(
            f"NB:{iid(k)}:out",
            straight_points((xc + half, SETBACK), (xc + half, SETBACK + leg), STRAIGHT_STEP),
            kind="exit",
        )
        add_lane(
            f"SB:{iid(k)}:in",
            straight_points((xc - half, SETBACK + leg), (xc - half, SETBACK), STRAIGHT_STEP),
            successors=[cn(k, "N", t) for t in "TLR"],
            kind="approach",
        )
        add_lane(
            f"SB:{iid(k)}:out",
            straight_points((xc - half, -SETBACK), (xc - half, -SETBACK - leg), STRAIGHT_STEP),
            kind="exit",
        )
        links.append(Link(f"lnk:{iid(k)}:south", (f"NB:{iid(k)}:in", f"SB:{iid(k)}:out")))
        links.append(Link(f"lnk:{iid(k)}:north", (f"SB:{iid(k)}:in", f"NB:{iid(k)}:out")))

        connector_ids = []
        turn_name = {"T": "through", "L": "left", "R": "right"}
        for q, approach in enumerate(APPROACHES):
            for t in "TLR":
                pts = _rot90(canonical[t], q)
                pts = pts + np.array([xc, 0.0])
                add_lane(
                    cn(k, approach, t),
                    pts,
                    successors=[successor_of_turn[approach][t](k)],
                    intersection_id=iid(k),
                    kind="connector",
                    turn=turn_name[t],
                )
                connector_ids.append(cn(k, approach, t))
        links.append(Link(f"lnk:{iid(k)}", tuple(connector_ids)))

    return LaneGraph(lanes, links)


def entry_lanes(graph: LaneGraph) -> list[str]:
    """Source lanes (no predecessors) in deterministic order."""
    referenced = {suc for ln in graph.lanes.values() for suc in ln.successors}
    return sorted(lid for lid, ln in graph.lanes.items()
                  if lid not in referenced and ln.successors)


def random_route(graph: LaneGraph, entry_lane: str, rng) -> list[str]:
    """Walk the successor graph choosing uniformly at each branching."""
    chain = [entry_lane]
    while True:
        sucs = graph.lanes[chain[-1]].successors
        if not sucs:
            return chain
        if len(sucs) == 1:
            chain.append(sucs[0])
        else:
            chain.append(sucs[int(rng.integers(len(sucs)))])


def through_route(graph: LaneGraph, entry_lane: str) -> list[str]:
    """Route that goes straight through every intersection it meets."""
    chain = [entry_lane]
    while True:
        sucs = graph.lanes[chain[-1]].successors
        if not sucs:
            return chain
        pick = sucs[0]
        for s in sucs:
            if graph.lanes[s].turn in (None, "through"):
                pick = s
                break
        chain.append(pick)
