"""Qualitative spatial relations between the agent and nearby objects.

Grid coordinates follow the screen convention: x grows to the right and
y grows downward, so "north" means decreasing y.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple

if TYPE_CHECKING:
    from safe_explore.envs import EnvObservation

AGENT_ID = "agent"


class MissingAgent(ValueError):
    pass


class GridPoint(NamedTuple):
    x: int
    y: int


class Direction(Enum):
    N = "n"
    NE = "ne"
    E = "e"
    SE = "se"
    S = "s"
    SW = "sw"
    W = "w"
    NW = "nw"
    SAME = "same"

    @property
    def predicate(self) -> str:
        return self.value


class Distance(Enum):
    CLOSE = "close"
    FAR = "far"

    @property
    def predicate(self) -> str:
        return self.value


# Counter-clockwise from east, one cone per 45 degrees.
_CONES = (
    Direction.E,
    Direction.NE,
    Direction.N,
    Direction.NW,
    Direction.W,
    Direction.SW,
    Direction.S,
    Direction.SE,
)
_CARDINALS = frozenset({Direction.N, Direction.E, Direction.S, Direction.W})

DIRECTION_PREDICATES = tuple(d.predicate for d in Direction)
DISTANCE_PREDICATES = tuple(d.predicate for d in Distance)
TYPE_PREDICATE = "type"
HEADING_PREDICATE = "heading"
PREDICATES = DIRECTION_PREDICATES + DISTANCE_PREDICATES + (TYPE_PREDICATE, HEADING_PREDICATE)


class Relation(NamedTuple):
    predicate: str
    subject: str
    object: str

    def __str__(self) -> str:
        return f"{self.predicate}({self.subject},{self.object})"


# A symbolic state is simply the frozen set of relations that hold.
SymbolicState = frozenset


def direction_of(ref: GridPoint, target: GridPoint) -> Direction:
    """Cone direction of ``target`` as seen from ``ref``.

    Eight 45-degree cones, cardinal cones centred on the axes. A point
    lying exactly on a cone boundary is assigned to the cardinal cone.
    """
    dx = target[0] - ref[0]
    dy = ref[1] - target[1]  # flip so north is positive
    if dx == 0 and dy == 0:
        return Direction.SAME
    angle = math.degrees(math.atan2(dy, dx)) % 360.0
    sector = angle / 45.0
    idx = int(math.floor(sector + 0.5)) % 8
    # exact boundary (odd multiple of 22.5) goes to the neighbouring cardinal
    if math.isclose(sector % 1.0, 0.5, abs_tol=1e-12):
        lo, hi = _CONES[int(math.floor(sector)) % 8], _CONES[int(math.ceil(sector)) % 8]
        return lo if lo in _CARDINALS else hi
    return _CONES[idx]


def chebyshev(a: GridPoint, b: GridPoint) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def distance_of(ref: GridPoint, target: GridPoint, d_close: int) -> Distance:
    if d_close < 1:
        raise ValueError(f"d_close must be >= 1, got {d_close}")
    return Distance.CLOSE if chebyshev(ref, target) <= d_close else Distance.FAR


def _nearest_image(ref: GridPoint, target: GridPoint, width: int) -> GridPoint:
    # horizontal displacement measured around a road that wraps at the edges
    dx = (target[0] - ref[0]) % width
    if dx > width // 2:
        dx -= width
    return GridPoint(ref[0] + dx, target[1])


def extract_relations(
    obs: EnvObservation, region_radius: int = 2, d_close: int = 2
) -> frozenset[Relation]:
    """Agent-centric relations for every object within ``region_radius``.

    Each object in the region contributes its direction and distance from
    the agent, a ``type`` fact and, if it is moving, a ``heading`` fact
    giving the cone of its velocity.

    When the observation comes from a wrapping road, horizontal offsets to
    other objects are taken to their nearest periodic image, so a car about
    to wrap onto the agent's column is seen as adjacent.
    """
    agent = obs.agent
    if agent is None:
        raise MissingAgent("observation has no agent object")
    origin = agent.pos
    wrap = getattr(obs, "wrap", False)
    rels = set()
    for obj in obs.objects:
        if obj.kind == "agent":
            continue
        pos = _nearest_image(origin, obj.pos, obs.width) if wrap else obj.pos
        if chebyshev(origin, pos) > region_radius:
            continue
        rels.add(Relation(direction_of(origin, pos).predicate, AGENT_ID, obj.id))
        rels.add(Relation(distance_of(origin, pos, d_close).predicate, AGENT_ID, obj.id))
        rels.add(Relation(TYPE_PREDICATE, obj.id, obj.kind))
        vx, vy = obj.velocity
        if vx or vy:
            rels.add(Relation(HEADING_PREDICATE, obj.id, direction_of((0, 0), (vx, vy)).predicate))
    return frozenset(rels)
