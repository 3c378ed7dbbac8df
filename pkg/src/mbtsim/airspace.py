"""Planar sector geometry on a flat nautical-mile plane.

x points east and y points north, both in NM. Bearings are degrees in
[0, 360), measured clockwise from north.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

POSITION_BOUND_NM = 10_000.0
_EDGE_EPS = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometry."""


class Position2D(NamedTuple):
    x: float
    y: float


def check_position(p: Position2D) -> Position2D:
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise GeometryError(f"non-finite position {p}")
    if abs(p.x) > POSITION_BOUND_NM or abs(p.y) > POSITION_BOUND_NM:
        raise GeometryError(f"position {p} beyond sanity bound")
    return p


@dataclass(frozen=True)
class Waypoint:
    name: str
    pos: Position2D

    def __post_init__(self):
        if not self.name or len(self.name) > 5 or not self.name.isupper():
            raise GeometryError(f"bad waypoint name {self.name!r}")
        check_position(self.pos)


@dataclass(frozen=True)
class Sector:
    boundary: tuple[Position2D, ...]
    floor: int
    ceiling: int

    def __post_init__(self):
        object.__setattr__(self, "boundary", tuple(Position2D(*p) for p in self.boundary))
        if len(self.boundary) < 3:
            raise GeometryError("sector boundary needs at least 3 vertices")
        for p in self.boundary:
            check_position(p)
        if not self.floor < self.ceiling:
            raise GeometryError("sector floor must be below ceiling")
        if not _is_simple(self.boundary):
            raise GeometryError("sector boundary is self-intersecting")

    def vertices(self) -> np.ndarray:
        return np.asarray(self.boundary, dtype=float)


@dataclass(frozen=True)
class Route:
    waypoints: tuple[str, ...]
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise GeometryError("route needs at least 2 waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a == b:
                raise GeometryError(f"route repeats waypoint {a} consecutively")

    def resolve(self, table: dict[str, Waypoint]) -> list[Position2D]:
        missing = [w for w in self.waypoints if w not in table]
        if missing:
            raise GeometryError(f"unresolvable waypoints {missing}")
        return [table[w].pos for w in self.waypoints]


def horizontal_distance(a: Position2D, b: Position2D) -> float:
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    return math.sqrt(dx * dx + dy * dy)


def track_between(a: Position2D, b: Position2D) -> float:
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("track between coincident points is undefined")
    brg = math.degrees(math.atan2(dx, dy))
    return brg + 360.0 if brg < 0.0 else (0.0 if brg >= 360.0 else brg)


def angular_difference(t1: float, t2: float) -> float:
    d = abs(t1 - t2) % 360.0
    return 360.0 - d if d > 180.0 else d


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    seg = math.hypot(bx - ax, by - ay)
    if abs(cross) > _EDGE_EPS * max(seg, 1.0):
        return False
    return (min(ax, bx) - _EDGE_EPS <= px <= max(ax, bx) + _EDGE_EPS
            and min(ay, by) - _EDGE_EPS <= py <= max(ay, by) + _EDGE_EPS)


def inside_laterally(sector: Sector, p: Position2D) -> bool:
    """Ray-casting test; points on the boundary count as inside."""
    px, py = p[0], p[1]
    pts = sector.boundary
    n = len(pts)
    inside = False
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        if _on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xint:
                inside = not inside
    return inside


def contains(sector: Sector, p: Position2D, fl: float) -> bool:
    return sector.floor <= fl <= sector.ceiling and inside_laterally(sector, p)


def inside_laterally_many(sector: Sector, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised `inside_laterally` over arrays of coordinates."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(xs.shape, dtype=bool)
    on_edge = np.zeros(xs.shape, dtype=bool)
    pts = sector.boundary
    n = len(pts)
    for i in range(n):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % n]
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        seg = max(math.hypot(bx - ax, by - ay), 1.0)
        on_edge |= ((np.abs(cross) <= _EDGE_EPS * seg)
                    & (xs >= min(ax, bx) - _EDGE_EPS) & (xs <= max(ax, bx) + _EDGE_EPS)
                    & (ys >= min(ay, by) - _EDGE_EPS) & (ys <= max(ay, by) + _EDGE_EPS))
        if ay == by:
            continue
        straddle = (ay > ys) != (by > ys)
        xint = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (xs < xint)
    return inside | on_edge


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    # collinear overlaps
    for o, a, b, c in ((o1, p1, p2, p3), (o2, p1, p2, p4), (o3, p3, p4, p1), (o4, p3, p4, p2)):
        if o == 0 and min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) \
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]):
            return True
    return False


def _is_simple(pts: Sequence[Position2D]) -> bool:
    n = len(pts)
    if len(set(pts)) != n:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True
