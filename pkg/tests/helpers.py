"""Small hand-built scenarios shared by the tests."""
from __future__ import annotations

from mbtsim.airspace import Position2D, Route, Sector, Waypoint
from mbtsim.simcore import Entry, ExitCondition, PerformanceProfile, Scenario, Vector2D

HALF = 40.0
SQUARE = Sector(((-HALF, -HALF), (HALF, -HALF), (HALF, HALF), (-HALF, HALF)), 150, 460)

WAYPOINTS = {
    "WEST": Waypoint("WEST", Position2D(-HALF, 0.0)),
    "EAST": Waypoint("EAST", Position2D(HALF, 0.0)),
    "SOUTH": Waypoint("SOUTH", Position2D(0.0, -HALF)),
    "NORTH": Waypoint("NORTH", Position2D(0.0, HALF)),
    "MID": Waypoint("MID", Position2D(0.0, 0.0)),
}


def perf(tas=450.0, climb=2000.0, descent=2000.0, turn=3.0, code="A320"):
    return PerformanceProfile(code, tas, climb, descent, turn)


def entry(callsign, start, end, fl=330, exit_fl=None, t=0.0, tas=450.0, via=()):
    wps = (start, *via, end)
    return Entry(t, callsign, perf(tas), WAYPOINTS[start].pos, fl, Route(wps),
                 ExitCondition(end, exit_fl if exit_fl is not None else fl))


def scenario(*entries, wind=(0.0, 0.0), duration=600.0, pilot_delay=0.0, sid="hand"):
    return Scenario(sid, SQUARE, dict(WAYPOINTS), Vector2D(*wind), tuple(entries), duration, pilot_delay)


def reciprocal_pair(fl_a=330, fl_b=330, **kw):
    """Head-on pair on the east-west line; 80 NM apart, meeting at the centre after 320 s at 450 kt."""
    return scenario(entry("AAA1", "WEST", "EAST", fl_a), entry("BBB2", "EAST", "WEST", fl_b), **kw)
