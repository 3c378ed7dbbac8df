"""Deterministic fixed-step kinematic simulation of aircraft under clearances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, NamedTuple, Protocol, Sequence

import numpy as np

from . import kernels
from ._kernels_py import bearing, step_scalar, wind_corrected_heading
from .airspace import (
    GeometryError,
    Position2D,
    Route,
    Sector,
    Waypoint,
    check_position,
    inside_laterally,
)

CAPTURE_RADIUS_NM = 1.0
DEFAULT_DT = 5.0
DEFAULT_DECISION_INTERVAL = 10.0
DEFAULT_DURATION = 1800.0

HEADING = "heading"
LEVEL = "level"
DIRECT = "direct"
CLEARANCE_KINDS = (HEADING, LEVEL, DIRECT)


class ConfigurationError(ValueError):
    """Scenario or run configuration violates an invariant."""


class ClearanceRejected(ValueError):
    """A clearance could not be applied to an aircraft."""


class Vector2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class PerformanceProfile:
    type_code: str
    cruise_tas: float
    climb_rate: float
    descent_rate: float
    turn_rate: float

    def __post_init__(self):
        if not 100 <= self.cruise_tas <= 600:
            raise ConfigurationError(f"cruise_tas {self.cruise_tas} outside [100, 600] kt")
        for name in ("climb_rate", "descent_rate"):
            v = getattr(self, name)
            if not 500 <= v <= 6000:
                raise ConfigurationError(f"{name} {v} outside [500, 6000] ft/min")
        if not 0.5 <= self.turn_rate <= 6:
            raise ConfigurationError(f"turn_rate {self.turn_rate} outside [0.5, 6] deg/s")


@dataclass(frozen=True)
class Clearance:
    callsign: str
    kind: str
    value: Any
    issue_time: float = 0.0

    @classmethod
    def heading(cls, callsign, hdg, t=0.0):
        return cls(callsign, HEADING, float(hdg), t)

    @classmethod
    def level(cls, callsign, fl, t=0.0):
        return cls(callsign, LEVEL, int(fl) if float(fl).is_integer() else float(fl), t)

    @classmethod
    def direct(cls, callsign, waypoint, t=0.0):
        return cls(callsign, DIRECT, str(waypoint), t)

    def as_dict(self) -> dict:
        return {"callsign": self.callsign, "kind": self.kind, "value": self.value,
                "issue_time": self.issue_time}


class HeadingMode(NamedTuple):
    heading: float


class RouteMode(NamedTuple):
    route: tuple[str, ...]
    index: int


@dataclass(frozen=True)
class AircraftState:
    callsign: str
    pos: Position2D
    fl: float
    heading: float
    tas: float
    cleared_fl: int
    perf: PerformanceProfile
    route: tuple[str, ...]
    route_points: tuple[Position2D, ...]
    route_index: int = 0
    target_heading: float | None = None  # None while following the route
    entered: bool = False
    exited: bool = False

    @property
    def lateral_mode(self) -> HeadingMode | RouteMode:
        if self.target_heading is not None:
            return HeadingMode(self.target_heading)
        return RouteMode(self.route, self.route_index)

    @property
    def next_waypoint(self) -> str | None:
        if self.target_heading is not None or self.route_index >= len(self.route):
            return None
        return self.route[self.route_index]

    def ground_velocity(self, wind: Vector2D) -> tuple[float, float]:
        hr = math.radians(self.heading)
        return self.tas * math.sin(hr) + wind[0], self.tas * math.cos(hr) + wind[1]


@dataclass(frozen=True)
class ExitCondition:
    exit_waypoint: str
    exit_fl: int

    def __post_init__(self):
        if int(self.exit_fl) != self.exit_fl or self.exit_fl % 10:
            raise ConfigurationError(f"exit level {self.exit_fl} is not a multiple of 10")


@dataclass(frozen=True)
class Entry:
    spawn_time: float
    callsign: str
    perf: PerformanceProfile
    entry_pos: Position2D
    entry_fl: int
    route: Route
    exit: ExitCondition


@dataclass(frozen=True)
class Scenario:
    id: str
    sector: Sector
    waypoints: dict[str, Waypoint]
    wind: Vector2D
    entries: tuple[Entry, ...]
    duration: float = DEFAULT_DURATION
    pilot_delay: float = 0.0

    def validate(self) -> None:
        seen = set()
        for e in self.entries:
            if e.callsign in seen:
                raise ConfigurationError(f"duplicate callsign {e.callsign}")
            seen.add(e.callsign)
            if not 0 <= e.spawn_time < self.duration:
                raise ConfigurationError(f"{e.callsign}: spawn_time outside [0, duration)")
            check_position(e.entry_pos)
            if not 0 < e.entry_fl <= 600:
                raise ConfigurationError(f"{e.callsign}: entry level {e.entry_fl} out of range")
            try:
                e.route.resolve(self.waypoints)
            except GeometryError as exc:
                raise ConfigurationError(f"{e.callsign}: {exc}") from None
            wp = self.waypoints.get(e.exit.exit_waypoint)
            if wp is None:
                raise ConfigurationError(f"{e.callsign}: unknown exit waypoint {e.exit.exit_waypoint}")
            if _strictly_inside(self.sector, wp.pos):
                raise ConfigurationError(
                    f"{e.callsign}: exit waypoint {wp.name} lies strictly inside the sector")
        if self.pilot_delay < 0:
            raise ConfigurationError("pilot_delay must be >= 0")

    def entry(self, callsign: str) -> Entry:
        for e in self.entries:
            if e.callsign == callsign:
                return e
        raise KeyError(callsign)


def _strictly_inside(sector: Sector, p: Position2D) -> bool:
    if not inside_laterally(sector, p):
        return False
    # nudge test: a boundary point has outside points arbitrarily close
    eps = 1e-6
    return all(inside_laterally(sector, Position2D(p[0] + dx, p[1] + dy))
               for dx, dy in ((eps, 0), (-eps, 0), (0, eps), (0, -eps)))


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str  # snapshot | clearance | entered | exited | rejected
    callsign: str
    data: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "callsign": self.callsign, "data": self.data}


@dataclass
class EventLog:
    header: dict
    events: list[SimEvent] = field(default_factory=list)
    complete: bool = False

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind == kind]


@dataclass(frozen=True)
class ObservedAircraft:
    state: AircraftState
    exit: ExitCondition

    @property
    def callsign(self) -> str:
        return self.state.callsign


@dataclass(frozen=True)
class Observation:
    time: float
    aircraft: tuple[ObservedAircraft, ...]
    sector: Sector
    wind: Vector2D
    minima: Any
    waypoints: dict[str, Waypoint]

    def states(self) -> list[AircraftState]:
        return [a.state for a in self.aircraft]


@dataclass(frozen=True)
class AgentDecision:
    clearances: tuple[Clearance, ...] = ()
    rationale: tuple[str, ...] = ()


class Agent(Protocol):
    name: str

    def reset(self, scenario: Scenario, seed: int) -> None: ...

    def decide(self, obs: Observation) -> AgentDecision: ...


# --- kinematics -----------------------------------------------------------

def _route_arrays(state: AircraftState):
    rx = [p[0] for p in state.route_points]
    ry = [p[1] for p in state.route_points]
    return rx, ry, [math.nan] * len(rx)


def step(state: AircraftState, perf: PerformanceProfile | None = None,
         wind: Vector2D = Vector2D(0.0, 0.0), dt: float = DEFAULT_DT,
         capture_radius: float = CAPTURE_RADIUS_NM) -> AircraftState:
    """Advance one aircraft by `dt` seconds under its current clearances."""
    perf = perf or state.perf
    rx, ry, rfl = _route_arrays(state)
    mode_hdg = state.target_heading is not None
    x, y, fl, hdg, idx, _ = step_scalar(
        state.pos[0], state.pos[1], state.fl, state.heading, state.tas,
        float(state.cleared_fl), perf.climb_rate, perf.descent_rate, perf.turn_rate,
        mode_hdg, state.target_heading if mode_hdg else 0.0,
        rx, ry, rfl, state.route_index, wind[0], wind[1], dt, capture_radius)
    return replace(state, pos=Position2D(x, y), fl=fl, heading=hdg, route_index=idx)


def apply_clearance(state: AircraftState, clearance: Clearance,
                    waypoints: dict[str, Waypoint]) -> AircraftState:
    """Return the state with `clearance` in effect, or raise ClearanceRejected."""
    if clearance.callsign != state.callsign:
        raise ClearanceRejected(f"clearance for {clearance.callsign} sent to {state.callsign}")
    kind, value = clearance.kind, clearance.value
    if kind == HEADING:
        hdg = float(value)
        if not (math.isfinite(hdg) and 0.0 <= hdg < 360.0):
            raise ClearanceRejected(f"heading {value} outside [0, 360)")
        return replace(state, target_heading=hdg)
    if kind == LEVEL:
        fl = float(value)
        if not fl.is_integer() or int(fl) % 10:
            raise ClearanceRejected(f"level {value} is not a multiple of 10")
        if not 0 < fl <= 600:
            raise ClearanceRejected(f"level {value} outside (0, 600]")
        return replace(state, cleared_fl=int(fl))
    if kind == DIRECT:
        name = str(value)
        wp = waypoints.get(name)
        if wp is None:
            raise ClearanceRejected(f"unknown waypoint {name}")
        route, pts, idx = state.route, state.route_points, state.route_index
        if name in route[idx:]:
            idx = route.index(name, idx)
        elif name in route:
            idx = route.index(name)
        else:
            route = route[:idx] + (name,) + route[idx:]
            pts = pts[:idx] + (wp.pos,) + pts[idx:]
        return replace(state, route=route, route_points=pts, route_index=idx,
                       target_heading=None)
    raise ClearanceRejected(f"unsupported clearance kind {kind!r}")


def spawn(entry: Entry, scenario: Scenario) -> AircraftState:
    pts = tuple(entry.route.resolve(scenario.waypoints))
    idx = 0
    x, y = entry.entry_pos
    while idx < len(pts) and math.sqrt((pts[idx][0] - x) ** 2 + (pts[idx][1] - y) ** 2) \
            <= CAPTURE_RADIUS_NM:
        idx += 1
    tas = entry.perf.cruise_tas
    if idx < len(pts):
        trk = bearing(pts[idx][0] - x, pts[idx][1] - y)
        hdg = wind_corrected_heading(trk, tas, scenario.wind[0], scenario.wind[1])
    else:
        hdg = 0.0
    return AircraftState(
        callsign=entry.callsign, pos=Position2D(float(x), float(y)), fl=float(entry.entry_fl),
        heading=hdg, tas=tas, cleared_fl=int(entry.entry_fl), perf=entry.perf,
        route=entry.route.waypoints, route_points=pts, route_index=idx,
        entered=inside_laterally(scenario.sector, entry.entry_pos))


# --- projection -------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    callsign: str
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    fl: np.ndarray
    heading: np.ndarray


def project_one(state: AircraftState, wind: Vector2D, horizon: float, dt: float,
                t0: float = 0.0, route_levels: Sequence[float] | None = None,
                capture_radius: float = CAPTURE_RADIUS_NM) -> Trajectory:
    """Forward-simulate one aircraft with no further instructions.

    `route_levels` optionally assigns a cleared level on capture of each
    route point (NaN for none); used for plan evaluation.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    nsteps = int(math.ceil(horizon / dt - 1e-9))
    rx, ry, rfl = _route_arrays(state)
    if route_levels is not None:
        rfl = [float(v) for v in route_levels]
    mode_hdg = state.target_heading is not None
    X, Y, F, H, _, _ = kernels.propagate(
        float(state.pos[0]), float(state.pos[1]), float(state.fl), float(state.heading),
        float(state.tas), float(state.cleared_fl), float(state.perf.climb_rate),
        float(state.perf.descent_rate), float(state.perf.turn_rate), mode_hdg,
        float(state.target_heading) if mode_hdg else 0.0,
        rx, ry, rfl, state.route_index, float(wind[0]), float(wind[1]), float(dt), nsteps,
        float(capture_radius))
    times = t0 + dt * np.arange(nsteps + 1)
    return Trajectory(state.callsign, times, X, Y, F, H)


def project(states: Iterable[AircraftState], wind: Vector2D, horizon: float,
            dt: float = DEFAULT_DT, t0: float = 0.0) -> list[Trajectory]:
    return [project_one(s, wind, horizon, dt, t0) for s in states]


# --- run loop ---------------------------------------------------------------

def snapshot_data(state: AircraftState, wind: Vector2D) -> dict:
    vx, vy = state.ground_velocity(wind)
    gs = math.sqrt(vx * vx + vy * vy)
    return {
        "x": state.pos[0], "y": state.pos[1], "fl": state.fl, "hdg": state.heading,
        "tas": state.tas, "cleared_fl": state.cleared_fl,
        "target_hdg": state.target_heading, "route": list(state.route),
        "route_index": state.route_index, "gs": gs,
        "trk": bearing(vx, vy) if gs > 0 else state.heading,
        "entered": state.entered,
    }


def state_from_snapshot(ev: SimEvent, scenario: Scenario) -> AircraftState:
    d = ev.data
    entry = scenario.entry(ev.callsign)
    route = tuple(d["route"])
    return AircraftState(
        callsign=ev.callsign, pos=Position2D(d["x"], d["y"]), fl=d["fl"], heading=d["hdg"],
        tas=d["tas"], cleared_fl=d["cleared_fl"], perf=entry.perf, route=route,
        route_points=tuple(scenario.waypoints[w].pos for w in route),
        route_index=d["route_index"], target_heading=d["target_hdg"],
        entered=d["entered"])


def _ratio(a: float, b: float) -> int:
    r = a / b
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-9:
        raise ConfigurationError(f"{a} is not a positive multiple of {b}")
    return k


class NullAgent:
    name = "null"

    def reset(self, scenario, seed):
        pass

    def decide(self, obs):
        return AgentDecision()


def run_scenario(scenario: Scenario, agent: Agent | None = None, dt: float = DEFAULT_DT,
                 decision_interval: float = DEFAULT_DECISION_INTERVAL, seed: int = 0,
                 minima: Any = None, wind: Vector2D | None = None) -> EventLog:
    """Run a scenario to completion and return the event log.

    Each tick logs, in order: entry/exit transitions, spawns, one snapshot
    per airborne aircraft (pre-decision), then clearances and rejections.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    scenario.validate()
    every = _ratio(decision_interval, dt)
    ticks = int(math.floor(scenario.duration / dt + 1e-9))
    wind = Vector2D(*(scenario.wind if wind is None else wind))
    agent = agent or NullAgent()
    if minima is None:
        from .safety import SeparationMinima
        minima = SeparationMinima()
    agent.reset(scenario, seed)

    header = {"scenario_id": scenario.id, "agent": getattr(agent, "name", type(agent).__name__),
              "seed": seed, "dt": dt, "decision_interval": decision_interval,
              "duration_s": scenario.duration, "wind": [wind[0], wind[1]],
              "pilot_delay_s": scenario.pilot_delay}
    log = EventLog(header)
    ev = log.events
    pending = sorted(scenario.entries, key=lambda e: (e.spawn_time, e.callsign))
    exits = {e.callsign: e.exit for e in scenario.entries}
    live: dict[str, AircraftState] = {}
    queued: list[tuple[float, int, Clearance]] = []
    seq = 0

    for k in range(ticks + 1):
        t = k * dt
        while pending and pending[0].spawn_time <= t + 1e-9:
            e = pending.pop(0)
            st = spawn(e, scenario)
            live[e.callsign] = st
            if st.entered:
                ev.append(SimEvent(t, "entered", e.callsign, {"x": st.pos[0], "y": st.pos[1],
                                                               "fl": st.fl}))
        for cs, st in live.items():
            ev.append(SimEvent(t, "snapshot", cs, snapshot_data(st, wind)))

        if k % every == 0:
            obs = Observation(
                time=t,
                aircraft=tuple(ObservedAircraft(st, exits[cs]) for cs, st in live.items()
                               if st.entered and not st.exited),
                sector=scenario.sector, wind=wind, minima=minima, waypoints=scenario.waypoints)
            decision = agent.decide(obs)
            kinds_seen = set()
            for i, clr in enumerate(decision.clearances):
                clr = replace(clr, issue_time=t)
                why = decision.rationale[i] if i < len(decision.rationale) else ""
                key = (clr.callsign, clr.kind)
                st = live.get(clr.callsign)
                if st is None or not st.entered:
                    ev.append(SimEvent(t, "rejected", clr.callsign,
                                       {**clr.as_dict(), "reason": "no such aircraft under control"}))
                    continue
                if key in kinds_seen:
                    ev.append(SimEvent(t, "rejected", clr.callsign,
                                       {**clr.as_dict(), "reason": "duplicate clearance kind in epoch"}))
                    continue
                kinds_seen.add(key)
                if scenario.pilot_delay > 0:
                    ev.append(SimEvent(t, "clearance", clr.callsign, {**clr.as_dict(), "rationale": why}))
                    queued.append((t + scenario.pilot_delay, seq, clr))
                    seq += 1
                    continue
                try:
                    live[clr.callsign] = apply_clearance(st, clr, scenario.waypoints)
                except ClearanceRejected as exc:
                    ev.append(SimEvent(t, "rejected", clr.callsign, {**clr.as_dict(), "reason": str(exc)}))
                else:
                    ev.append(SimEvent(t, "clearance", clr.callsign, {**clr.as_dict(), "rationale": why}))
        if queued:
            due = sorted(q for q in queued if q[0] <= t + 1e-9)
            queued = [q for q in queued if q[0] > t + 1e-9]
            for _, _, clr in due:
                st = live.get(clr.callsign)
                if st is None:
                    continue
                try:
                    live[clr.callsign] = apply_clearance(st, clr, scenario.waypoints)
                except ClearanceRejected as exc:
                    ev.append(SimEvent(t, "rejected", clr.callsign, {**clr.as_dict(), "reason": str(exc)}))

        if k == ticks:
            break
        t_next = (k + 1) * dt
        for cs in list(live):
            st = step(live[cs], None, wind, dt)
            inside = inside_laterally(scenario.sector, st.pos)
            if not st.entered and inside:
                st = replace(st, entered=True)
                ev.append(SimEvent(t_next, "entered", cs, {"x": st.pos[0], "y": st.pos[1], "fl": st.fl}))
            elif st.entered and not inside:
                ev.append(SimEvent(t_next, "exited", cs, {"x": st.pos[0], "y": st.pos[1], "fl": st.fl,
                                                           "hdg": st.heading}))
                del live[cs]
                continue
            live[cs] = st
    log.complete = True
    return log
