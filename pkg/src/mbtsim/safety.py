"""Separation semantics: loss of separation, ensured separation, unsafe clearances."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .airspace import GeometryError, Sector, angular_difference, horizontal_distance, \
    inside_laterally_many
from .simcore import (
    DEFAULT_DT,
    AircraftState,
    Clearance,
    EventLog,
    Trajectory,
    Vector2D,
    Waypoint,
    apply_clearance,
    project_one,
)
from ._kernels_py import bearing

LOSS_OF_SEPARATION = "LossOfSeparation"
ENSURED_VIOLATION = "EnsuredSeparationViolation"
UNSAFE_CLEARANCE = "UnsafeClearance"

CATCH_UP = "CatchUp"
CROSSING = "Crossing"
RECIPROCAL = "Reciprocal"

CATCH_UP_MAX_DEG = 45.0
RECIPROCAL_MIN_DEG = 135.0
MAX_HORIZON_S = 1200.0
MERGE_GAP_TICKS = 3


@dataclass(frozen=True)
class SeparationMinima:
    lateral_min: float = 5.0   # NM
    vertical_min: float = 10.0  # FL

    def __post_init__(self):
        if not (self.lateral_min > 0 and self.vertical_min > 0):
            raise ValueError("separation minima must be positive")


@dataclass(frozen=True)
class SeparationEvent:
    kind: str
    pair: tuple[str, str]
    time: float
    min_lateral: float
    min_vertical: float
    geometry: str | None
    start_time: float
    end_time: float
    cpa_time: float

    def as_dict(self) -> dict:
        return {"kind": self.kind, "pair": list(self.pair), "time": self.time,
                "min_lateral": self.min_lateral, "min_vertical": self.min_vertical,
                "geometry": self.geometry, "start_time": self.start_time,
                "end_time": self.end_time, "cpa_time": self.cpa_time}


@dataclass(frozen=True)
class Verdict:
    safe: bool
    events: tuple[SeparationEvent, ...] = ()

    def __bool__(self):
        return self.safe


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def separated(a: AircraftState, b: AircraftState, minima: SeparationMinima = SeparationMinima()) -> bool:
    # equality counts as separated
    return (horizontal_distance(a.pos, b.pos) >= minima.lateral_min
            or abs(a.fl - b.fl) >= minima.vertical_min)


def classify_tracks(track_a: float, track_b: float) -> str:
    d = angular_difference(track_a, track_b)
    if d < CATCH_UP_MAX_DEG:
        return CATCH_UP
    if d <= RECIPROCAL_MIN_DEG:
        return CROSSING
    return RECIPROCAL


def ground_track(heading: float, tas: float, wind: Vector2D) -> float:
    hr = math.radians(heading)
    vx = tas * math.sin(hr) + wind[0]
    vy = tas * math.cos(hr) + wind[1]
    if vx * vx + vy * vy < 1e-18:
        raise GeometryError("zero ground speed: track undefined")
    return bearing(vx, vy)


def classify_geometry(a: AircraftState, b: AircraftState, wind: Vector2D = Vector2D(0.0, 0.0)) -> str:
    return classify_tracks(ground_track(a.heading, a.tas, wind), ground_track(b.heading, b.tas, wind))


# --- trajectory scanning ------------------------------------------------------

def scan(callsigns: Sequence[str], times: np.ndarray, X, Y, F, valid, minima: SeparationMinima,
         kind: str, tracks: np.ndarray | None = None, detect_time: float | None = None,
         merge_gap: int = MERGE_GAP_TICKS) -> list[SeparationEvent]:
    """Turn per-interval pair violations into one event per episode.

    X, Y, F, valid are (n_aircraft, n_samples) arrays on the common `times`
    grid. `tracks` (same shape, degrees) supplies geometry classes.
    """
    n = len(callsigns)
    times = np.asarray(times, dtype=float)
    if n < 2 or len(times) == 0:
        return []
    X = np.asarray(X, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    events: list[SeparationEvent] = []
    if len(times) == 1:
        for i in range(n):
            for j in range(i + 1, n):
                if not (valid[i, 0] and valid[j, 0]):
                    continue
                d = math.hypot(X[i, 0] - X[j, 0], Y[i, 0] - Y[j, 0])
                v = abs(F[i, 0] - F[j, 0])
                if d < minima.lateral_min and v < minima.vertical_min:
                    geom = None if tracks is None else classify_tracks(tracks[i, 0], tracks[j, 0])
                    t = float(times[0])
                    events.append(SeparationEvent(kind, _pair(callsigns[i], callsigns[j]),
                                                  t if detect_time is None else detect_time,
                                                  d, v, geom, t, t, t))
        return sorted(events, key=lambda e: (e.time, e.start_time, e.pair))

    viol, t_in, dmin, tmin, vmin = kernels.pair_scan(X, Y, F, valid, minima.lateral_min,
                                                      minima.vertical_min)
    ii, jj = np.triu_indices(n, k=1)
    span = np.diff(times)
    for p in np.flatnonzero(viol.any(axis=1)):
        ks = np.flatnonzero(viol[p])
        groups = [[ks[0]]]
        for k in ks[1:]:
            if k - groups[-1][-1] - 1 < merge_gap:
                groups[-1].append(k)
            else:
                groups.append([k])
        i, j = ii[p], jj[p]
        for g in groups:
            g = np.asarray(g)
            k0 = g[0]
            start = float(times[k0] + t_in[p, k0] * span[k0])
            kc = g[np.argmin(dmin[p, g])]
            cpa = float(times[kc] + tmin[p, kc] * span[kc])
            end = float(times[g[-1] + 1])
            geom = None
            if tracks is not None:
                geom = classify_tracks(tracks[i, k0], tracks[j, k0])
            events.append(SeparationEvent(
                kind, _pair(callsigns[i], callsigns[j]),
                start if detect_time is None else detect_time,
                float(dmin[p, g].min()), float(vmin[p, g].min()), geom, start, end, cpa))
    return sorted(events, key=lambda e: (e.time, e.start_time, e.pair))


def _tracks_from_headings(H: np.ndarray, tas: np.ndarray, wind: Vector2D) -> np.ndarray:
    hr = np.radians(H)
    vx = tas[:, None] * np.sin(hr) + wind[0]
    vy = tas[:, None] * np.cos(hr) + wind[1]
    return np.degrees(np.arctan2(vx, vy)) % 360.0


def _tracks_from_positions(X: np.ndarray, Y: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Ground tracks from sample-to-sample displacement; heading where stationary."""
    if X.shape[1] < 2:
        return H.copy()
    dx, dy = np.diff(X, axis=1), np.diff(Y, axis=1)
    dx = np.concatenate([dx, dx[:, -1:]], axis=1)
    dy = np.concatenate([dy, dy[:, -1:]], axis=1)
    moving = dx * dx + dy * dy > 1e-18
    return np.where(moving, np.degrees(np.arctan2(dx, dy)) % 360.0, H)


def log_arrays(log: EventLog):
    """Snapshot grid from a run log: (callsigns, times, X, Y, F, valid, tracks)."""
    snaps = log.of_kind("snapshot")
    if not snaps:
        return [], np.zeros(0), *(np.zeros((0, 0)),) * 4, np.zeros((0, 0))
    callsigns = sorted({e.callsign for e in snaps})
    times = np.array(sorted({e.time for e in snaps}), dtype=float)
    col = {t: k for k, t in enumerate(times.tolist())}
    row = {c: i for i, c in enumerate(callsigns)}
    shape = (len(callsigns), len(times))
    X, Y, F, trk = (np.zeros(shape) for _ in range(4))
    valid = np.zeros(shape, dtype=bool)
    for e in snaps:
        i, k = row[e.callsign], col[e.time]
        X[i, k], Y[i, k], F[i, k], trk[i, k] = e.data["x"], e.data["y"], e.data["fl"], e.data["trk"]
        valid[i, k] = True
    return callsigns, times, X, Y, F, valid, trk


def detect_los(source, minima: SeparationMinima = SeparationMinima(),
               wind: Vector2D = Vector2D(0.0, 0.0)) -> list[SeparationEvent]:
    """Loss-of-separation episodes in a run log, trajectory list or state list."""
    if isinstance(source, EventLog):
        cs, times, X, Y, F, valid, trk = log_arrays(source)
        return scan(cs, times, X, Y, F, valid, minima, LOSS_OF_SEPARATION, tracks=trk)
    items = list(source)
    if not items:
        return []
    if isinstance(items[0], Trajectory):
        times = items[0].times
        X = np.vstack([t.x for t in items])
        Y = np.vstack([t.y for t in items])
        F = np.vstack([t.fl for t in items])
        H = np.vstack([t.heading for t in items])
        valid = np.ones(X.shape, dtype=bool)
        if all(hasattr(t, "tas") for t in items):
            trk = _tracks_from_headings(H, np.array([t.tas for t in items]), wind)
        else:
            trk = _tracks_from_positions(X, Y, H)
        return scan([t.callsign for t in items], times, X, Y, F, valid, minima,
                    LOSS_OF_SEPARATION, tracks=trk)
    states: list[AircraftState] = items
    X = np.array([[s.pos[0]] for s in states])
    Y = np.array([[s.pos[1]] for s in states])
    F = np.array([[s.fl] for s in states])
    trk = np.array([[ground_track(s.heading, s.tas, wind)] for s in states])
    return scan([s.callsign for s in states], np.zeros(1), X, Y, F, np.ones(X.shape, bool),
                minima, LOSS_OF_SEPARATION, tracks=trk)


# --- ensured separation -----------------------------------------------------------

class ProjectionSet:
    """No-further-instruction projections of a traffic picture.

    Rows are cached per aircraft so hypothetical clearances only re-project
    the aircraft they touch.
    """

    def __init__(self, states: Iterable[AircraftState], wind: Vector2D, minima: SeparationMinima,
                 sector: Sector | None = None, horizon: float = MAX_HORIZON_S,
                 dt: float = DEFAULT_DT, t0: float = 0.0, _rows: dict | None = None):
        self.states = {s.callsign: s for s in states}
        self.wind = Vector2D(*wind)
        self.minima = minima
        self.sector = sector
        self.horizon = horizon
        self.dt = dt
        self.t0 = t0
        self._rows = dict(_rows or {})
        for cs, s in self.states.items():
            if cs not in self._rows:
                self._rows[cs] = self._project(s)

    def _project(self, s: AircraftState):
        tr = project_one(s, self.wind, self.horizon, self.dt, self.t0)
        valid = np.ones(tr.x.shape, dtype=bool)
        if self.sector is not None:
            inside = inside_laterally_many(self.sector, tr.x, tr.y)
            seen = np.maximum.accumulate(inside)
            gone = seen & ~inside
            if gone.any():
                valid[np.argmax(gone):] = False
        hr = np.radians(tr.heading)
        trk = np.degrees(np.arctan2(s.tas * np.sin(hr) + self.wind[0],
                                    s.tas * np.cos(hr) + self.wind[1])) % 360.0
        return tr, valid, trk

    @property
    def times(self) -> np.ndarray:
        n = int(math.ceil(self.horizon / self.dt - 1e-9))
        return self.t0 + self.dt * np.arange(n + 1)

    def trajectory(self, callsign: str) -> Trajectory:
        return self._rows[callsign][0]

    def with_states(self, changed: Iterable[AircraftState]) -> "ProjectionSet":
        changed = list(changed)
        rows = {cs: r for cs, r in self._rows.items()}
        states = dict(self.states)
        for s in changed:
            states[s.callsign] = s
            rows.pop(s.callsign, None)
        return ProjectionSet(states.values(), self.wind, self.minima, self.sector, self.horizon,
                             self.dt, self.t0, rows)

    def events(self, only: str | None = None) -> list[SeparationEvent]:
        cs = list(self.states)
        if only is not None:
            # only pairs involving `only`: put it first and scan each pair with it
            others = [c for c in cs if c != only]
            out = []
            for c in others:
                out.extend(self._scan([only, c]))
            return sorted(out, key=lambda e: (e.time, e.start_time, e.pair))
        return self._scan(cs)

    def _scan(self, cs: list[str]) -> list[SeparationEvent]:
        if len(cs) < 2:
            return []
        rows = [self._rows[c] for c in cs]
        X = np.vstack([r[0].x for r in rows])
        Y = np.vstack([r[0].y for r in rows])
        F = np.vstack([r[0].fl for r in rows])
        V = np.vstack([r[1] for r in rows])
        T = np.vstack([r[2] for r in rows])
        return scan(cs, rows[0][0].times, X, Y, F, V, self.minima, ENSURED_VIOLATION,
                    tracks=T, detect_time=self.t0, merge_gap=MERGE_GAP_TICKS)


def ensured(states: Iterable[AircraftState], wind: Vector2D = Vector2D(0.0, 0.0),
            minima: SeparationMinima = SeparationMinima(), horizon: float = MAX_HORIZON_S,
            sector: Sector | None = None, dt: float = DEFAULT_DT, t0: float = 0.0
            ) -> list[SeparationEvent]:
    """Projected violations if no further instructions are issued.

    With a sector, each projection ends where the aircraft leaves it, so
    the effective horizon is min(`horizon`, time for all to exit).
    """
    return ProjectionSet(states, wind, minima, sector, horizon, dt, t0).events()


def check_clearance(states: Sequence[AircraftState] | ProjectionSet, clearance: Clearance,
                    wind: Vector2D = Vector2D(0.0, 0.0), minima: SeparationMinima = SeparationMinima(),
                    horizon: float = MAX_HORIZON_S, waypoints: dict[str, Waypoint] | None = None,
                    sector: Sector | None = None, dt: float = DEFAULT_DT, t0: float = 0.0
                    ) -> Verdict:
    """Unsafe iff applying `clearance` introduces a violating pair absent before."""
    base = states if isinstance(states, ProjectionSet) else \
        ProjectionSet(states, wind, minima, sector, horizon, dt, t0)
    target = base.states.get(clearance.callsign)
    if target is None:
        raise KeyError(f"no live aircraft {clearance.callsign}")
    after = base.with_states([apply_clearance(target, clearance, waypoints or {})])
    return compare(base, after, clearance.callsign)


def compare(before: ProjectionSet, after: ProjectionSet, callsign: str | None = None) -> Verdict:
    """Verdict on the change from `before` to `after` (pairs with `callsign` only, if given)."""
    old = {e.pair for e in before.events(only=callsign)}
    new = [e for e in after.events(only=callsign) if e.pair not in old]
    if new:
        return Verdict(False, tuple(replace(e, kind=UNSAFE_CLEARANCE) for e in new))
    return Verdict(True)
