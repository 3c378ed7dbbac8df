"""Parametric scenario generator: square sector with designed conflict pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..airspace import Position2D, Route, Sector, Waypoint
from ..safety import CATCH_UP, CROSSING, RECIPROCAL, detect_los
from ..simcore import (
    DEFAULT_DURATION,
    ConfigurationError,
    Entry,
    ExitCondition,
    PerformanceProfile,
    Scenario,
    Vector2D,
    run_scenario,
)

MIXED = "Mixed"
PATTERNS = (CATCH_UP, CROSSING, RECIPROCAL, MIXED)

HALF_WIDTH_NM = 40.0
FLOOR, CEILING = 150, 460
BASE_SPACING_S = 240.0   # between conflict times of consecutive pairs at difficulty 1
EXIT_MARGIN_S = 60.0     # designed traffic must have left this long before the end
MAX_WIND_KT = 25.0
MAX_ATTEMPTS = 25

# type, cruise TAS, climb, descent, turn rate
AIRCRAFT_TYPES = {
    "A320": (450.0, 2000.0, 2200.0, 3.0),
    "B738": (460.0, 2200.0, 2400.0, 3.0),
    "E190": (430.0, 2000.0, 2000.0, 3.0),
    "B77W": (490.0, 1800.0, 2200.0, 3.0),
    "DH8D": (310.0, 1500.0, 1800.0, 3.0),
}
FAST_TYPES = ("A320", "B738", "E190", "B77W")
AIRLINES = ("BAW", "EZY", "RYR", "DLH", "AFR", "KLM", "VIR", "SAS", "IBE", "TOM")


@dataclass(frozen=True)
class PatternSpec:
    pattern: str = CROSSING
    n_aircraft: int = 4
    difficulty: float = 1.0  # scales spawn spacing: higher = tighter
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if not 2 <= self.n_aircraft <= 20:
            raise ConfigurationError("n_aircraft must be in [2, 20]")
        if not (self.difficulty > 0 and math.isfinite(self.difficulty)):
            raise ConfigurationError("difficulty must be positive")


def perf_for(type_code: str) -> PerformanceProfile:
    return PerformanceProfile(type_code, *AIRCRAFT_TYPES[type_code])


def _ray_to_box(p, theta_deg: float, half: float) -> float:
    """Distance from p (inside the box) along bearing theta to the boundary."""
    ux, uy = math.sin(math.radians(theta_deg)), math.cos(math.radians(theta_deg))
    ts = []
    for pc, uc in ((p[0], ux), (p[1], uy)):
        if uc > 1e-12:
            ts.append((half - pc) / uc)
        elif uc < -1e-12:
            ts.append((-half - pc) / uc)
    return min(ts)


def _ground_speed(tas: float, track_deg: float, wind) -> float:
    t = math.radians(track_deg)
    along = wind[0] * math.sin(t) + wind[1] * math.cos(t)
    cross = wind[0] * math.cos(t) - wind[1] * math.sin(t)
    return math.sqrt(tas * tas - cross * cross) + along


def _snap(v: float) -> float:
    v = round(v, 3)
    return 0.0 if v == 0 else v


def _on_box(p, half):
    """Snap a boundary point exactly onto the square."""
    x, y = p
    if abs(abs(x) - half) < abs(abs(y) - half):
        x = math.copysign(half, x)
        y = _snap(y)
    else:
        y = math.copysign(half, y)
        x = _snap(x)
    return Position2D(float(x), float(y))


class _Builder:
    def __init__(self, spec: PatternSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.half = HALF_WIDTH_NM
        ws = float(rng.uniform(0.0, MAX_WIND_KT))
        wd = float(rng.uniform(0.0, 360.0))
        self.wind = Vector2D(_snap(ws * math.sin(math.radians(wd))),
                             _snap(ws * math.cos(math.radians(wd))))
        self.waypoints: dict[str, Waypoint] = {}
        self.entries: list[Entry] = []
        self.callsigns: set[str] = set()
        self.designed: list[tuple[str, str, str]] = []
        self.levels_used: list[int] = []

    def callsign(self) -> str:
        while True:
            cs = f"{AIRLINES[self.rng.integers(len(AIRLINES))]}{self.rng.integers(100, 1000)}"
            if cs not in self.callsigns:
                self.callsigns.add(cs)
                return cs

    def _fix(self, prefix: str, p) -> str:
        name = f"{prefix}{len(self.waypoints) // 2 + 1:02d}"
        while name in self.waypoints:
            name = name[:-2] + f"{int(name[-2:]) + 1:02d}"
        self.waypoints[name] = Waypoint(name, p)
        return name

    def leg(self, through, track: float):
        """Entry/exit fixes of the straight route through `through` on `track`."""
        back = _ray_to_box(through, (track + 180.0) % 360.0, self.half)
        fwd = _ray_to_box(through, track, self.half)
        t = math.radians(track)
        ux, uy = math.sin(t), math.cos(t)
        entry = _on_box((through[0] - back * ux, through[1] - back * uy), self.half)
        exit_ = _on_box((through[0] + fwd * ux, through[1] + fwd * uy), self.half)
        return entry, exit_

    def exit_level(self, fl: int) -> int:
        choices = [d for d in (-20, 0, 20) if FLOOR <= fl + d <= CEILING]
        return int(fl + choices[self.rng.integers(len(choices))])

    def travel(self, type_code: str, entry_p, exit_p, through) -> tuple[float, float]:
        """Seconds from entry to `through` and from `through` to exit."""
        tas = AIRCRAFT_TYPES[type_code][0]
        track = math.degrees(math.atan2(exit_p[0] - entry_p[0], exit_p[1] - entry_p[1])) % 360.0
        gs = _ground_speed(tas, track, self.wind)
        d_in = math.hypot(through[0] - entry_p[0], through[1] - entry_p[1])
        d_out = math.hypot(exit_p[0] - through[0], exit_p[1] - through[1])
        return 3600.0 * d_in / gs, 3600.0 * d_out / gs

    def add(self, leg: tuple, t_conflict: float) -> str:
        type_code, entry_p, exit_p, fl, offset, through = leg
        t_in, _ = self.travel(type_code, entry_p, exit_p, through)
        spawn_t = float(math.floor(t_conflict + offset - t_in))
        cs = self.callsign()
        en = self._fix("EN", entry_p)
        ex = self._fix("EX", exit_p)
        route = Route((en, ex), f"R{en[2:]}{ex[2:]}")
        self.entries.append(Entry(spawn_t, cs, perf_for(type_code), entry_p, fl, route,
                                  ExitCondition(ex, self.exit_level(fl))))
        self.levels_used.append(fl)
        return cs

    def sample_pair(self, geometry: str) -> list[tuple]:
        """Two legs (type, entry, exit, fl, time offset, conflict point)."""
        rng = self.rng
        p = (float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)))
        theta = float(rng.uniform(0, 360))
        fl = int(rng.integers(25, 38)) * 10
        if geometry == CATCH_UP:
            entry_p, exit_p = self.leg(p, theta)
            if math.hypot(p[0] - entry_p[0], p[1] - entry_p[1]) < 25.0:
                raise _Retry()
            fast = FAST_TYPES[rng.integers(len(FAST_TYPES))]
            return [("DH8D", entry_p, exit_p, fl, 0.0, p), (fast, entry_p, exit_p, fl, 0.0, p)]
        if geometry == CROSSING:
            delta = float(rng.uniform(60, 120)) * (1 if rng.random() < 0.5 else -1)
        else:
            delta = 180.0 + float(rng.uniform(-15, 15))
        types = [FAST_TYPES[rng.integers(len(FAST_TYPES))] for _ in range(2)]
        e1, x1 = self.leg(p, theta)
        e2, x2 = self.leg(p, (theta + delta) % 360.0)
        jitter = float(rng.uniform(-8, 8))
        return [(types[0], e1, x1, fl, 0.0, p), (types[1], e2, x2, fl, jitter, p)]

    def sample_single(self, reserved: list[int]) -> tuple:
        """A leg on a level kept clear of the designed pairs."""
        rng = self.rng
        free = [fl for fl in range(FLOOR + 20, CEILING - 10, 10)
                if all(abs(fl - u) >= 30 for u in reserved)]
        if not free:
            raise _Retry()
        fl = int(free[rng.integers(len(free))])
        p = (float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)))
        entry_p, exit_p = self.leg(p, float(rng.uniform(0, 360)))
        return (FAST_TYPES[rng.integers(len(FAST_TYPES))], entry_p, exit_p, fl, 0.0, p)


class _Retry(Exception):
    pass


def _sector() -> Sector:
    h = HALF_WIDTH_NM
    return Sector((Position2D(-h, -h), Position2D(h, -h), Position2D(h, h), Position2D(-h, h)),
                  FLOOR, CEILING)


def _geometries(spec: PatternSpec, n_pairs: int) -> list[str]:
    if spec.pattern != MIXED:
        return [spec.pattern] * n_pairs
    cycle = (CROSSING, RECIPROCAL, CATCH_UP)
    return [cycle[i % 3] for i in range(n_pairs)]


def _build(spec: PatternSpec, rng: np.random.Generator, duration: float) -> tuple[Scenario, list]:
    b = _Builder(spec, rng)
    n_pairs = spec.n_aircraft // 2
    spacing = BASE_SPACING_S / spec.difficulty
    pairs = [(g, b.sample_pair(g)) for g in _geometries(spec, n_pairs)]
    single = None
    if spec.n_aircraft % 2:
        single = b.sample_single([leg[3] for _, legs in pairs for leg in legs])

    # conflict times: spaced by `spacing`, and late enough that nobody spawns before t=0
    def lead(leg):
        return b.travel(leg[0], leg[1], leg[2], leg[5])[0] - leg[4]

    def tail(leg):
        return b.travel(leg[0], leg[1], leg[2], leg[5])[1] + leg[4]

    t_prev = -math.inf
    last_exit = 0.0
    for geom, legs in pairs:
        tc = max(t_prev + spacing, max(lead(leg) for leg in legs) + 10.0)
        a, c = (b.add(leg, tc) for leg in legs)
        b.designed.append((a, c, geom))
        last_exit = max(last_exit, tc + max(tail(leg) for leg in legs))
        t_prev = tc
    if single is not None:
        tc = max(lead(single) + 10.0, (t_prev if pairs else 0.0) - spacing / 2)
        b.add(single, tc)
        last = b.entries[-1]
        # the loner keeps its own level so it stays clear of the pairs
        b.entries[-1] = Entry(last.spawn_time, last.callsign, last.perf, last.entry_pos,
                              last.entry_fl, last.route,
                              ExitCondition(last.exit.exit_waypoint, last.entry_fl))
        last_exit = max(last_exit, tc + tail(single))
    if last_exit > duration - EXIT_MARGIN_S:
        raise _Infeasible(last_exit)
    sid = f"gen-{spec.pattern.lower()}-n{spec.n_aircraft}-d{spec.difficulty:g}-s{spec.seed}"
    entries = tuple(sorted(b.entries, key=lambda e: (e.spawn_time, e.callsign)))
    sc = Scenario(sid, _sector(), dict(sorted(b.waypoints.items())), b.wind, entries, duration)
    sc.validate()
    return sc, b.designed


class _Infeasible(Exception):
    pass


def generate_scenario(spec: PatternSpec, duration: float = DEFAULT_DURATION,
                      verify: bool = True) -> Scenario:
    """Deterministic scenario for `spec`.

    Each designed pair is checked by a no-control run: it must lose
    separation with the requested geometry class. Raises ConfigurationError
    when the spacing cannot fit the traffic into the duration.
    """
    rng = np.random.default_rng([spec.seed, PATTERNS.index(spec.pattern), spec.n_aircraft])
    infeasible = 0
    for _ in range(MAX_ATTEMPTS):
        try:
            sc, designed = _build(spec, rng, duration)
        except _Retry:
            continue
        except _Infeasible:
            infeasible += 1
            if infeasible >= 5:
                break
            continue
        if not verify or _conflicts_present(sc, designed):
            return sc
    raise ConfigurationError(
        f"cannot place {spec.n_aircraft} aircraft with spacing "
        f"{BASE_SPACING_S / spec.difficulty:g} s in {duration:g} s")


def _conflicts_present(sc: Scenario, designed) -> bool:
    log = run_scenario(sc)
    found = {(e.pair, e.geometry) for e in detect_los(log, wind=sc.wind)}
    for a, b, geom in designed:
        pair = (a, b) if a <= b else (b, a)
        if (pair, geom) not in found:
            return False
    # designed exits must actually happen in the uncontrolled run
    return len(log.of_kind("exited")) == len(sc.entries)


def easy_suite(seed: int = 0) -> list[Scenario]:
    """One two-aircraft scenario per geometry class."""
    return [generate_scenario(PatternSpec(g, 2, 1.0, seed)) for g in (CATCH_UP, CROSSING, RECIPROCAL)]


def conflict_suite(seed: int = 0) -> list[Scenario]:
    """Three busier mixed-geometry scenarios."""
    return [generate_scenario(PatternSpec(MIXED, 6, 1.0, seed * 3 + k)) for k in range(3)]


def pattern_suite(seed: int = 0) -> list[Scenario]:
    """The three pattern scenarios at default difficulty."""
    return [generate_scenario(PatternSpec(g, seed=seed)) for g in (CATCH_UP, CROSSING, RECIPROCAL)]
