"""Per-run metric extraction from a completed event log."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

from ..safety import MAX_HORIZON_S, ProjectionSet, SeparationMinima, compare, detect_los
from ..simcore import (
    Clearance,
    ClearanceRejected,
    EventLog,
    Scenario,
    Vector2D,
    apply_clearance,
    state_from_snapshot,
)


class TruncatedLogError(ValueError):
    """The run log has no end marker; metrics would be silently wrong."""


@dataclass(frozen=True)
class MetricsConfig:
    exit_lateral_nm: float = 3.0
    containment_nm: float = 10.0   # leaving this far from the exit fix is a containment violation
    ensured_grace_s: float = 30.0  # projected violations left standing longer than this count
    horizon_s: float = MAX_HORIZON_S


@dataclass
class RunMetrics:
    run_id: str = ""
    scenario_id: str = ""
    agent: str = ""
    seed: int = 0
    los_count: int = 0
    los_by_geometry: dict = field(default_factory=dict)
    los_events: list = field(default_factory=list)
    ensured_violations: int = 0
    ensured_episodes: list = field(default_factory=list)
    unsafe_clearances: int = 0
    unsafe_events: list = field(default_factory=list)
    resolutions: int = 0
    resolution_leads: list = field(default_factory=list)
    exits: list = field(default_factory=list)
    pending: list = field(default_factory=list)
    containment_violations: int = 0
    containment_events: list = field(default_factory=list)
    mean_path_ratio: float = 1.0
    minutes_below_exit_level: float = 0.0
    transfers: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(**d)

    @property
    def exit_misses(self) -> list[dict]:
        return [e for e in self.exits if not e["achieved"]]


def _clearance_from_event(ev) -> Clearance:
    d = ev.data
    return Clearance(ev.callsign, d["kind"], d["value"], d.get("issue_time", ev.time))


def extract_metrics(log: EventLog, scenario: Scenario, minima: SeparationMinima | None = None,
                    config: MetricsConfig | None = None, run_id: str = "") -> RunMetrics:
    if not log.complete:
        raise TruncatedLogError("run log is truncated (no end marker)")
    cfg = config or MetricsConfig()
    minima = minima or SeparationMinima()
    h = log.header
    m = RunMetrics(run_id=run_id or f"{h.get('scenario_id', scenario.id)}:{h.get('agent', '')}:{h.get('seed', 0)}",
                   scenario_id=h.get("scenario_id", scenario.id), agent=str(h.get("agent", "")),
                   seed=int(h.get("seed", 0)))
    if not log.events:
        return m
    wind = Vector2D(*h.get("wind", scenario.wind))
    dt = float(h.get("dt", 5.0))
    interval = float(h.get("decision_interval", 10.0))
    every = max(1, int(round(interval / dt)))
    exits = {e.callsign: e.exit for e in scenario.entries}

    # --- loss of separation
    for e in detect_los(log, minima, wind):
        m.los_events.append({"pair": list(e.pair), "start_time": e.start_time, "end_time": e.end_time,
                             "min_lateral": e.min_lateral, "min_vertical": e.min_vertical,
                             "geometry": e.geometry})
        m.los_by_geometry[e.geometry] = m.los_by_geometry.get(e.geometry, 0) + 1
    m.los_count = len(m.los_events)
    los_pairs = {tuple(e["pair"]) for e in m.los_events}

    snaps = defaultdict(list)
    clears = defaultdict(list)
    for idx, ev in enumerate(log.events):
        if ev.kind == "snapshot":
            snaps[ev.time].append(ev)
        elif ev.kind == "clearance":
            clears[ev.time].append((idx, ev))

    # --- per-epoch projections: ensured violations, unsafe clearances, conflict resolution
    post_seen: dict[tuple, list[float]] = defaultdict(list)
    open_items: dict[tuple, dict] = {}
    items: list[dict] = []
    times = sorted(snaps)
    for k, t in enumerate(times):
        if int(round(t / dt)) % every:
            continue
        states = [state_from_snapshot(e, scenario) for e in snaps[t] if e.data.get("entered")]
        live = {s.callsign for s in states}
        if len(states) < 2 and not clears.get(t):
            _close_missing(open_items, items, set(), t)
            continue
        pre = ProjectionSet(states, wind, minima, scenario.sector, cfg.horizon_s, dt, t)
        pre_ev = {e.pair: e for e in pre.events()}
        ps = pre
        for idx, cev in clears.get(t, []):
            if cev.callsign not in live:
                continue
            try:
                st = apply_clearance(ps.states[cev.callsign], _clearance_from_event(cev), scenario.waypoints)
            except ClearanceRejected:
                continue
            nxt = ps.with_states([st])
            verdict = compare(ps, nxt, cev.callsign)
            if not verdict.safe:
                m.unsafe_events.append({"event_id": f"e{idx}", "time": t, "callsign": cev.callsign,
                                        "kind": cev.data["kind"], "value": cev.data["value"],
                                        "pairs": [list(e.pair) for e in verdict.events]})
            ps = nxt
        post_ev = {e.pair: e for e in ps.events()} if ps is not pre else pre_ev
        for pair in post_ev:
            post_seen[pair].append(t)

        # planning items: a projected conflict is resolved when it disappears
        for pair, e in pre_ev.items():
            if pair not in open_items:
                open_items[pair] = {"pair": list(pair), "detected": t, "cpa_time": e.cpa_time}
            else:
                open_items[pair]["cpa_time"] = e.cpa_time
        for pair in list(open_items):
            if pair in pre_ev and pair not in post_ev:
                it = open_items.pop(pair)
                it.update(resolved=t, lead=max(0.0, it["cpa_time"] - t) if pair not in los_pairs else 0.0)
                items.append(it)
        _close_missing(open_items, items, set(pre_ev), t, los_pairs)
    for pair, it in open_items.items():
        it.update(resolved=None, lead=0.0)
        items.append(it)
    m.resolutions = sum(it["resolved"] is not None for it in items)
    m.resolution_leads = [float(it["lead"]) for it in sorted(items, key=lambda i: (i["detected"], i["pair"]))]

    for pair, ts in sorted(post_seen.items()):
        start = prev = ts[0]
        for t in ts[1:] + [None]:
            if t is not None and t - prev <= interval + 1e-9:
                prev = t
                continue
            if prev - start + interval > cfg.ensured_grace_s:
                m.ensured_episodes.append({"pair": list(pair), "start": start, "end": prev})
            if t is not None:
                start = prev = t
    m.ensured_violations = len(m.ensured_episodes)
    m.unsafe_clearances = len(m.unsafe_events)

    # --- coordination and controlling
    first_inside: dict[str, tuple] = {}
    path: dict[str, float] = defaultdict(float)
    last_pos: dict[str, tuple] = {}
    below = 0
    for idx, ev in enumerate(log.events):
        if ev.kind == "snapshot" and ev.data.get("entered"):
            p = (ev.data["x"], ev.data["y"])
            if ev.callsign in last_pos:
                q = last_pos[ev.callsign]
                path[ev.callsign] += math.hypot(p[0] - q[0], p[1] - q[1])
            first_inside.setdefault(ev.callsign, p)
            last_pos[ev.callsign] = p
            x = exits.get(ev.callsign)
            if x is not None and ev.data["fl"] < x.exit_fl - 0.5:
                below += 1
            if not scenario.sector.floor <= ev.data["fl"] <= scenario.sector.ceiling:
                m.containment_events.append({"event_id": f"e{idx}", "callsign": ev.callsign,
                                             "time": ev.time, "reason": "outside vertical limits"})
    m.minutes_below_exit_level = below * dt / 60.0
    ratios = []
    exited = set()
    for idx, ev in enumerate(log.events):
        if ev.kind != "exited":
            continue
        exited.add(ev.callsign)
        m.transfers += 1
        x = exits[ev.callsign]
        wp = scenario.waypoints[x.exit_waypoint].pos
        lat = math.hypot(ev.data["x"] - wp[0], ev.data["y"] - wp[1])
        lvl = abs(ev.data["fl"] - x.exit_fl)
        m.exits.append({"event_id": f"e{idx}", "callsign": ev.callsign, "time": ev.time,
                        "lateral_nm": lat, "fl": ev.data["fl"], "exit_fl": x.exit_fl,
                        "level_error": lvl,
                        "achieved": lat <= cfg.exit_lateral_nm and lvl < 1e-6})
        if lat > cfg.containment_nm:
            m.containment_events.append({"event_id": f"e{idx}", "callsign": ev.callsign,
                                         "time": ev.time, "reason": f"left sector {lat:.1f} NM from exit fix"})
        start = first_inside.get(ev.callsign)
        if start is not None:
            flown = path[ev.callsign] + math.hypot(ev.data["x"] - last_pos[ev.callsign][0],
                                                   ev.data["y"] - last_pos[ev.callsign][1])
            # reference: straight to the exit fix, then on to where it actually left
            direct = math.hypot(wp[0] - start[0], wp[1] - start[1]) + lat
            if direct > 1.0:
                ratios.append(flown / direct)
    m.pending = sorted(set(first_inside) - exited)
    m.containment_violations = len({e["callsign"] for e in m.containment_events})
    m.mean_path_ratio = float(sum(ratios) / len(ratios)) if ratios else 1.0
    return m


def _close_missing(open_items, items, present, t, los_pairs=frozenset()):
    """Conflicts that vanished without a clearance this epoch (e.g. an aircraft left)."""
    for pair in list(open_items):
        if pair not in present:
            it = open_items.pop(pair)
            lead = 0.0 if pair in los_pairs else max(0.0, it["cpa_time"] - t)
            it.update(resolved=t, lead=lead)
            items.append(it)
