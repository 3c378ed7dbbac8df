"""Rules-based controller: safety rules first, then efficiency rules."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..safety import CATCH_UP, MAX_HORIZON_S, ProjectionSet, SeparationEvent, SeparationMinima
from ..simcore import (
    DIRECT,
    HEADING,
    LEVEL,
    AgentDecision,
    AircraftState,
    Clearance,
    ClearanceRejected,
    Observation,
    apply_clearance,
)


@dataclass(frozen=True)
class HawkConfig:
    turn_angles: tuple[float, ...] = (30.0, 45.0, 60.0)
    level_steps: tuple[int, ...] = (10, 20, 30)
    horizon: float = MAX_HORIZON_S
    projection_dt: float = 5.0


class Hawk:
    name = "hawk"

    def __init__(self, config: HawkConfig | None = None):
        self.config = config or HawkConfig()

    def reset(self, scenario, seed: int) -> None:
        self.scenario = scenario
        self.seed = seed

    # -- helpers ---------------------------------------------------------------

    def _levels_for(self, x: AircraftState, other: AircraftState, exit_fl: int, sector) -> list[int]:
        out = [exit_fl]
        climbing = x.cleared_fl > x.fl or (x.cleared_fl == round(x.fl) and exit_fl > x.fl)
        cap = [int(other.cleared_fl) - 10, int(other.cleared_fl) + 10]
        out += cap if climbing else cap[::-1]
        base = int(round(x.fl / 10.0)) * 10
        steps = []
        for s in self.config.level_steps:
            steps += [base + s, base - s]
        steps.sort(key=lambda v: (abs(v - exit_fl), v))
        out += steps
        seen, levels = set(), []
        for v in out:
            if v in seen or v == x.cleared_fl or v % 10 or not sector.floor <= v <= sector.ceiling:
                continue
            seen.add(v)
            levels.append(v)
        return levels

    def _headings(self, x: AircraftState, other: AircraftState) -> list[float]:
        # turn away from the other aircraft first
        dx, dy = other.pos[0] - x.pos[0], other.pos[1] - x.pos[1]
        hr = math.radians(x.heading)
        right_of_nose = dx * math.cos(hr) - dy * math.sin(hr) > 0
        sides = (-1, 1) if right_of_nose else (1, -1)
        return [round((x.heading + s * a) % 360.0, 1) % 360.0
                for a in self.config.turn_angles for s in sides]

    def _candidates(self, ev: SeparationEvent, ps: ProjectionSet, exits, sector, issued):
        a, b = (ps.states[c] for c in ev.pair)
        vertical, lateral = [], []
        order = sorted((a, b), key=lambda s: (exits[s.callsign] == s.cleared_fl, s.callsign))
        for x, y in (order, order[::-1]):
            for lv in self._levels_for(x, y, exits[x.callsign], sector):
                vertical.append(((Clearance.level(x.callsign, lv), "vertical"),))
        if ev.geometry == CATCH_UP:
            # the trailing aircraft is the one with the other ahead of its nose
            def ahead(p, q):
                hr = math.radians(p.heading)
                return (q.pos[0] - p.pos[0]) * math.sin(hr) + (q.pos[1] - p.pos[1]) * math.cos(hr)
            trail, lead = (a, b) if ahead(a, b) > 0 else (b, a)
            for h in self._headings(trail, lead):
                lateral.append(((Clearance.heading(trail.callsign, h), "vector-trailing"),))
            for h in self._headings(lead, trail):
                lateral.append(((Clearance.heading(lead.callsign, h), "vector-leading"),))
            cands = lateral + vertical
        else:
            for x, y in ((a, b), (b, a)):
                for h in self._headings(x, y):
                    lateral.append(((Clearance.heading(x.callsign, h), "vector"),))
            for ang in self.config.turn_angles:
                for sa in (1, -1):
                    for sb in (1, -1):
                        lateral.append((
                            (Clearance.heading(a.callsign, round((a.heading + sa * ang) % 360.0, 1) % 360.0),
                             "complementary"),
                            (Clearance.heading(b.callsign, round((b.heading + sb * ang) % 360.0, 1) % 360.0),
                             "complementary")))
            cands = vertical + lateral
        return [c for c in cands if all((cl.callsign, cl.kind) not in issued for cl, _ in c)]

    def _try(self, ps: ProjectionSet, steps, waypoints):
        """Apply clearances one at a time; None if any step is unsafe or rejected."""
        cur = ps
        for clr, _ in steps:
            try:
                st = apply_clearance(cur.states[clr.callsign], clr, waypoints)
            except ClearanceRejected:
                return None
            nxt = cur.with_states([st])
            old = {e.pair for e in cur.events(only=clr.callsign)}
            if any(e.pair not in old for e in nxt.events(only=clr.callsign)):
                return None
            cur = nxt
        return cur

    # -- decision -----------------------------------------------------------------

    def decide(self, obs: Observation) -> AgentDecision:
        if not obs.aircraft:
            return AgentDecision()
        minima = obs.minima or SeparationMinima()
        exits = {a.callsign: a.exit.exit_fl for a in obs.aircraft}
        exit_wp = {a.callsign: a.exit.exit_waypoint for a in obs.aircraft}
        ps = ProjectionSet(obs.states(), obs.wind, minima, obs.sector, self.config.horizon,
                           self.config.projection_dt, obs.time)
        clearances: list[Clearance] = []
        why: list[str] = []
        issued: set[tuple[str, str]] = set()

        def commit(steps, tag):
            for clr, kind in steps:
                clearances.append(clr)
                why.append(f"{tag}:{kind}")
                issued.add((clr.callsign, clr.kind))

        # main rules: resolve projected violations, most urgent first
        handled = set()
        for ev in ps.events():
            if ev.pair in handled:
                continue
            live = {e.pair: e for e in ps.events()}
            if ev.pair not in live:
                continue
            ev = live[ev.pair]
            handled.add(ev.pair)
            best, best_key = None, None
            for steps in self._candidates(ev, ps, exits, obs.sector, issued):
                after = self._try(ps, steps, obs.waypoints)
                if after is None:
                    continue
                remaining = [e for e in after.events(only=steps[0][0].callsign) if e.pair == ev.pair]
                if not remaining:
                    best, best_key = (steps, after), None
                    break
                key = (remaining[0].start_time, remaining[0].min_lateral)
                if key > (ev.start_time, ev.min_lateral) and (best_key is None or key > best_key):
                    best, best_key = (steps, after), key
            if best is not None:
                steps, ps = best
                tag = f"main:{ev.geometry}:{'/'.join(ev.pair)}" + (":partial" if best_key else "")
                commit(steps, tag)

        # iterative rules: aircraft not implicated in any remaining violation
        implicated = {c for e in ps.events() for c in e.pair}
        for cs in sorted(ps.states):
            if cs in implicated:
                continue
            st = ps.states[cs]
            if st.cleared_fl != exits[cs] and (cs, LEVEL) not in issued:
                target = exits[cs]
                for lv in (target, st.cleared_fl + (10 if target > st.cleared_fl else -10)):
                    after = self._try(ps, ((Clearance.level(cs, lv), "exit-level"),), obs.waypoints)
                    if after is not None:
                        ps = after
                        commit(((Clearance.level(cs, lv), "exit-level"),), "iter")
                        break
            st = ps.states[cs]
            wp = exit_wp[cs]
            passed = st.target_heading is None and wp in st.route[:st.route_index]
            if not passed and (st.target_heading is not None or st.next_waypoint != wp) and (cs, DIRECT) not in issued \
                    and (cs, HEADING) not in issued:
                after = self._try(ps, ((Clearance.direct(cs, wp), "direct-exit"),), obs.waypoints)
                if after is not None:
                    ps = after
                    commit(((Clearance.direct(cs, wp), "direct-exit"),), "iter")
        return AgentDecision(tuple(clearances), tuple(why))
