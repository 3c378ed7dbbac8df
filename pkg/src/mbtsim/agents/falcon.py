"""Optimisation-based controller: CMA-ES over joint waypoint/level plans.

Each aircraft's plan is K intermediate fixes (lateral offsets from the
straight line to its exit fix) and one level per segment. The last fix is
always the exit fix and the last segment level is always the exit level, so
exit coordination holds by construction rather than by penalty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import cmaes, kernels
from .._kernels_py import bearing, wind_corrected_heading
from ..airspace import Position2D, Sector, angular_difference, inside_laterally, \
    inside_laterally_many
from ..safety import ENSURED_VIOLATION, SeparationMinima, scan
from ..simcore import (
    CAPTURE_RADIUS_NM,
    AgentDecision,
    AircraftState,
    Clearance,
    ConfigurationError,
    Observation,
)


@dataclass(frozen=True)
class FalconConfig:
    n_fixes: int = 2              # K intermediate fixes per aircraft
    budget: int = 600             # objective evaluations per replan
    sigma0: float = 0.4
    replan_epochs: int = 6
    w_sep: float = 1e4
    w_shortfall: float = 1e2
    w_path: float = 10.0
    w_level: float = 1.0          # per minute off the exit level
    w_exit: float = 1e3           # exit crossed off the exit level
    w_outside: float = 1e3        # intermediate fix outside the sector
    offset_scale_nm: float = 15.0
    level_scale_fl: float = 30.0
    plan_margin_nm: float = 1.0
    plan_dt: float = 10.0
    horizon: float = 1200.0
    heading_tolerance: float = 2.0
    fix_switch_nm: float = 2.0
    keep_margin: float = 1.0      # new plan must beat the current one by this much


@dataclass(frozen=True)
class FlightPlan:
    callsign: str
    origin: Position2D
    fixes: tuple[Position2D, ...]   # intermediate fixes then the exit fix
    levels: tuple[int, ...]         # one per segment; last is the exit level
    exit_waypoint: str
    exit_fl: int

    def remaining(self, idx: int, pos: Position2D) -> "FlightPlan":
        return FlightPlan(self.callsign, pos, self.fixes[idx:], self.levels[idx:],
                          self.exit_waypoint, self.exit_fl)

    def path_length(self) -> float:
        pts = (self.origin,) + self.fixes
        return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


@dataclass
class _Ctx:
    state: AircraftState
    exit_pos: Position2D
    exit_waypoint: str
    exit_fl: int


@dataclass
class FlightPlanGenome:
    """Flattened real-vector encoding of a joint plan; zeros = direct at exit level."""
    contexts: list
    n_fixes: int
    floor: int
    ceiling: int
    offset_scale_nm: float = 15.0
    level_scale_fl: float = 30.0

    @property
    def per_aircraft(self) -> int:
        return 2 * self.n_fixes

    @property
    def dim(self) -> int:
        return self.per_aircraft * len(self.contexts)

    def decode_one(self, ctx: _Ctx, g: np.ndarray) -> FlightPlan:
        K = self.n_fixes
        px, py = ctx.state.pos
        ex, ey = ctx.exit_pos
        dx, dy = ex - px, ey - py
        d = math.hypot(dx, dy)
        if d > 1e-9:
            nx, ny = dy / d, -dx / d  # right-hand normal of the direct track
        else:
            nx, ny = 0.0, 0.0
        scale = self.offset_scale_nm * min(1.0, d / 30.0)
        fixes = []
        for k in range(K):
            f = (k + 1) / (K + 1)
            off = float(g[k]) * scale
            fixes.append(Position2D(px + f * dx + off * nx, py + f * dy + off * ny))
        fixes.append(Position2D(ex, ey))
        levels = []
        for k in range(K):
            lv = int(round((ctx.exit_fl + self.level_scale_fl * float(g[K + k])) / 10.0)) * 10
            levels.append(min(max(lv, self.floor), self.ceiling))
        levels.append(int(ctx.exit_fl))
        return FlightPlan(ctx.state.callsign, Position2D(px, py), tuple(fixes), tuple(levels),
                          ctx.exit_waypoint, int(ctx.exit_fl))

    def decode(self, x) -> list[FlightPlan]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"genome has dimension {self.dim}, got {x.shape}")
        m = self.per_aircraft
        return [self.decode_one(c, x[i * m:(i + 1) * m]) for i, c in enumerate(self.contexts)]


class PlanEvaluator:
    """Objective over decoded joint plans (lower is better)."""

    def __init__(self, contexts: list[_Ctx], obs: Observation, cfg: FalconConfig):
        self.contexts = {c.state.callsign: c for c in contexts}
        self.order = [c.state.callsign for c in contexts]
        self.wind = obs.wind
        self.sector: Sector = obs.sector
        self.cfg = cfg
        base = obs.minima or SeparationMinima()
        self.minima = SeparationMinima(base.lateral_min + cfg.plan_margin_nm, base.vertical_min)
        self.nsteps = int(math.ceil(cfg.horizon / cfg.plan_dt - 1e-9))
        self.times = obs.time + cfg.plan_dt * np.arange(self.nsteps + 1)

    def trajectory(self, plan: FlightPlan):
        st = self.contexts[plan.callsign].state
        rx = [p[0] for p in plan.fixes]
        ry = [p[1] for p in plan.fixes]
        rfl = [float(v) for v in plan.levels[1:]] + [math.nan]
        X, Y, F, _, _, _ = kernels.propagate(
            float(st.pos[0]), float(st.pos[1]), float(st.fl), float(st.heading), float(st.tas),
            float(plan.levels[0]), float(st.perf.climb_rate), float(st.perf.descent_rate),
            float(st.perf.turn_rate), False, 0.0, rx, ry, rfl, 0,
            float(self.wind[0]), float(self.wind[1]), float(self.cfg.plan_dt), self.nsteps,
            CAPTURE_RADIUS_NM)
        inside = inside_laterally_many(self.sector, X, Y)
        seen = np.maximum.accumulate(inside)
        gone = seen & ~inside
        valid = np.ones(X.shape, dtype=bool)
        exit_k = None
        if gone.any():
            exit_k = int(np.argmax(gone))
            valid[exit_k:] = False
        return X, Y, F, valid, exit_k

    def __call__(self, plans: list[FlightPlan]) -> float:
        cfg = self.cfg
        rows = [self.trajectory(p) for p in plans]
        cost = 0.0
        for p, (X, Y, F, valid, exit_k) in zip(plans, rows):
            st = self.contexts[p.callsign].state
            direct = math.hypot(p.fixes[-1][0] - st.pos[0], p.fixes[-1][1] - st.pos[1])
            if direct > 1.0:
                cost += cfg.w_path * (p.path_length() / direct - 1.0)
            off = (np.abs(F - p.exit_fl) >= 0.5) & valid
            cost += cfg.w_level * float(off.sum()) * cfg.plan_dt / 60.0
            if exit_k is not None and abs(F[exit_k - 1] - p.exit_fl) >= 0.5:
                cost += cfg.w_exit
            for fx in p.fixes[:-1]:
                if not inside_laterally(self.sector, fx):
                    cost += cfg.w_outside
        if len(rows) >= 2:
            X = np.vstack([r[0] for r in rows])
            Y = np.vstack([r[1] for r in rows])
            F = np.vstack([r[2] for r in rows])
            V = np.vstack([r[3] for r in rows])
            lat, vert = self.minima.lateral_min, self.minima.vertical_min
            for ev in scan([p.callsign for p in plans], self.times, X, Y, F, V, self.minima,
                           ENSURED_VIOLATION):
                short = max(0.0, lat - ev.min_lateral) / lat + max(0.0, vert - ev.min_vertical) / vert
                cost += cfg.w_sep + cfg.w_shortfall * short
        return cost


def _contexts(obs: Observation) -> list[_Ctx]:
    out = []
    for a in sorted(obs.aircraft, key=lambda a: a.callsign):
        wp = obs.waypoints[a.exit.exit_waypoint]
        out.append(_Ctx(a.state, wp.pos, a.exit.exit_waypoint, int(a.exit.exit_fl)))
    return out


def plan(obs: Observation, budget: int = 600, seed: int = 0, config: FalconConfig | None = None,
         incumbent: list[FlightPlan] | None = None) -> tuple[list[FlightPlan], float]:
    """Best joint plan for the observed traffic and its objective value.

    `incumbent` (plans already being flown) is kept unless the optimiser
    finds something better by at least `keep_margin`.
    """
    cfg = config or FalconConfig()
    if not obs.aircraft:
        raise ConfigurationError("planning needs at least one aircraft")
    ctxs = _contexts(obs)
    genome = FlightPlanGenome(ctxs, cfg.n_fixes, obs.sector.floor, obs.sector.ceiling,
                              cfg.offset_scale_nm, cfg.level_scale_fl)
    params = cmaes.default_params(genome.dim)
    if budget < params.lam:
        raise ConfigurationError(f"budget {budget} below population size {params.lam}")
    evaluate = PlanEvaluator(ctxs, obs, cfg)
    x0 = np.zeros(genome.dim)
    best_plans = genome.decode(x0)
    best_f = evaluate(best_plans)
    if best_f > 10.0:  # direct plan already conflict-free and near optimal otherwise
        x, fx, _ = cmaes.minimize(lambda g: evaluate(genome.decode(g)), x0, cfg.sigma0,
                                  budget - 1, seed=seed)
        if fx < best_f:
            best_plans, best_f = genome.decode(x), fx
    if incumbent is not None:
        f_inc = evaluate(incumbent)
        if not best_f < f_inc - cfg.keep_margin:
            return incumbent, f_inc
    return best_plans, best_f


@dataclass
class _Track:
    plan: FlightPlan
    idx: int = 0


class Falcon:
    name = "falcon"

    def __init__(self, config: FalconConfig | None = None):
        self.config = config or FalconConfig()
        self.tracks: dict[str, _Track] = {}
        self.seed = 0

    def reset(self, scenario, seed: int) -> None:
        self.seed = int(seed)
        self.tracks = {}
        self.epoch = 0
        self.last_replan = None
        self.n_replans = 0
        self.last_cost = math.nan

    def _advance(self, tr: _Track, st: AircraftState) -> None:
        p = tr.plan
        while tr.idx < len(p.fixes) - 1:
            fx = p.fixes[tr.idx]
            prev = p.origin if tr.idx == 0 else p.fixes[tr.idx - 1]
            d = math.hypot(fx[0] - st.pos[0], fx[1] - st.pos[1])
            passed = (fx[0] - st.pos[0]) * (fx[0] - prev[0]) + (fx[1] - st.pos[1]) * (fx[1] - prev[1]) <= 0
            if d <= self.config.fix_switch_nm or passed:
                tr.idx += 1
            else:
                break

    def _replan(self, obs: Observation) -> None:
        incumbent = None
        if self.tracks and all(a.callsign in self.tracks for a in obs.aircraft):
            incumbent = []
            for a in sorted(obs.aircraft, key=lambda a: a.callsign):
                tr = self.tracks[a.callsign]
                incumbent.append(tr.plan.remaining(tr.idx, a.state.pos))
        elif self.tracks:
            # keep plans of known aircraft, direct plans for newcomers
            cfg = self.config
            genome = FlightPlanGenome(_contexts(obs), cfg.n_fixes, obs.sector.floor,
                                      obs.sector.ceiling, cfg.offset_scale_nm, cfg.level_scale_fl)
            incumbent = []
            for ctx, direct in zip(genome.contexts, genome.decode(np.zeros(genome.dim))):
                tr = self.tracks.get(ctx.state.callsign)
                incumbent.append(direct if tr is None else tr.plan.remaining(tr.idx, ctx.state.pos))
        seed = (self.seed * 1_000_003 + self.n_replans) % (2 ** 32)
        plans, cost = plan(obs, self.config.budget, seed, self.config, incumbent)
        self.n_replans += 1
        self.last_cost = cost
        self.tracks = {p.callsign: _Track(p) for p in plans}
        self.last_replan = self.epoch

    def decide(self, obs: Observation) -> AgentDecision:
        self.epoch += 1
        if not obs.aircraft:
            self.tracks = {}
            return AgentDecision()
        live = {a.callsign for a in obs.aircraft}
        if set(self.tracks) != live or self.last_replan is None \
                or self.epoch - self.last_replan >= self.config.replan_epochs:
            self._replan(obs)
        out, why = [], []
        for a in sorted(obs.aircraft, key=lambda a: a.callsign):
            st, tr = a.state, self.tracks[a.callsign]
            self._advance(tr, st)
            p = tr.plan
            if tr.idx == len(p.fixes) - 1:
                wp = p.exit_waypoint
                passed = st.target_heading is None and wp in st.route[:st.route_index]
                if not passed and (st.target_heading is not None or st.next_waypoint != wp):
                    out.append(Clearance.direct(st.callsign, wp))
                    why.append("plan:direct-exit")
            else:
                fx = p.fixes[tr.idx]
                trk = bearing(fx[0] - st.pos[0], fx[1] - st.pos[1])
                hdg = wind_corrected_heading(trk, st.tas, obs.wind[0], obs.wind[1])
                hdg = round(hdg, 1) % 360.0
                if st.target_heading is None or \
                        angular_difference(st.target_heading, hdg) > self.config.heading_tolerance:
                    out.append(Clearance.heading(st.callsign, hdg))
                    why.append(f"plan:fix{tr.idx + 1}")
            lv = p.levels[tr.idx]
            if st.cleared_fl != lv:
                out.append(Clearance.level(st.callsign, lv))
                why.append("plan:exit-level" if tr.idx == len(p.fixes) - 1 else f"plan:segment{tr.idx + 1}")
        return AgentDecision(tuple(out), tuple(why))
