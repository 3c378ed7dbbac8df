"""Clearance-replay verification of simulated trajectories against reference traces."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .safety import SeparationMinima
from .simcore import (
    CLEARANCE_KINDS,
    DEFAULT_DT,
    Clearance,
    ClearanceRejected,
    EventLog,
    Scenario,
    Vector2D,
    apply_clearance,
    spawn,
    step,
)

TRACE_HEADER = ("time_s", "callsign", "x_nm", "y_nm", "fl")
CLEARANCE_LOG_VERSION = 1
AVERAGING_NOTE = ("per-aircraft errors are averaged over time within each simulation, "
                  "then over simulations; Mean/SD are taken across aircraft")


class TraceFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        where = f"{path}: " if path else ""
        where += f"row {row}: " if row is not None else ""
        super().__init__(where + message)


class ExcludedAircraft(Exception):
    """Aircraft cannot be replayed with in-scope clearance kinds."""


@dataclass(frozen=True)
class ReferenceTrace:
    callsign: str
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    fl: np.ndarray

    def __post_init__(self):
        if len(self.times) < 2:
            raise TraceFormatError(f"{self.callsign}: trace needs at least 2 samples")
        if np.any(np.diff(self.times) <= 0):
            raise TraceFormatError(f"{self.callsign}: samples not strictly time-sorted")


@dataclass(frozen=True)
class AircraftError:
    callsign: str
    mean_horizontal: float
    mean_vertical: float
    max_horizontal: float
    max_vertical: float
    in_threshold: bool
    n_samples: int = 0


@dataclass(frozen=True)
class FidelitySummary:
    assessment: str
    n_simulations: int
    pct_in_threshold: float
    horizontal_mean: float
    horizontal_sd: float
    vertical_mean: float
    vertical_sd: float
    n_aircraft: int = 0
    excluded: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "Assessment": self.assessment,
            "Number of simulations": self.n_simulations,
            "Aircraft in threshold (%)": self.pct_in_threshold,
            "Horizontal error (NM)": {"Mean": self.horizontal_mean, "SD": self.horizontal_sd},
            "Vertical error (FL)": {"Mean": self.vertical_mean, "SD": self.vertical_sd},
            "metadata": {"aircraft": self.n_aircraft, "excluded": list(self.excluded),
                         "averaging": AVERAGING_NOTE},
        }


def thresholds(minima: SeparationMinima | None = None) -> tuple[float, float]:
    """Acceptance thresholds: half the separation minima."""
    m = minima or SeparationMinima()
    return m.lateral_min / 2.0, m.vertical_min / 2.0


# --- replay ---------------------------------------------------------------------

def replay(trace: ReferenceTrace, clearances: Sequence[Clearance], scenario: Scenario,
           wind: Vector2D | None = None, dt: float = DEFAULT_DT) -> ReferenceTrace:
    """Re-simulate one aircraft under its logged clearances, sampled at the trace times.

    Clearances take effect at their logged time plus the scenario's pilot
    delay, after that tick's sample, as in a live run.
    """
    mine = [c for c in clearances if c.callsign == trace.callsign]
    bad = sorted({c.kind for c in mine if c.kind not in CLEARANCE_KINDS})
    if bad:
        raise ExcludedAircraft(f"{trace.callsign}: unsupported clearance kinds {bad}")
    try:
        entry = scenario.entry(trace.callsign)
    except KeyError:
        raise ExcludedAircraft(f"{trace.callsign}: not in scenario (background traffic)") from None
    wind = Vector2D(*(scenario.wind if wind is None else wind))
    k0 = int(math.ceil(entry.spawn_time / dt - 1e-9))
    k_end = int(math.floor(float(trace.times[-1]) / dt + 1e-9)) + 1
    if k_end <= k0 or float(trace.times[-1]) < k0 * dt:
        raise TraceFormatError(f"{trace.callsign}: trace ends before the aircraft spawns")
    due: dict[int, list[Clearance]] = {}
    for c in sorted(mine, key=lambda c: c.issue_time):
        k = int(math.ceil((c.issue_time + scenario.pilot_delay) / dt - 1e-9))
        due.setdefault(k, []).append(c)
    st = spawn(entry, scenario)
    n = k_end - k0 + 1
    T = np.empty(n)
    X = np.empty(n)
    Y = np.empty(n)
    F = np.empty(n)
    for i, k in enumerate(range(k0, k_end + 1)):
        T[i], X[i], Y[i], F[i] = k * dt, st.pos[0], st.pos[1], st.fl
        for c in due.get(k, ()):
            try:
                st = apply_clearance(st, c, scenario.waypoints)
            except ClearanceRejected:
                pass
        st = step(st, None, wind, dt)
    lo, hi = T[0], T[-1]
    sel = (trace.times >= lo - 1e-9) & (trace.times <= hi + 1e-9)
    if not sel.any():
        raise TraceFormatError(f"{trace.callsign}: trace and replay time ranges are disjoint")
    t = trace.times[sel]
    return ReferenceTrace(trace.callsign, t, np.interp(t, T, X), np.interp(t, T, Y), np.interp(t, T, F))


def compute_errors(trace: ReferenceTrace, simulated: ReferenceTrace,
                   minima: SeparationMinima | None = None,
                   limits: tuple[float, float] | None = None) -> AircraftError:
    common, ia, ib = np.intersect1d(trace.times, simulated.times, return_indices=True)
    if len(common) == 0:
        raise ValueError(f"{trace.callsign}: trace and simulation share no sample times")
    h = np.hypot(trace.x[ia] - simulated.x[ib], trace.y[ia] - simulated.y[ib])
    v = np.abs(trace.fl[ia] - simulated.fl[ib])
    h_thr, v_thr = limits or thresholds(minima)
    hmax, vmax = float(h.max()), float(v.max())
    return AircraftError(trace.callsign, float(h.mean()), float(v.mean()), hmax, vmax,
                         bool(hmax <= h_thr and vmax <= v_thr), int(len(common)))


def replay_all(traces: dict[str, ReferenceTrace], clearances: Sequence[Clearance], scenario: Scenario,
               wind: Vector2D | None = None, dt: float = DEFAULT_DT,
               minima: SeparationMinima | None = None,
               limits: tuple[float, float] | None = None) -> tuple[list[AircraftError], list[str]]:
    """Errors for every replayable aircraft, plus the callsigns excluded."""
    errors, excluded = [], []
    for cs in sorted(traces):
        try:
            sim = replay(traces[cs], clearances, scenario, wind, dt)
        except ExcludedAircraft:
            excluded.append(cs)
            continue
        errors.append(compute_errors(traces[cs], sim, minima, limits))
    return errors, excluded


def _sd(v: list[float]) -> float:
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def summarize(errors, assessment: str = "1", excluded: Iterable[str] = ()) -> FidelitySummary:
    """Table-style summary over one or more simulations.

    `errors` is a list of AircraftError (one simulation) or a list of such
    lists (one per simulation).
    """
    sims = [list(errors)] if errors and isinstance(errors[0], AircraftError) else [list(s) for s in errors]
    flat = [e for s in sims for e in s]
    if not flat:
        raise ValueError("summary needs at least one replayed aircraft")
    per_h: dict[str, list[float]] = {}
    per_v: dict[str, list[float]] = {}
    for e in flat:
        per_h.setdefault(e.callsign, []).append(e.mean_horizontal)
        per_v.setdefault(e.callsign, []).append(e.mean_vertical)
    keys = sorted(per_h)
    hs = [float(np.mean(per_h[k])) for k in keys]
    vs = [float(np.mean(per_v[k])) for k in keys]
    pct = 100.0 * sum(e.in_threshold for e in flat) / len(flat)
    return FidelitySummary(str(assessment), len(sims), round(pct, 1), float(np.mean(hs)), _sd(hs),
                           float(np.mean(vs)), _sd(vs), len(keys), tuple(sorted(set(excluded))))


@dataclass(frozen=True)
class ReviewItem:
    callsign: str
    error: AircraftError
    reference: ReferenceTrace | None = None
    simulated: ReferenceTrace | None = None


def flag_manual_review(errors: Sequence[AircraftError], traces: dict | None = None,
                       simulated: dict | None = None) -> list[ReviewItem]:
    """Out-of-threshold aircraft, with paired trajectories for plotting when supplied."""
    out = []
    for e in sorted(errors, key=lambda e: e.callsign):
        if not e.in_threshold:
            out.append(ReviewItem(e.callsign, e, (traces or {}).get(e.callsign),
                                  (simulated or {}).get(e.callsign)))
    return out


# --- file formats -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_trace_csv(traces: Iterable[ReferenceTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    rows = []
    for tr in traces:
        for t, x, y, f in zip(tr.times, tr.x, tr.y, tr.fl):
            if float(t) != int(t):
                raise TraceFormatError(f"{tr.callsign}: trace times must be whole seconds")
            rows.append((int(t), tr.callsign, _fmt(x), _fmt(y), _fmt(f)))
    rows.sort(key=lambda r: (r[0], r[1]))
    w.writerows(rows)
    return buf.getvalue()


def loads_trace_csv(text: str, path: str | None = None) -> dict[str, ReferenceTrace]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("empty trace file", 1, path) from None
    if tuple(h.strip() for h in header) != TRACE_HEADER:
        raise TraceFormatError(f"header must be {','.join(TRACE_HEADER)}", 1, path)
    cols: dict[str, list] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise TraceFormatError(f"expected 5 fields, got {len(row)}", row_no, path)
        t, cs, x, y, f = (c.strip() for c in row)
        try:
            ti = int(t)
            vals = (float(x), float(y), float(f))
        except ValueError:
            raise TraceFormatError("non-numeric time or coordinate", row_no, path) from None
        if not cs or not all(math.isfinite(v) for v in vals):
            raise TraceFormatError("empty callsign or non-finite value", row_no, path)
        cols.setdefault(cs, []).append((ti, *vals, row_no))
    out = {}
    for cs, rows in cols.items():
        rows.sort(key=lambda r: r[0])
        for a, b in zip(rows, rows[1:]):
            if a[0] == b[0]:
                raise TraceFormatError(f"duplicate time {b[0]} for {cs}", b[4], path)
        arr = np.array([r[:4] for r in rows], dtype=float)
        if len(arr) < 2:
            raise TraceFormatError(f"{cs}: trace needs at least 2 samples", rows[0][4], path)
        out[cs] = ReferenceTrace(cs, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
    return out


def load_trace_csv(path: str | os.PathLike) -> dict[str, ReferenceTrace]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace: {exc.strerror}", None, str(path)) from None
    return loads_trace_csv(text, str(path))


def dumps_clearance_log(clearances: Iterable[Clearance]) -> str:
    rows = [{"time": c.issue_time, "callsign": c.callsign, "kind": c.kind, "value": c.value}
            for c in clearances]
    return json.dumps({"version": CLEARANCE_LOG_VERSION, "clearances": rows}, indent=2,
                      sort_keys=True) + "\n"


def loads_clearance_log(text: str, path: str | None = None) -> list[Clearance]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON at line {exc.lineno}: {exc.msg}", None, path) from None
    rows = doc.get("clearances") if isinstance(doc, dict) else None
    if not isinstance(rows, list):
        raise TraceFormatError("expected an object with a 'clearances' list", None, path)
    out = []
    for i, r in enumerate(rows):
        try:
            out.append(Clearance(str(r["callsign"]), str(r["kind"]), r["value"], float(r["time"])))
        except (KeyError, TypeError, ValueError):
            raise TraceFormatError(f"malformed clearance #{i}", None, path) from None
    return out


def load_clearance_log(path: str | os.PathLike) -> list[Clearance]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read clearance log: {exc.strerror}", None, str(path)) from None
    return loads_clearance_log(text, str(path))


def traces_from_log(log: EventLog) -> tuple[dict[str, ReferenceTrace], list[Clearance]]:
    """Reference traces and accepted clearances from a simulator run log."""
    cols: dict[str, list] = {}
    clrs = []
    for ev in log.events:
        if ev.kind == "snapshot":
            cols.setdefault(ev.callsign, []).append((ev.time, ev.data["x"], ev.data["y"], ev.data["fl"]))
        elif ev.kind == "clearance":
            clrs.append(Clearance(ev.callsign, ev.data["kind"], ev.data["value"], ev.time))
    traces = {}
    for cs, rows in cols.items():
        if len(rows) >= 2:
            a = np.array(rows, dtype=float)
            traces[cs] = ReferenceTrace(cs, a[:, 0], a[:, 1], a[:, 2], a[:, 3])
    return traces, clrs
