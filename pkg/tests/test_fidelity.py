from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbtsim.agents import Hawk
from mbtsim.fidelity import (
    AircraftError,
    ExcludedAircraft,
    ReferenceTrace,
    TraceFormatError,
    compute_errors,
    dumps_clearance_log,
    dumps_trace_csv,
    flag_manual_review,
    loads_clearance_log,
    loads_trace_csv,
    replay,
    replay_all,
    summarize,
    thresholds,
    traces_from_log,
)
from mbtsim.harness.generator import MIXED, PatternSpec, generate_scenario
from mbtsim.safety import SeparationMinima
from mbtsim.simcore import AgentDecision, Clearance, run_scenario

from helpers import entry, reciprocal_pair, scenario


class Scripted:
    name = "scripted"

    def __init__(self, *clearances):
        self.todo = list(clearances)

    def reset(self, scenario, seed):
        pass

    def decide(self, obs):
        now = [c for c in self.todo if c.issue_time <= obs.time]
        self.todo = [c for c in self.todo if c.issue_time > obs.time]
        return AgentDecision(tuple(Clearance(c.callsign, c.kind, c.value, obs.time) for c in now))


def _trace(cs, t, x, y=None, fl=None):
    t = np.asarray(t, dtype=float)
    z = np.zeros_like(t)
    return ReferenceTrace(cs, t, np.asarray(x, float) + z, z if y is None else np.asarray(y, float) + z,
                          330 + z if fl is None else np.asarray(fl, float) + z)


@pytest.mark.parametrize("pilot_delay", [0.0, 10.0])
def test_self_replay_is_exact(pilot_delay):
    sc = generate_scenario(PatternSpec(MIXED, 5, 1.0, 3))
    sc = replace(sc, pilot_delay=pilot_delay)
    log = run_scenario(sc, Hawk())
    traces, clrs = traces_from_log(log)
    assert clrs, "fixture should exercise clearances"
    errors, excluded = replay_all(traces, clrs, sc)
    assert excluded == []
    for e in errors:
        assert (e.mean_horizontal, e.mean_vertical, e.max_horizontal, e.max_vertical) == (0, 0, 0, 0)
        assert e.in_threshold
    s = summarize(errors)
    assert s.pct_in_threshold == 100.0
    assert (s.horizontal_mean, s.horizontal_sd, s.vertical_mean, s.vertical_sd) == (0, 0, 0, 0)


def test_wind_perturbation_matches_drift_oracle():
    # heading mode from t=0: a straight segment, so drift is exactly the wind difference times time
    sc = scenario(entry("AAA1", "WEST", "EAST", 330), duration=600.0)
    log = run_scenario(sc, Scripted(Clearance.heading("AAA1", 90.0)))
    traces, clrs = traces_from_log(log)
    tr = traces["AAA1"]
    sim = replay(tr, clrs, sc, wind=(0.0, 20.0))
    h = np.hypot(tr.x - sim.x, tr.y - sim.y)
    t = tr.times - tr.times[0]
    oracle = 20.0 * t / 3600.0
    later = t > 0
    assert h[later] == pytest.approx(oracle[later], rel=0.05)
    assert np.all(np.diff(h) > 0)


@pytest.mark.parametrize("dx,dfl,ok", [(2.5, 0.0, True), (np.nextafter(2.5, 3), 0.0, False),
                                       (0.0, 5.0, True), (0.0, np.nextafter(5.0, 6), False),
                                       (3.0, 0.0, False), (0.0, 4.0, True), (2.5, 5.0, True)])
def test_threshold_flips_exactly(dx, dfl, ok):
    t = [0, 5, 10]
    # levels from zero so the tiny offset survives floating-point addition
    e = compute_errors(_trace("A", t, 0.0, fl=0.0), _trace("A", t, dx, fl=dfl))
    assert e.in_threshold is ok
    assert e.mean_horizontal == pytest.approx(dx)
    assert e.max_vertical == pytest.approx(dfl)


def test_threshold_follows_minima():
    assert thresholds() == (2.5, 5.0)
    m = SeparationMinima(6.0, 20.0)
    assert thresholds(m) == (3.0, 10.0)
    t = [0, 5]
    assert compute_errors(_trace("A", t, 0.0), _trace("A", t, 2.9, fl=339), m).in_threshold


def test_compute_errors_needs_overlap():
    with pytest.raises(ValueError):
        compute_errors(_trace("A", [0, 5], 0.0), _trace("A", [10, 15], 0.0))


def test_trace_invariants():
    with pytest.raises(TraceFormatError):
        _trace("A", [0], 0.0)
    with pytest.raises(TraceFormatError):
        _trace("A", [5, 0], 0.0)


def test_unsupported_and_unknown_aircraft_are_excluded():
    sc = reciprocal_pair(duration=100.0)
    traces, _ = traces_from_log(run_scenario(sc))
    with pytest.raises(ExcludedAircraft):
        replay(traces["AAA1"], [Clearance("AAA1", "speed", 250, 0.0)], sc)
    traces["ZZZ9"] = _trace("ZZZ9", [0, 5], 0.0)
    errors, excluded = replay_all(traces, [Clearance("BBB2", "speed", 250, 0.0)], sc)
    assert excluded == ["BBB2", "ZZZ9"]
    assert [e.callsign for e in errors] == ["AAA1"]
    s = summarize(errors, excluded=excluded)
    assert s.n_aircraft == 1 and s.pct_in_threshold == 100.0 and s.excluded == ("BBB2", "ZZZ9")


def _err(cs, h=0.0, ok=True):
    return AircraftError(cs, h, 0.0, h, 0.0, ok)


def test_summary_arithmetic_and_keys():
    errs = [_err(f"A{i}") for i in range(11)] + [_err("B", 3.0, False)]
    s = summarize(errs, assessment="3")
    assert s.pct_in_threshold == 91.7
    assert summarize([_err("A", 1.0)]).horizontal_sd == 0.0
    d = s.to_dict()
    assert list(d)[:5] == ["Assessment", "Number of simulations", "Aircraft in threshold (%)",
                           "Horizontal error (NM)", "Vertical error (FL)"]
    assert d["Horizontal error (NM)"]["Mean"] == pytest.approx(3.0 / 12)
    with pytest.raises(ValueError):
        summarize([])


def test_summary_over_simulations_averages_per_aircraft_first():
    s = summarize([[_err("A", 1.0), _err("B", 3.0)], [_err("A", 3.0)]])
    assert s.n_simulations == 2 and s.n_aircraft == 2
    assert s.horizontal_mean == pytest.approx(2.5)  # A: 2.0, B: 3.0
    assert s.horizontal_sd == pytest.approx(np.std([2.0, 3.0], ddof=1))


@given(st.lists(st.tuples(st.floats(0, 5), st.booleans()), min_size=1, max_size=12), st.randoms())
def test_summary_ignores_order(rows, rnd):
    errs = [_err(f"C{i}", h, ok) for i, (h, ok) in enumerate(rows)]
    shuffled = errs[:]
    rnd.shuffle(shuffled)
    a, b = summarize(errs), summarize(shuffled)
    assert a.pct_in_threshold == b.pct_in_threshold and 0 <= a.pct_in_threshold <= 100
    assert a.horizontal_mean == pytest.approx(b.horizontal_mean)
    assert a.horizontal_sd == pytest.approx(b.horizontal_sd) and a.horizontal_sd >= 0


def test_manual_review_lists_only_out_of_threshold():
    assert flag_manual_review([_err("A"), _err("B")]) == []
    tr = {"B": _trace("B", [0, 5], 0.0)}
    (item,) = flag_manual_review([_err("A"), _err("B", 3.0, False)], tr, tr)
    assert item.callsign == "B" and item.reference is tr["B"] and item.simulated is tr["B"]


def test_csv_round_trip_and_row_errors():
    log = run_scenario(reciprocal_pair(duration=60.0))
    traces, clrs = traces_from_log(log)
    text = dumps_trace_csv(traces.values())
    assert text.splitlines()[0] == "time_s,callsign,x_nm,y_nm,fl"
    back = loads_trace_csv(text)
    for cs, tr in traces.items():
        assert np.array_equal(back[cs].x, tr.x) and np.array_equal(back[cs].times, tr.times)
    lines = text.splitlines()
    bad = lines[:3] + ["10,AAA1,abc,0,330"] + lines[3:]
    with pytest.raises(TraceFormatError) as ei:
        loads_trace_csv("\n".join(bad), "t.csv")
    assert ei.value.row == 4 and str(ei.value).startswith("t.csv: row 4:")
    with pytest.raises(TraceFormatError) as ei:
        loads_trace_csv("time,callsign\n")
    assert ei.value.row == 1
    with pytest.raises(TraceFormatError, match="duplicate"):
        loads_trace_csv("\n".join([lines[0], lines[1], lines[1]]))
    clr = [Clearance.level("AAA1", 350, 5.0), Clearance.heading("BBB2", 270.0, 10.0)]
    assert loads_clearance_log(dumps_clearance_log(clr)) == clr
    with pytest.raises(TraceFormatError):
        loads_clearance_log('{"clearances": [{"time": 0}]}')
