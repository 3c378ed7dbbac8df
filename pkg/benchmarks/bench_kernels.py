"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times trajectory propagation, the pairwise separation scan and one full
Falcon planning call under each available backend, and checks that both
backends return identical arrays.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
import timeit

import numpy as np

from mbtsim import kernels
from mbtsim.agents.falcon import FalconConfig, plan
from mbtsim.harness.generator import MIXED, PatternSpec, generate_scenario
from mbtsim.simcore import NullAgent, Observation, ObservedAircraft, run_scenario, state_from_snapshot


def propagate_case():
    rx = np.array([-20.0, 10.0, 40.0])
    ry = np.array([5.0, -12.0, 0.0])
    rfl = np.array([330.0, 350.0, 350.0])
    args = (-40.0, 0.0, 310.0, 90.0, 450.0, 330.0, 2000.0, 1800.0, 3.0,
            False, 0.0, rx, ry, rfl, 0, 12.0, -7.0, 5.0, 240, 1.0)
    return lambda: kernels.propagate(*args)


def scan_case(n=12, T=241, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(T)[None, :] * 5.0 / 3600.0
    x0, y0 = rng.uniform(-40, 40, (2, n, 1))
    vx, vy = rng.uniform(-480, 480, (2, n, 1))
    X, Y = x0 + vx * t, y0 + vy * t
    F = np.repeat(rng.choice([310.0, 320.0, 330.0], (n, 1)), T, axis=1)
    valid = np.ones((n, T), dtype=bool)
    return lambda: kernels.pair_scan(X, Y, F, valid, 5.0, 10.0)


def falcon_case(budget=300):
    sc = generate_scenario(PatternSpec(MIXED, 6, 1.0, 3))
    log = run_scenario(sc, NullAgent())
    # the busiest early epoch: most aircraft entered and not yet exited
    by_t: dict = {}
    for ev in log.of_kind("snapshot"):
        by_t.setdefault(ev.time, []).append(ev)
    t_best = max(sorted(by_t), key=lambda t: sum(1 for e in by_t[t] if e.data.get("entered")
                                                 and not e.data.get("exited")))
    states = [state_from_snapshot(e, sc) for e in by_t[t_best]]
    states = [s for s in states if s.entered and not s.exited]
    exits = {e.callsign: e.exit for e in sc.entries}
    obs = Observation(t_best, tuple(ObservedAircraft(s, exits[s.callsign]) for s in states),
                      sc.sector, sc.wind, None, sc.waypoints)
    cfg = FalconConfig(budget=budget)
    return lambda: plan(obs, budget, 0, cfg), len(states)


def same(a, b) -> bool:
    if isinstance(a, (tuple, list)):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.array_equal(a, b)
    return a == b


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    backends = sorted(kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled extension not built; timing the Python backend only", file=sys.stderr)
    falcon, n_ac = falcon_case()
    cases = [("propagate (240 steps, 3-fix route)", propagate_case(), 200),
             ("pair_scan (12 aircraft, 241 samples)", scan_case(), 50),
             (f"falcon plan ({n_ac} aircraft, budget 300)", falcon, 1)]
    results = []
    for label, fn, number in cases:
        row = {"case": label}
        outs = {}
        for b in backends:
            with kernels.use_backend(b):
                outs[b] = fn()
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            row[b] = best
        if len(outs) == 2:
            row["identical"] = same(outs["cython"], outs["python"])
        results.append(row)

    print(f"python {platform.python_version()}, numpy {np.__version__}, default backend {kernels.BACKEND}")
    print(f"{'case':42s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for r in results:
        line = f"{r['case']:42s}" + "".join(f"{r[b] * 1e3:11.3f} ms" for b in backends)
        if len(backends) == 2:
            line += f"   {r['python'] / r['cython']:7.1f}x"
            if "identical" in r:
                line += "  identical" if r["identical"] else "  MISMATCH"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if all(r.get("identical", True) for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
