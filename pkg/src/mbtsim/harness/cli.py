"""`mbt` command line: simulate, assess, fidelity, irr, replay and scenario generation.

Exit codes: 0 success, 2 input or configuration error, 3 strict-mode
threshold failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

from .. import fidelity, irr
from ..agents import AGENTS, make_agent
from ..assessment.forms import decision_to_markdown, form_to_dict
from ..assessment.grading import assess, run_summative
from ..assessment.metrics import TruncatedLogError
from ..safety import detect_los
from ..simcore import ConfigurationError, Vector2D, run_scenario
from .config import load_config
from .formats import FormatError, atomic_write, canonical_json, load_log, load_scenario, save_log, save_scenario
from .generator import PATTERNS, PatternSpec, conflict_suite, easy_suite, generate_scenario, pattern_suite

EXIT_OK, EXIT_INPUT, EXIT_STRICT = 0, 2, 3
REPORT_VERSION = 1
PLOT_HEADER = ("time_s", "callsign", "x_nm", "y_nm", "fl", "event")
SUITES = {"easy": easy_suite, "conflict": conflict_suite, "pattern": pattern_suite}

INPUT_ERRORS = (ConfigurationError, FormatError, fidelity.TraceFormatError, irr.ScoresFormatError,
                irr.UndefinedStatistic, TruncatedLogError)


class InputError(Exception):
    pass


def _agent(name: str, cfg):
    return make_agent(name, cfg.agents.get(name))


def cmd_simulate(args, cfg) -> int:
    sc = load_scenario(args.scenario)
    dt = args.dt if args.dt is not None else cfg.sim.dt
    di = args.decision_interval if args.decision_interval is not None else cfg.sim.decision_interval
    wind = Vector2D(0.0, 0.0) if args.wind_off else None
    log = run_scenario(sc, _agent(args.agent, cfg), dt=dt, decision_interval=di, seed=args.seed,
                       minima=cfg.minima, wind=wind)
    save_log(log, args.out)
    return EXIT_OK


def _suite_files(d: Path) -> list[Path]:
    if not d.is_dir():
        raise InputError(f"{d}: suite directory not found")
    files = sorted(d.glob("*.json"))
    if len(files) != 3:
        raise InputError(f"{d}: a summative suite needs exactly 3 scenario files, found {len(files)}")
    return files


def cmd_assess(args, cfg) -> int:
    suite = [load_scenario(p) for p in _suite_files(Path(args.suite))]
    report = Path(args.report)
    out_dir = Path(args.out_dir) if args.out_dir else report.parent / (report.stem + "_runs")
    forms = run_summative(_agent(args.agent, cfg), suite, seed=args.seed, out_dir=out_dir,
                          minima=cfg.minima, metrics_config=cfg.metrics, rubric=cfg.rubric,
                          dt=cfg.sim.dt, decision_interval=cfg.sim.decision_interval)
    decision = assess(forms)
    doc = {
        "version": REPORT_VERSION,
        "agent": args.agent,
        "seed": args.seed,
        "scenarios": [sc.id for sc in suite],
        "runs": [form_to_dict(f) for f in forms],
        "decision": decision.to_dict(),
    }
    atomic_write(report, canonical_json(doc))
    atomic_write(report.with_suffix(".md"), decision_to_markdown(decision, forms))
    return EXIT_OK


def cmd_fidelity(args, cfg) -> int:
    sc = load_scenario(args.scenario)
    traces = fidelity.load_trace_csv(args.reference)
    clearances = fidelity.load_clearance_log(args.clearances)
    wind = Vector2D(0.0, 0.0) if args.wind_off else None
    limits = cfg.fidelity.limits(cfg.minima)
    errors, excluded = fidelity.replay_all(traces, clearances, sc, wind, cfg.sim.dt, cfg.minima, limits)
    if not errors:
        raise InputError("no aircraft could be replayed")
    summary = fidelity.summarize(errors, args.assessment, excluded)
    flagged = fidelity.flag_manual_review(errors)
    doc = summary.to_dict()
    doc["metadata"]["thresholds"] = {"horizontal_nm": limits[0], "vertical_fl": limits[1]}
    doc["metadata"]["per_aircraft"] = [
        {"callsign": e.callsign, "mean_horizontal_nm": e.mean_horizontal, "max_horizontal_nm": e.max_horizontal,
         "mean_vertical_fl": e.mean_vertical, "max_vertical_fl": e.max_vertical,
         "in_threshold": e.in_threshold, "samples": e.n_samples} for e in errors]
    doc["metadata"]["manual_review"] = [r.callsign for r in flagged]
    atomic_write(args.summary, canonical_json(doc))
    if flagged:
        print(f"{len(flagged)} aircraft flagged for manual review: "
              f"{', '.join(r.callsign for r in flagged)}", file=sys.stderr)
        if args.strict:
            return EXIT_STRICT
    return EXIT_OK


def cmd_irr(args, cfg) -> int:
    m = irr.load_scores_csv(args.scores)
    if args.permutations and args.permutations < 100:
        raise InputError("--permutations must be 0 or at least 100")
    rep = irr.irr_report(m, n_perm=args.permutations, seed=args.seed, statistic=args.statistic,
                         block=args.block, per_scenario=args.per_scenario)
    atomic_write(args.report, canonical_json(rep))
    return EXIT_OK


def plot_rows(log, minima) -> list[tuple]:
    """Snapshot rows plus marker rows for entries, exits, clearances and losses of separation."""
    pos = {}
    rows = []
    for ev in log.events:
        if ev.kind == "snapshot":
            d = ev.data
            pos[(ev.time, ev.callsign)] = (d["x"], d["y"], d["fl"])
            rows.append((ev.time, ev.callsign, d["x"], d["y"], d["fl"], ""))
    for ev in log.events:
        if ev.kind in ("entered", "exited", "clearance", "rejected"):
            p = pos.get((ev.time, ev.callsign))
            if "x" in ev.data:
                p = (ev.data["x"], ev.data["y"], ev.data["fl"])
            if p is None:
                continue
            tag = ev.kind
            if ev.kind in ("clearance", "rejected"):
                tag = f"{ev.kind}:{ev.data['kind']}={ev.data['value']}"
            rows.append((ev.time, ev.callsign, *p, tag))
    dt = float(log.header.get("dt", 5.0))
    for e in detect_los(log, minima):
        # exact onset lies between ticks; mark the first tick inside the episode
        t = math.ceil(e.start_time / dt - 1e-9) * dt
        for me, other in (e.pair, e.pair[::-1]):
            p = pos.get((t, me))
            if p is not None:
                rows.append((t, me, *p, f"LossOfSeparation:{other}:{e.geometry}"))
    rows.sort(key=lambda r: (r[0], r[1], r[5]))
    return rows


def cmd_replay(args, cfg) -> int:
    log = load_log(args.run)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for t, cs, x, y, f, tag in plot_rows(log, cfg.minima):
        w.writerow((repr(float(t)), cs, repr(float(x)), repr(float(y)), repr(float(f)), tag))
    atomic_write(args.plot_data, buf.getvalue())
    return EXIT_OK


def cmd_generate(args, cfg) -> int:
    spec = PatternSpec(args.pattern, args.n_aircraft, args.difficulty, args.seed)
    save_scenario(generate_scenario(spec, duration=args.duration), args.out)
    return EXIT_OK


def cmd_generate_suite(args, cfg) -> int:
    out = Path(args.out_dir)
    for i, sc in enumerate(SUITES[args.kind](args.seed)):
        save_scenario(sc, out / f"{i + 1}-{sc.id}.json")
    return EXIT_OK


def cmd_export_trace(args, cfg) -> int:
    log = load_log(args.run)
    traces, clearances = fidelity.traces_from_log(log)
    atomic_write(args.trace, fidelity.dumps_trace_csv(traces.values()))
    atomic_write(args.clearances, fidelity.dumps_clearance_log(clearances))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and write the event log")
    s.add_argument("--scenario", required=True)
    s.add_argument("--agent", choices=sorted(AGENTS), default="hawk")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dt", type=float)
    s.add_argument("--decision-interval", type=float)
    s.add_argument("--wind-off", action="store_true", help="fly the scenario in still air")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("assess", help="three-run summative assessment of an agent")
    s.add_argument("--agent", choices=sorted(AGENTS), required=True)
    s.add_argument("--suite", required=True, help="directory holding exactly 3 scenario files")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.add_argument("--out-dir", help="run logs and grading forms (default: next to the report)")
    s.set_defaults(func=cmd_assess)

    s = sub.add_parser("fidelity", help="replay reference traces and summarize the errors")
    s.add_argument("--reference", required=True, help="trace CSV")
    s.add_argument("--clearances", required=True, help="clearance log JSON")
    s.add_argument("--scenario", required=True)
    s.add_argument("--summary", required=True)
    s.add_argument("--assessment", default="1")
    s.add_argument("--wind-off", action="store_true")
    s.add_argument("--strict", action="store_true", help="exit 3 if any aircraft is out of threshold")
    s.set_defaults(func=cmd_fidelity)

    s = sub.add_parser("irr", help="inter-rater reliability report from a scores CSV")
    s.add_argument("--scores", required=True)
    s.add_argument("--permutations", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--statistic", choices=irr.STATISTICS, default="W")
    s.add_argument("--block", choices=("competency", "scenario", "all"), default="competency")
    s.add_argument("--per-scenario", action="store_true", help="average Spearman rho per scenario")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_irr)

    s = sub.add_parser("replay", help="plot-data CSV from a run log")
    s.add_argument("--run", required=True)
    s.add_argument("--plot-data", required=True)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("generate", help="generate one conflict scenario")
    s.add_argument("--pattern", choices=PATTERNS, default="Crossing")
    s.add_argument("--n-aircraft", type=int, default=4)
    s.add_argument("--difficulty", type=float, default=1.0)
    s.add_argument("--duration", type=float, default=1800.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("generate-suite", help="write a three-scenario suite")
    s.add_argument("--kind", choices=sorted(SUITES), default="conflict")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_generate_suite)

    s = sub.add_parser("export-trace", help="trace CSV and clearance log from a run log")
    s.add_argument("--run", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--clearances", required=True)
    s.set_defaults(func=cmd_export_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config()
        return args.func(args, cfg)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"mbt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"mbt {args.command}: error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
