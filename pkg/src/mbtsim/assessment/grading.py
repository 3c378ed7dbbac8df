"""Four-point competency grading, summative runs and assessor aggregation."""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..safety import SeparationMinima
from ..simcore import ConfigurationError, Scenario, run_scenario
from .metrics import MetricsConfig, RunMetrics, extract_metrics

GRADED = ("Safety", "Controlling", "Planning", "Coordination")
SATISFACTORY = "Satisfactory"
UNSATISFACTORY = "Unsatisfactory"
PASS, FAIL = "Pass", "Fail"
SUMMATIVE_RUNS = 3
SUMMATIVE_DURATION_S = 1800.0


class Level(enum.IntEnum):
    NOT_ACHIEVED = 1
    PARTLY_ACHIEVED = 2
    MOSTLY_ACHIEVED = 3
    FULLY_ACHIEVED = 4

    @property
    def label(self) -> str:
        return {1: "Not Achieved", 2: "Partly Achieved", 3: "Mostly Achieved",
                4: "Fully Achieved"}[int(self)]

    @classmethod
    def parse(cls, text) -> "Level":
        if isinstance(text, int) and not isinstance(text, bool):
            return cls(text)
        key = str(text).strip().lower().replace(" ", "").replace("_", "")
        for lv in cls:
            if key in (lv.label.lower().replace(" ", ""), lv.name.lower().replace("_", "")):
                return lv
        raise ValueError(f"unknown competency level {text!r}")


@dataclass(frozen=True)
class CompetencyGrade:
    level: Level
    evidence: tuple[str, ...] = ()

    def __post_init__(self):
        if self.level < Level.FULLY_ACHIEVED and not self.evidence:
            raise ValueError("a grade below Fully Achieved needs evidence")


@dataclass(frozen=True)
class GradingForm:
    run_id: str
    grades: dict  # competency -> CompetencyGrade
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in GRADED if c not in self.grades]
        if missing:
            raise ValueError(f"grading form {self.run_id} lacks {missing}")


@dataclass(frozen=True)
class AssessorDecision:
    verdicts: dict  # competency -> Satisfactory | Unsatisfactory
    overall: str
    rationale: str

    def to_dict(self) -> dict:
        return {"verdicts": {c: self.verdicts[c] for c in GRADED}, "overall": self.overall,
                "rationale": self.rationale}


@dataclass(frozen=True)
class RubricConfig:
    ensured_mostly_max: int = 3
    minor_miss_fl: float = 10.0
    minor_miss_nm: float = 5.0
    containment_not: int = 2
    path_ratio_partly: float = 1.25
    path_ratio_mostly: float = 1.10
    lead_time_s: float = 120.0
    planning_fully: float = 0.90
    planning_mostly: float = 0.70
    planning_partly: float = 0.50


def _safety(m: RunMetrics, r: RubricConfig) -> CompetencyGrade:
    if m.los_count:
        ev = tuple(f"loss of separation {e['pair'][0]}/{e['pair'][1]} at t={e['start_time']:.0f}s "
                   f"({e['geometry']}, min {e['min_lateral']:.2f} NM / {e['min_vertical']:.0f} FL)"
                   for e in m.los_events)
        return CompetencyGrade(Level.NOT_ACHIEVED, ev)
    ens = tuple(f"separation not ensured for {e['pair'][0]}/{e['pair'][1]} "
                f"from t={e['start']:.0f}s to t={e['end']:.0f}s" for e in m.ensured_episodes)
    if m.ensured_violations and not ens:
        ens = (f"{m.ensured_violations} ensured-separation violation(s)",)
    uns = tuple(f"{e['event_id']}: unsafe {e['kind']} clearance {e['value']} to {e['callsign']} "
                f"at t={e['time']:.0f}s" for e in m.unsafe_events)
    if m.unsafe_clearances or m.ensured_violations > r.ensured_mostly_max:
        return CompetencyGrade(Level.PARTLY_ACHIEVED, uns + ens)
    if m.ensured_violations:
        return CompetencyGrade(Level.MOSTLY_ACHIEVED, ens)
    return CompetencyGrade(Level.FULLY_ACHIEVED, ("separation maintained and ensured throughout",))


def _coordination(m: RunMetrics, r: RubricConfig) -> CompetencyGrade:
    misses = m.exit_misses
    ev = tuple(f"{e['event_id']}: {e['callsign']} exited at FL{e['fl']:.0f} (coordinated FL{e['exit_fl']}) "
               f"{e['lateral_nm']:.1f} NM from exit fix" for e in misses)
    if not misses:
        return CompetencyGrade(Level.FULLY_ACHIEVED,
                               (f"all {len(m.exits)} exits achieved as coordinated",))
    if len(misses) == 1:
        e = misses[0]
        minor = e["level_error"] <= r.minor_miss_fl and e["lateral_nm"] <= r.minor_miss_nm
        return CompetencyGrade(Level.MOSTLY_ACHIEVED if minor else Level.PARTLY_ACHIEVED, ev)
    if len(misses) == 2:
        return CompetencyGrade(Level.PARTLY_ACHIEVED, ev)
    return CompetencyGrade(Level.NOT_ACHIEVED, ev)


def _controlling(m: RunMetrics, r: RubricConfig) -> CompetencyGrade:
    ev = tuple(f"{e['event_id']}: {e['callsign']} {e['reason']} at t={e['time']:.0f}s"
               for e in m.containment_events)
    ratio = f"mean path ratio {m.mean_path_ratio:.3f}"
    if m.containment_violations >= r.containment_not:
        return CompetencyGrade(Level.NOT_ACHIEVED, ev)
    if m.containment_violations or m.mean_path_ratio > r.path_ratio_partly:
        return CompetencyGrade(Level.PARTLY_ACHIEVED, ev + (ratio,))
    if m.mean_path_ratio > r.path_ratio_mostly:
        return CompetencyGrade(Level.MOSTLY_ACHIEVED, (ratio,))
    return CompetencyGrade(Level.FULLY_ACHIEVED,
                           (f"{ratio}; {m.minutes_below_exit_level:.1f} min below exit levels",))


def _planning(m: RunMetrics, r: RubricConfig) -> CompetencyGrade:
    leads = m.resolution_leads
    if not leads:
        return CompetencyGrade(Level.FULLY_ACHIEVED, ("no conflicts required resolution",))
    timely = sum(v >= r.lead_time_s for v in leads) / len(leads)
    text = (f"{sum(v >= r.lead_time_s for v in leads)}/{len(leads)} conflicts resolved "
            f">= {r.lead_time_s:.0f}s before closest approach",)
    late = tuple(f"late resolution (lead {v:.0f}s)" for v in leads if v < r.lead_time_s)
    if timely >= r.planning_fully:
        return CompetencyGrade(Level.FULLY_ACHIEVED, text + late)
    if timely >= r.planning_mostly:
        return CompetencyGrade(Level.MOSTLY_ACHIEVED, text + late)
    if timely >= r.planning_partly:
        return CompetencyGrade(Level.PARTLY_ACHIEVED, text + late)
    return CompetencyGrade(Level.NOT_ACHIEVED, text + late)


def grade_run(metrics: RunMetrics, rubric: RubricConfig | None = None) -> GradingForm:
    r = rubric or RubricConfig()
    grades = {"Safety": _safety(metrics, r), "Controlling": _controlling(metrics, r),
              "Planning": _planning(metrics, r), "Coordination": _coordination(metrics, r)}
    return GradingForm(metrics.run_id, grades, metrics.to_dict())


def assess(forms: Sequence[GradingForm]) -> AssessorDecision:
    """Satisfactory iff no run Not Achieved and at most one Partly Achieved."""
    if len(forms) != SUMMATIVE_RUNS:
        raise ValueError(f"assessment needs exactly {SUMMATIVE_RUNS} forms, got {len(forms)}")
    verdicts, notes = {}, []
    for comp in GRADED:
        levels = sorted(f.grades[comp].level for f in forms)
        ok = Level.NOT_ACHIEVED not in levels and levels.count(Level.PARTLY_ACHIEVED) <= 1
        verdicts[comp] = SATISFACTORY if ok else UNSATISFACTORY
        notes.append(f"{comp}: {', '.join(lv.label for lv in levels)} -> {verdicts[comp]}")
    overall = PASS if all(v == SATISFACTORY for v in verdicts.values()) else FAIL
    return AssessorDecision(verdicts, overall, "; ".join(notes))


def run_summative(agent, suite: Sequence[Scenario], seed: int = 0, out_dir: str | os.PathLike | None = None,
                  minima: SeparationMinima | None = None, metrics_config: MetricsConfig | None = None,
                  rubric: RubricConfig | None = None, dt: float = 5.0,
                  decision_interval: float = 10.0) -> list[GradingForm]:
    """Run, measure and grade each scenario of a three-run suite.

    With `out_dir`, each run's log and form are written as soon as the run
    finishes, so a later failure leaves the earlier artifacts in place.
    """
    if len(suite) != SUMMATIVE_RUNS:
        raise ConfigurationError(f"summative suite needs exactly {SUMMATIVE_RUNS} scenarios")
    for sc in suite:
        if abs(sc.duration - SUMMATIVE_DURATION_S) > 1e-9:
            raise ConfigurationError(f"{sc.id}: summative runs last {SUMMATIVE_DURATION_S:g} s")
    from .forms import form_to_json, form_to_markdown  # local: forms imports this module
    from ..harness.formats import atomic_write, save_log

    forms = []
    for i, sc in enumerate(suite):
        log = run_scenario(sc, agent, dt=dt, decision_interval=decision_interval, seed=seed,
                           minima=minima)
        run_id = f"run{i + 1}-{sc.id}"
        m = extract_metrics(log, sc, minima, metrics_config, run_id=run_id)
        form = grade_run(m, rubric)
        forms.append(form)
        if out_dir is not None:
            out = Path(out_dir)
            save_log(log, out / f"{run_id}.jsonl")
            atomic_write(out / f"{run_id}.form.json", form_to_json(form))
            atomic_write(out / f"{run_id}.form.md", form_to_markdown(form))
    return forms
