"""Grading-form files: JSON for machines, markdown for people, and ingestion of human forms."""
from __future__ import annotations

import json
import os
from pathlib import Path

from ..harness.formats import FormatError, _line_of, canonical_json
from .grading import GRADED, AssessorDecision, CompetencyGrade, GradingForm, Level

FORM_VERSION = 1


def form_to_dict(form: GradingForm) -> dict:
    return {
        "version": FORM_VERSION,
        "run_id": form.run_id,
        "grades": [{"competency": c, "level": form.grades[c].level.label,
                    "evidence": list(form.grades[c].evidence)} for c in GRADED],
        "metrics": form.metrics,
    }


def form_to_json(form: GradingForm) -> str:
    return canonical_json(form_to_dict(form))


def form_from_dict(doc, text: str | None = None, path: str | None = None) -> GradingForm:
    def fail(msg, keypath):
        raise FormatError(msg, _line_of(text, keypath) if text else None, path)

    if not isinstance(doc, dict):
        fail("grading form must be a JSON object", [])
    if not isinstance(doc.get("run_id"), str):
        fail("missing or non-string run_id", ["run_id"] if "run_id" in doc else [])
    rows = doc.get("grades")
    if not isinstance(rows, list):
        fail("missing grades list", ["grades"] if "grades" in doc else [])
    grades = {}
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            fail(f"grade #{i} is not an object", ["grades", i])
        comp = row.get("competency")
        if comp not in GRADED:
            fail(f"unknown competency {comp!r} (expected one of {', '.join(GRADED)})",
                 ["grades", i, "competency"])
        if comp in grades:
            fail(f"duplicate competency {comp}", ["grades", i, "competency"])
        try:
            level = Level.parse(row.get("level"))
        except ValueError as exc:
            fail(str(exc), ["grades", i, "level"])
        evidence = row.get("evidence", [])
        if not isinstance(evidence, list) or not all(isinstance(e, str) for e in evidence):
            fail("evidence must be a list of strings", ["grades", i, "evidence"])
        try:
            grades[comp] = CompetencyGrade(level, tuple(evidence))
        except ValueError as exc:
            fail(f"{comp}: {exc}", ["grades", i, "level"])
    missing = [c for c in GRADED if c not in grades]
    if missing:
        fail(f"missing competency entries: {', '.join(missing)}", ["grades"])
    metrics = doc.get("metrics", {})
    if not isinstance(metrics, dict):
        fail("metrics must be an object", ["metrics"])
    return GradingForm(doc["run_id"], grades, metrics)


def ingest_human_form(path: str | os.PathLike) -> GradingForm:
    """Parse an externally written grading form; errors carry line numbers."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read form: {exc.strerror}", None, str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    return form_from_dict(doc, text, str(path))


def form_to_markdown(form: GradingForm) -> str:
    lines = [f"# Grading form: {form.run_id}", ""]
    m = form.metrics
    if m:
        lines += [f"Scenario `{m.get('scenario_id', '')}`, agent `{m.get('agent', '')}`, "
                  f"seed {m.get('seed', '')}.", ""]
    lines += ["| Competency | Grade |", "|---|---|"]
    lines += [f"| {c} | {form.grades[c].level.label} |" for c in GRADED]
    for c in GRADED:
        g = form.grades[c]
        lines += ["", f"## {c}: {g.level.label}", ""]
        lines += [f"- {e}" for e in g.evidence] or ["- (no remarks)"]
    return "\n".join(lines) + "\n"


def decision_to_markdown(decision: AssessorDecision, forms) -> str:
    lines = ["# Assessor decision", "", "| Competency | " + " | ".join(f.run_id for f in forms)
             + " | Verdict |", "|---|" + "---|" * (len(forms) + 1)]
    for c in GRADED:
        lines.append(f"| {c} | " + " | ".join(f.grades[c].level.label for f in forms)
                     + f" | {decision.verdicts[c]} |")
    lines += ["", f"Overall: **{decision.overall}**", "", decision.rationale]
    return "\n".join(lines) + "\n"
