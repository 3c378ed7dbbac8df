"""Objective registry and its coverage by automated metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

COMPETENCIES = ("Safety", "Planning", "Coordination", "Controlling", "Communication")
SCOPES = ("InScope", "Partial", "OutOfScope")


class RegistryError(ValueError):
    """Registry file is missing, corrupt or inconsistent."""


class ObjectiveNotFound(KeyError):
    pass


@dataclass(frozen=True)
class ObjectiveRecord:
    identifier: str
    competency: str
    scope: str
    criterion: str
    notes: str = ""


def _parse(doc, source: str) -> tuple[ObjectiveRecord, ...]:
    if not isinstance(doc, dict) or not isinstance(doc.get("objectives"), list):
        raise RegistryError(f"{source}: expected an object with an 'objectives' list")
    out, seen = [], set()
    for i, row in enumerate(doc["objectives"]):
        try:
            rec = ObjectiveRecord(row["identifier"], row["competency"], row["scope"],
                                  row["criterion"], row.get("notes", ""))
        except (KeyError, TypeError):
            raise RegistryError(f"{source}: malformed objective #{i}") from None
        if rec.competency not in COMPETENCIES or rec.scope not in SCOPES:
            raise RegistryError(f"{source}: {rec.identifier} has bad competency/scope")
        if rec.identifier in seen:
            raise RegistryError(f"{source}: duplicate identifier {rec.identifier}")
        seen.add(rec.identifier)
        out.append(rec)
    return tuple(out)


@lru_cache(maxsize=None)
def _builtin() -> tuple[ObjectiveRecord, ...]:
    text = resources.files(__package__).joinpath("registry.json").read_text(encoding="utf-8")
    try:
        return _parse(json.loads(text), "registry.json")
    except json.JSONDecodeError as exc:
        raise RegistryError(f"registry.json: {exc}") from None


def load_registry(path: str | Path | None = None) -> list[ObjectiveRecord]:
    if path is None:
        return list(_builtin())
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RegistryError(f"{path}: {exc}") from None
    return list(_parse(doc, str(path)))


def lookup(identifier: str, registry: list[ObjectiveRecord] | None = None) -> ObjectiveRecord:
    for rec in registry if registry is not None else _builtin():
        if rec.identifier == identifier:
            return rec
    raise ObjectiveNotFound(identifier)


def scope_counts(registry: list[ObjectiveRecord] | None = None) -> dict[str, int]:
    regs = registry if registry is not None else _builtin()
    return {s: sum(r.scope == s for r in regs) for s in SCOPES}


QUALITATIVE = "observed qualitatively only"

# objective -> metric names that evidence it
METRIC_COVERAGE = {
    "MBT.SAFETY.001": ["los_count"],
    "MBT.SAFETY.002": ["ensured_violations"],
    "MBT.SAFETY.003": ["los_count", "ensured_violations"],
    "MBT.SAFETY.004": ["los_count", "ensured_violations"],
    "MBT.SAFETY.005": ["los_by_geometry.CatchUp"],
    "MBT.SAFETY.006": ["los_by_geometry.Crossing"],
    "MBT.SAFETY.007": ["los_by_geometry.Reciprocal"],
    "MBT.PLAN.006": ["unsafe_clearances"],
    "MBT.PLAN.007": ["resolutions"],
    "MBT.PLAN.008": ["los_count"],
    "MBT.PLAN.010": ["resolution_leads"],
    "MBT.COORD.001": ["exits"],
    "MBT.CONTROL.007": ["exits"],
    "MBT.CONTROL.011": ["containment_violations"],
    "MBT.CONTROL.012": ["unsafe_clearances"],
    "MBT.CONTROL.013": ["resolutions"],
    "MBT.CONTROL.019": ["mean_path_ratio", "minutes_below_exit_level"],
    "MBT.COMMS.001": ["transfers"],
}


def coverage_report(registry: list[ObjectiveRecord] | None = None) -> dict[str, dict]:
    """Every in-scope objective mapped to metrics or marked qualitative."""
    regs = registry if registry is not None else _builtin()
    out = {}
    for rec in regs:
        if rec.scope != "InScope":
            continue
        metrics = METRIC_COVERAGE.get(rec.identifier)
        out[rec.identifier] = {"competency": rec.competency,
                               "coverage": "metric" if metrics else QUALITATIVE,
                               "metrics": list(metrics or [])}
    return out
