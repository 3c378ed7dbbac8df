"""File formats: scenario JSON, JSONL run logs, and atomic writes."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import jsonschema

from ..airspace import GeometryError, Position2D, Route, Sector, Waypoint
from ..simcore import (
    ConfigurationError,
    Entry,
    EventLog,
    ExitCondition,
    PerformanceProfile,
    Scenario,
    SimEvent,
    Vector2D,
)

SCENARIO_VERSION = 1
LOG_VERSION = 1


class FormatError(ValueError):
    """Input file failed to parse or validate; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (" " if path else "")
        super().__init__(f"{where}{message}")


_num = {"type": "number"}
_int = {"type": "integer"}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["id", "sector", "wind", "waypoints", "routes", "entries", "duration_s"],
    "additionalProperties": False,
    "properties": {
        "version": _int,
        "id": {"type": "string", "minLength": 1},
        "origin": {"type": "object", "properties": {"lat": _num, "lon": _num}},
        "sector": {
            "type": "object", "required": ["boundary", "floor", "ceiling"],
            "additionalProperties": False,
            "properties": {"boundary": {"type": "array", "items": _xy, "minItems": 3},
                           "floor": _int, "ceiling": _int},
        },
        "wind": {"type": "object", "required": ["x_kt", "y_kt"], "additionalProperties": False,
                 "properties": {"x_kt": _num, "y_kt": _num}},
        "waypoints": {"type": "array", "items": {
            "type": "object", "required": ["name", "x", "y"], "additionalProperties": False,
            "properties": {"name": {"type": "string", "pattern": "^[A-Z0-9]{1,5}$"},
                           "x": _num, "y": _num}}},
        "routes": {"type": "array", "items": {
            "type": "object", "required": ["name", "waypoints"], "additionalProperties": False,
            "properties": {"name": {"type": "string", "minLength": 1},
                           "waypoints": {"type": "array", "items": {"type": "string"},
                                         "minItems": 2}}}},
        "entries": {"type": "array", "items": {
            "type": "object",
            "required": ["spawn_time_s", "callsign", "type", "cruise_tas_kt", "climb_fpm",
                         "descent_fpm", "turn_dps", "entry", "route", "exit"],
            "additionalProperties": False,
            "properties": {
                "spawn_time_s": _num, "callsign": {"type": "string", "minLength": 1},
                "type": {"type": "string"}, "cruise_tas_kt": _num, "climb_fpm": _num,
                "descent_fpm": _num, "turn_dps": _num,
                "entry": {"type": "object", "required": ["x", "y", "fl"],
                          "additionalProperties": False,
                          "properties": {"x": _num, "y": _num, "fl": _int}},
                "route": {"type": "string"},
                "exit": {"type": "object", "required": ["waypoint", "fl"],
                         "additionalProperties": False,
                         "properties": {"waypoint": {"type": "string"}, "fl": _int}},
            }}},
        "duration_s": _num,
        "pilot_delay_s": _num,
    },
}


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _line_of(text: str, path) -> int | None:
    """Best-effort line number for a JSON path inside `text`."""
    pos = 0
    path = list(path)
    for i, part in enumerate(path):
        if isinstance(part, str):
            j = text.find(f'"{part}"', pos)
            if j < 0:
                break
            pos = j
        else:
            nxt = path[i + 1] if i + 1 < len(path) and isinstance(path[i + 1], str) else None
            if nxt is None:
                # index into an array of scalars/arrays: count opening brackets/braces
                depth_hits = 0
                j = pos
                while depth_hits <= part and j >= 0:
                    j = min([k for k in (text.find("{", j + 1), text.find("[", j + 1)) if k >= 0],
                            default=-1)
                    depth_hits += 1
                if j >= 0:
                    pos = j
                continue
            j = pos
            for _ in range(part + 1):
                j = text.find(f'"{nxt}"', j + 1)
                if j < 0:
                    break
            if j < 0:
                break
            # step back so the next string search finds this occurrence
            pos = j - 1
    return text.count("\n", 0, pos) + 1


# --- scenarios ----------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> dict:
    routes = {}
    entries = []
    for e in sc.entries:
        rname = e.route.name or f"R_{e.callsign}"
        if routes.get(rname, list(e.route.waypoints)) != list(e.route.waypoints):
            rname = f"{rname}_{e.callsign}"
        routes.setdefault(rname, list(e.route.waypoints))
        entries.append({
            "spawn_time_s": float(e.spawn_time), "callsign": e.callsign, "type": e.perf.type_code,
            "cruise_tas_kt": float(e.perf.cruise_tas), "climb_fpm": float(e.perf.climb_rate),
            "descent_fpm": float(e.perf.descent_rate), "turn_dps": float(e.perf.turn_rate),
            "entry": {"x": float(e.entry_pos[0]), "y": float(e.entry_pos[1]), "fl": int(e.entry_fl)},
            "route": rname,
            "exit": {"waypoint": e.exit.exit_waypoint, "fl": int(e.exit.exit_fl)},
        })
    doc = {
        "version": SCENARIO_VERSION,
        "id": sc.id,
        "sector": {"boundary": [[float(p[0]), float(p[1])] for p in sc.sector.boundary],
                   "floor": int(sc.sector.floor), "ceiling": int(sc.sector.ceiling)},
        "wind": {"x_kt": float(sc.wind[0]), "y_kt": float(sc.wind[1])},
        "waypoints": [{"name": w.name, "x": float(w.pos[0]), "y": float(w.pos[1])}
                      for w in sc.waypoints.values()],
        "routes": [{"name": k, "waypoints": v} for k, v in routes.items()],
        "entries": entries,
        "duration_s": float(sc.duration),
    }
    if sc.pilot_delay:
        doc["pilot_delay_s"] = float(sc.pilot_delay)
    return doc


def scenario_from_dict(doc: dict, text: str | None = None, path: str | None = None) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        line = _line_of(text, err.absolute_path) if text else None
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise FormatError(f"schema violation at {loc}: {err.message}", line, path)
    if doc.get("version", SCENARIO_VERSION) != SCENARIO_VERSION:
        raise FormatError(f"unsupported scenario version {doc.get('version')}", 1, path)

    def fail(msg, keypath):
        raise FormatError(msg, _line_of(text, keypath) if text else None, path)

    try:
        sector = Sector(tuple(Position2D(float(x), float(y)) for x, y in doc["sector"]["boundary"]),
                        doc["sector"]["floor"], doc["sector"]["ceiling"])
    except GeometryError as exc:
        fail(str(exc), ["sector"])
    waypoints: dict[str, Waypoint] = {}
    for i, w in enumerate(doc["waypoints"]):
        if w["name"] in waypoints:
            fail(f"duplicate waypoint {w['name']}", ["waypoints", i, "name"])
        try:
            waypoints[w["name"]] = Waypoint(w["name"], Position2D(float(w["x"]), float(w["y"])))
        except GeometryError as exc:
            fail(str(exc), ["waypoints", i, "name"])
    routes: dict[str, Route] = {}
    for i, r in enumerate(doc["routes"]):
        for name in r["waypoints"]:
            if name not in waypoints:
                fail(f"route {r['name']} references unknown waypoint {name}", ["routes", i, "waypoints"])
        try:
            routes[r["name"]] = Route(tuple(r["waypoints"]), r["name"])
        except GeometryError as exc:
            fail(str(exc), ["routes", i, "name"])
    entries = []
    for i, e in enumerate(doc["entries"]):
        if e["route"] not in routes:
            fail(f"entry {e['callsign']} references unknown route {e['route']}", ["entries", i, "route"])
        if e["exit"]["waypoint"] not in waypoints:
            fail(f"entry {e['callsign']} exits at unknown waypoint {e['exit']['waypoint']}",
                 ["entries", i, "exit"])
        try:
            perf = PerformanceProfile(e["type"], float(e["cruise_tas_kt"]), float(e["climb_fpm"]),
                                      float(e["descent_fpm"]), float(e["turn_dps"]))
            entries.append(Entry(float(e["spawn_time_s"]), e["callsign"], perf,
                                 Position2D(float(e["entry"]["x"]), float(e["entry"]["y"])),
                                 int(e["entry"]["fl"]), routes[e["route"]],
                                 ExitCondition(e["exit"]["waypoint"], int(e["exit"]["fl"]))))
        except ConfigurationError as exc:
            fail(f"entry {e['callsign']}: {exc}", ["entries", i, "callsign"])
    sc = Scenario(doc["id"], sector, waypoints, Vector2D(float(doc["wind"]["x_kt"]),
                                                         float(doc["wind"]["y_kt"])),
                  tuple(entries), float(doc["duration_s"]), float(doc.get("pilot_delay_s", 0.0)))
    try:
        sc.validate()
    except ConfigurationError as exc:
        fail(str(exc), ["entries"])
    return sc


def dumps_scenario(sc: Scenario) -> str:
    return canonical_json(scenario_to_dict(sc))


def loads_scenario(text: str, path: str | None = None) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", exc.lineno, path) from None
    if not isinstance(doc, dict):
        raise FormatError("scenario must be a JSON object", 1, path)
    return scenario_from_dict(doc, text, path)


def load_scenario(path: str | os.PathLike) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read scenario: {exc.strerror}", None, str(path)) from None
    return loads_scenario(text, str(path))


def save_scenario(sc: Scenario, path: str | os.PathLike) -> None:
    atomic_write(path, dumps_scenario(sc))


# --- run logs -------------------------------------------------------------------

def _dumps_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_log(log: EventLog) -> str:
    lines = [_dumps_line({**log.header, "version": LOG_VERSION})]
    lines += [_dumps_line(e.as_dict()) for e in log.events]
    if log.complete:
        lines.append(_dumps_line({"end": True, "n_events": len(log.events)}))
    return "\n".join(lines) + "\n"


def loads_log(text: str, path: str | None = None) -> EventLog:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty log (no header)", 1, path)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid header: {exc.msg}", 1, path) from None
    if not isinstance(header, dict) or "version" not in header or "scenario_id" not in header:
        raise FormatError("first line is not a run-log header", 1, path)
    header = dict(header)
    header.pop("version")
    log = EventLog(header)
    last_t = -float("inf")
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON record: {exc.msg}", n, path) from None
        if rec.get("end"):
            if rec.get("n_events") != len(log.events):
                raise FormatError("footer event count mismatch", n, path)
            log.complete = True
            continue
        if log.complete:
            raise FormatError("record after end marker", n, path)
        try:
            ev = SimEvent(float(rec["time"]), str(rec["kind"]), str(rec["callsign"]), dict(rec["data"]))
        except (KeyError, TypeError, ValueError):
            raise FormatError("malformed event record", n, path) from None
        if ev.time < last_t:
            raise FormatError("events out of time order", n, path)
        last_t = ev.time
        log.events.append(ev)
    return log


def load_log(path: str | os.PathLike) -> EventLog:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read log: {exc.strerror}", None, str(path)) from None
    return loads_log(text, str(path))


def save_log(log: EventLog, path: str | os.PathLike) -> None:
    atomic_write(path, dumps_log(log))
