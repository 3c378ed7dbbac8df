"""Run configuration with overrides from the JSON file named by MBT_CONFIG."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..assessment.grading import RubricConfig
from ..assessment.metrics import MetricsConfig
from ..safety import SeparationMinima
from ..simcore import DEFAULT_DECISION_INTERVAL, DEFAULT_DT, ConfigurationError

ENV_VAR = "MBT_CONFIG"
SECTIONS = ("minima", "sim", "metrics", "rubric", "fidelity", "agents")


@dataclass(frozen=True)
class SimSettings:
    dt: float = DEFAULT_DT
    decision_interval: float = DEFAULT_DECISION_INTERVAL


@dataclass(frozen=True)
class FidelitySettings:
    # None means half the separation minima
    horizontal_nm: float | None = None
    vertical_fl: float | None = None

    def limits(self, minima: SeparationMinima) -> tuple[float, float]:
        h = self.horizontal_nm if self.horizontal_nm is not None else minima.lateral_min / 2.0
        v = self.vertical_fl if self.vertical_fl is not None else minima.vertical_min / 2.0
        return float(h), float(v)


@dataclass(frozen=True)
class HarnessConfig:
    minima: SeparationMinima = field(default_factory=SeparationMinima)
    sim: SimSettings = field(default_factory=SimSettings)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    rubric: RubricConfig = field(default_factory=RubricConfig)
    fidelity: FidelitySettings = field(default_factory=FidelitySettings)
    agents: dict = field(default_factory=dict)  # agent name -> config overrides
    source: str | None = None


def _override(obj, values, section: str):
    if not isinstance(values, dict):
        raise ConfigurationError(f"{ENV_VAR}: section '{section}' must be an object")
    known = {f.name for f in fields(obj)}
    bad = sorted(set(values) - known)
    if bad:
        raise ConfigurationError(f"{ENV_VAR}: unknown keys in '{section}': {bad}")
    conv = {}
    for k, v in values.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigurationError(f"{ENV_VAR}: {section}.{k} must be a number")
        conv[k] = type(getattr(obj, k))(v) if getattr(obj, k) is not None else float(v)
    try:
        return replace(obj, **conv)
    except ValueError as exc:
        raise ConfigurationError(f"{ENV_VAR}: {section}: {exc}") from None


def config_from_dict(doc: dict, source: str | None = None) -> HarnessConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{ENV_VAR}: top level must be an object")
    bad = sorted(set(doc) - set(SECTIONS) - {"version"})
    if bad:
        raise ConfigurationError(f"{ENV_VAR}: unknown sections {bad}; expected {list(SECTIONS)}")
    cfg = HarnessConfig(source=source)
    kw = {}
    for name in ("minima", "sim", "metrics", "rubric", "fidelity"):
        if name in doc:
            kw[name] = _override(getattr(cfg, name), doc[name], name)
    if "agents" in doc:
        from ..agents import agent_config
        agents = doc["agents"]
        if not isinstance(agents, dict):
            raise ConfigurationError(f"{ENV_VAR}: section 'agents' must be an object")
        for name, over in agents.items():
            try:
                agent_config(name, over)
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigurationError(f"{ENV_VAR}: agents.{name}: {exc}") from None
        kw["agents"] = dict(agents)
    return replace(cfg, **kw)


def load_config(path: str | os.PathLike | None = None) -> HarnessConfig:
    """Defaults, overridden by the JSON file at `path` or at $MBT_CONFIG."""
    path = path if path is not None else os.environ.get(ENV_VAR) or None
    if path is None:
        return HarnessConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{ENV_VAR}: cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{ENV_VAR}: {path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return config_from_dict(doc, str(path))
