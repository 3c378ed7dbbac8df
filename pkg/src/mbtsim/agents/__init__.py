"""Controller agents and the by-name registry."""
from __future__ import annotations

from dataclasses import fields, replace

from ..simcore import NullAgent
from .falcon import Falcon, FalconConfig, FlightPlan, FlightPlanGenome
from .hawk import Hawk, HawkConfig

AGENTS = {"null": NullAgent, "hawk": Hawk, "falcon": Falcon}
CONFIGS = {"hawk": HawkConfig, "falcon": FalconConfig}


def agent_config(name: str, overrides: dict | None = None):
    """Default config for agent `name` with `overrides` applied (None for the null agent)."""
    if name not in AGENTS:
        raise KeyError(f"unknown agent {name!r}; expected one of {sorted(AGENTS)}")
    if name not in CONFIGS:
        if overrides:
            raise ValueError(f"agent {name!r} takes no configuration")
        return None
    cfg = CONFIGS[name]()
    if overrides:
        known = {f.name: f for f in fields(cfg)}
        bad = sorted(set(overrides) - set(known))
        if bad:
            raise ValueError(f"unknown {name} config keys {bad}")
        conv = {}
        for k, v in overrides.items():
            cur = getattr(cfg, k)
            conv[k] = tuple(v) if isinstance(cur, tuple) else type(cur)(v)
        cfg = replace(cfg, **conv)
    return cfg


def make_agent(name: str, overrides: dict | None = None):
    cfg = agent_config(name, overrides)
    return AGENTS[name]() if cfg is None else AGENTS[name](cfg)


__all__ = ["AGENTS", "Falcon", "FalconConfig", "FlightPlan", "FlightPlanGenome", "Hawk",
           "HawkConfig", "NullAgent", "agent_config", "make_agent"]
