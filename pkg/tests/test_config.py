import json

import pytest

from mbtsim.harness.config import ENV_VAR, HarnessConfig, config_from_dict, load_config
from mbtsim.safety import SeparationMinima
from mbtsim.simcore import ConfigurationError


def test_defaults_without_env(monkeypatch):
    monkeypatch.delenv(ENV_VAR, raising=False)
    cfg = load_config()
    assert cfg == HarnessConfig()
    assert cfg.minima == SeparationMinima(5.0, 10.0)
    assert cfg.fidelity.limits(cfg.minima) == (2.5, 5.0)


def test_env_file_overrides(tmp_path, monkeypatch):
    p = tmp_path / "mbt.json"
    p.write_text(json.dumps({"minima": {"lateral_min": 6}, "rubric": {"path_ratio_mostly": 1.2},
                             "sim": {"dt": 2}, "fidelity": {"vertical_fl": 4},
                             "agents": {"falcon": {"budget": 200}}}))
    monkeypatch.setenv(ENV_VAR, str(p))
    cfg = load_config()
    assert cfg.minima.lateral_min == 6.0 and cfg.minima.vertical_min == 10.0
    assert cfg.rubric.path_ratio_mostly == 1.2 and cfg.sim.dt == 2.0
    assert cfg.fidelity.limits(cfg.minima) == (3.0, 4.0)
    assert cfg.agents == {"falcon": {"budget": 200}}
    assert cfg.source == str(p)


@pytest.mark.parametrize("doc,match", [
    ({"colour": {}}, "unknown sections"),
    ({"minima": {"lateral": 5}}, "unknown keys"),
    ({"minima": {"lateral_min": "five"}}, "must be a number"),
    ({"minima": {"lateral_min": True}}, "must be a number"),
    ({"minima": {"lateral_min": -1}}, "positive"),
    ({"metrics": []}, "must be an object"),
    ({"agents": {"hawk": {"bogus": 1}}}, "agents.hawk"),
    ({"agents": {"eagle": {}}}, "agents.eagle"),
    ([], "top level"),
])
def test_bad_config_rejected(doc, match):
    with pytest.raises(ConfigurationError, match=match):
        config_from_dict(doc)


def test_unreadable_or_invalid_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text('{\n  "sim": \n}')
    with pytest.raises(ConfigurationError, match=":3: invalid JSON"):
        load_config(p)
