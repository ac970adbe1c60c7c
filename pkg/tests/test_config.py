import json

import pytest

from prtriage.config import DEFAULT_CONFIG, ConfigError, build_config, default_config_dict, load_config
from prtriage.features import FeatureSchema, file_type_flags
from prtriage.ingest import AgentRegistry


def test_defaults_load():
    assert DEFAULT_CONFIG.agents == ("Codex", "Claude", "Devin", "Copilot")
    assert len(DEFAULT_CONFIG.languages) == 10


def test_override_replaces_top_level_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"languages": ["Python", "Go"]}))
    cfg = load_config(path)
    assert cfg.languages == ("Python", "Go")
    assert cfg.agents == DEFAULT_CONFIG.agents
    assert cfg.hash != DEFAULT_CONFIG.hash
    assert FeatureSchema.build("T0", cfg).hash != FeatureSchema.build("T0").hash
    assert len(FeatureSchema.build("T0", cfg)) == 35 - 8


def test_pattern_table_override(tmp_path):
    raw = default_config_dict()
    raw["path_patterns"]["touches_docs"] = {"patterns": [r"\.wiki$"]}
    cfg = build_config(raw)
    assert file_type_flags(["notes.wiki"], cfg)["touches_docs"]
    assert not file_type_flags(["README.md"], cfg)["touches_docs"]


def test_agent_overlapping_denylist_rejected():
    raw = default_config_dict()
    raw["agents"]["generative"]["Renovator"] = ["renovate"]
    with pytest.raises(ConfigError):
        build_config(raw)


def test_extra_agent_changes_registry():
    raw = default_config_dict()
    raw["agents"]["generative"]["Jules"] = ["jules"]
    reg = AgentRegistry.from_config(build_config(raw))
    assert reg.canonical_agent("google-jules[bot]") == "Jules"


@pytest.mark.parametrize("raw", [{"version": 2}, {"version": 1}])
def test_bad_configs(raw):
    with pytest.raises(ConfigError):
        build_config(raw)


def test_non_object_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)
