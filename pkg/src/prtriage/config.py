"""Versioned configuration: agent registry, language vocabulary, path pattern table.

A user config file is JSON with any subset of the top-level keys in
``data/defaults.json``; each key present replaces the default wholesale.
The config hash feeds the feature schema hash, so editing a table
changes every downstream artifact's header.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

CONFIG_VERSION = 1
FILE_FLAGS = (
    "touches_tests",
    "touches_ci",
    "touches_config",
    "touches_deps",
    "touches_docs",
    "touches_lockfile",
)


class ConfigError(ValueError):
    pass


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def default_config_dict() -> dict:
    text = resources.files("prtriage").joinpath("data/defaults.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class PathRule:
    patterns: tuple[re.Pattern, ...]
    unless: tuple[str, ...] = ()
    also: tuple[str, ...] = ()


@dataclass(frozen=True)
class Config:
    raw: dict
    agent_patterns: dict  # canonical agent name -> tuple of lowercase substrings
    deterministic_patterns: tuple[str, ...]
    languages: tuple[str, ...]
    path_rules: dict  # flag name -> PathRule

    @property
    def agents(self) -> tuple[str, ...]:
        return tuple(self.agent_patterns)

    @property
    def hash(self) -> str:
        return hashlib.sha256(_canonical_json(self.raw).encode()).hexdigest()[:16]


def build_config(raw: dict) -> Config:
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {raw.get('version')}")
    try:
        agents = raw["agents"]
        generative = {name: tuple(p.lower() for p in pats) for name, pats in agents["generative"].items()}
        deterministic = tuple(p.lower() for p in agents["deterministic"])
        languages = tuple(raw["languages"])
        table = raw["path_patterns"]
    except KeyError as exc:
        raise ConfigError(f"config missing key {exc}") from None
    missing = [f for f in FILE_FLAGS if f not in table]
    if missing:
        raise ConfigError(f"path_patterns missing flags: {missing}")
    rules = {}
    for flag in FILE_FLAGS:
        entry = table[flag]
        rules[flag] = PathRule(
            patterns=tuple(re.compile(p, re.IGNORECASE) for p in entry["patterns"]),
            unless=tuple(entry.get("unless", ())),
            also=tuple(entry.get("also", ())),
        )
    for name, pats in generative.items():
        for p in pats:
            if any(d in p or p in d for d in deterministic):
                raise ConfigError(f"agent pattern {p!r} ({name}) overlaps the deterministic denylist")
    if len(set(languages)) != len(languages):
        raise ConfigError("duplicate language in vocabulary")
    return Config(
        raw=raw,
        agent_patterns=generative,
        deterministic_patterns=deterministic,
        languages=languages,
        path_rules=rules,
    )


def load_config(path: str | Path | None = None) -> Config:
    raw = default_config_dict()
    if path is not None:
        try:
            override = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(override, dict):
            raise ConfigError(f"{path}: top level must be an object")
        raw = copy.deepcopy(raw)
        raw.update(override)
    return build_config(raw)


DEFAULT_CONFIG = load_config()
