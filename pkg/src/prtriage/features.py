"""Creation-time (T0) and pre-review (T1) feature extraction."""

from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from ._io import read_header_comment
from .config import DEFAULT_CONFIG, FILE_FLAGS, Config
from .core import CIStatus, EventAuthor, FeatureVector, FileChange, PullRequestRecord, Stage

SCHEMA_VERSION = 1
OTHER = "other"
# Finite stand-in for file-derived features when the file list was truncated.
UNKNOWN = -1.0

COMPLEXITY = (
    "additions",
    "deletions",
    "total_changes",
    "log1p_additions",
    "log1p_deletions",
    "log1p_total_changes",
    "changed_files",
    "change_entropy",
    "max_file_share",
)
INTENT = ("body_length", "title_length", "has_plan", "linked_issue")
T1_EXTRA = ("ci=pass", "ci=fail", "ci=none", "bot_comments_pre_review")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names with group and stage tags."""

    stage: Stage
    names: tuple[str, ...]
    groups: tuple[str, ...]
    config: Config

    @classmethod
    def build(cls, stage: Stage | str = Stage.T0, config: Config = DEFAULT_CONFIG) -> "FeatureSchema":
        stage = Stage(stage)
        entries = [(n, "Complexity") for n in COMPLEXITY]
        entries += [(n, "Intent") for n in INTENT]
        entries += [(f, "Context") for f in FILE_FLAGS]
        entries += [(f"agent={a}", "Context") for a in (*config.agents, OTHER)]
        entries += [(f"language={lang}", "Context") for lang in (*config.languages, OTHER)]
        if stage is Stage.T1:
            entries += [(n, "Context") for n in T1_EXTRA]
        names, groups = zip(*entries)
        return cls(stage, names, groups, config)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"v{SCHEMA_VERSION}|{self.stage.value}|".encode())
        h.update("|".join(self.names).encode())
        h.update(f"|{self.config.hash}".encode())
        return h.hexdigest()[:16]


def change_entropy(files: Iterable[FileChange]) -> float:
    """Shannon entropy in bits of per-file shares of changed lines."""
    sizes = np.array([f.additions + f.deletions for f in files], dtype=float)
    sizes = sizes[sizes > 0]
    if sizes.size <= 1:
        return 0.0
    p = sizes / sizes.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


_PLAN_LINE = re.compile(r"^[ \t>*_#`\-+\d.)]*(plan|steps)\s*:", re.IGNORECASE | re.MULTILINE)
_PLAN_HEADING = re.compile(r"^\s*#{1,6}\s*(plan|steps)\b", re.IGNORECASE | re.MULTILINE)


def detect_plan(body: str) -> bool:
    """Whether a PR body states an explicit plan.

    Line-anchored: ``Plan:``/``Steps:`` after optional markdown markup, or a
    ``## Plan``/``## Steps`` heading (which also covers any checklist under
    it). Mid-sentence mentions never match.
    """
    if not body:
        return False
    return bool(_PLAN_LINE.search(body) or _PLAN_HEADING.search(body))


def file_type_flags(paths: Iterable[str], config: Config = DEFAULT_CONFIG) -> dict[str, bool]:
    paths = list(paths)
    rules = config.path_rules
    direct = {flag: False for flag in FILE_FLAGS}
    for path in paths:
        norm = path.replace("\\", "/")
        hits = {flag for flag, rule in rules.items() if any(p.search(norm) for p in rule.patterns)}
        for flag in FILE_FLAGS:
            if flag in hits and not any(u in hits for u in rules[flag].unless):
                direct[flag] = True
    flags = dict(direct)
    for flag, rule in rules.items():
        if any(direct[a] for a in rule.also):
            flags[flag] = True
    return flags


def _one_hot(value: str, vocab: Sequence[str]) -> list[float]:
    out = [0.0] * (len(vocab) + 1)
    out[vocab.index(value) if value in vocab else len(vocab)] = 1.0
    return out


def _language_key(lang: str, vocab: Sequence[str]) -> str:
    for v in vocab:
        if v.lower() == lang.lower():
            return v
    return lang


def _check_schema(schema: FeatureSchema, stage: Stage) -> None:
    if schema.stage is not stage:
        raise SchemaError(f"schema is for stage {schema.stage.value}, extractor needs {stage.value}")
    expected = FeatureSchema.build(stage, schema.config)
    if expected.names != schema.names:
        raise SchemaError("schema names differ from the published layout")


def _t0_values(record: PullRequestRecord, config: Config) -> list[float]:
    adds, dels = record.total_additions, record.total_deletions
    total = adds + dels
    if record.files_truncated:
        changed_files, entropy, max_share = 0.0, UNKNOWN, UNKNOWN
        flags = [UNKNOWN] * len(FILE_FLAGS)
    else:
        changed_files = float(len(record.files))
        entropy = change_entropy(record.files)
        per_file = [f.additions + f.deletions for f in record.files]
        denom = sum(per_file)
        max_share = max(per_file) / denom if denom > 0 else 0.0
        fl = file_type_flags((f.path for f in record.files), config)
        flags = [float(fl[f]) for f in FILE_FLAGS]
    values = [
        float(adds),
        float(dels),
        float(total),
        math.log1p(adds),
        math.log1p(dels),
        math.log1p(total),
        changed_files,
        entropy,
        max_share,
        float(len(record.body)),  # code points, not bytes
        float(len(record.title)),
        float(detect_plan(record.body)),
        float(record.linked_issue),
    ]
    values += flags
    values += _one_hot(record.agent_name, config.agents)
    values += _one_hot(_language_key(record.primary_language, config.languages), config.languages)
    return values


def extract_t0(record: PullRequestRecord, schema: FeatureSchema | None = None) -> FeatureVector:
    """Features known at PR submission; reads nothing dated after creation."""
    schema = schema or FeatureSchema.build(Stage.T0)
    _check_schema(schema, Stage.T0)
    return FeatureVector(Stage.T0, schema.names, tuple(_t0_values(record, schema.config)))


def bot_comments_pre_review(record: PullRequestRecord) -> int:
    n = 0
    for e in record.timeline:
        if e.author_kind is EventAuthor.HUMAN:
            break
        n += 1
    return n


def _t1_values(record: PullRequestRecord, config: Config) -> list[float]:
    values = _t0_values(record, config)
    values += [float(record.ci_status is s) for s in (CIStatus.PASS, CIStatus.FAIL, CIStatus.NONE)]
    values.append(float(bot_comments_pre_review(record)))
    return values


def extract_t1(record: PullRequestRecord, schema: FeatureSchema | None = None) -> FeatureVector:
    schema = schema or FeatureSchema.build(Stage.T1)
    _check_schema(schema, Stage.T1)
    return FeatureVector(Stage.T1, schema.names, tuple(_t1_values(record, schema.config)))


def feature_matrix(records: Sequence[PullRequestRecord], schema: FeatureSchema) -> np.ndarray:
    _check_schema(schema, schema.stage)
    X = np.empty((len(records), len(schema)), dtype=float)
    for i, r in enumerate(records):
        X[i] = _t0_values(r, schema.config) if schema.stage is Stage.T0 else _t1_values(r, schema.config)
    return X


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_feature_csv(
    sink: IO[str],
    ids: Sequence[str],
    X: np.ndarray,
    schema: FeatureSchema,
    seed: int | None = None,
) -> None:
    """First line is a ``#`` comment carrying schema hash and seed."""
    sink.write(f"# stage={schema.stage.value} schema_hash={schema.hash} config_hash={schema.config.hash}")
    sink.write(f" seed={seed}\n" if seed is not None else "\n")
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["id", *schema.names])
    for pr_id, row in zip(ids, X):
        w.writerow([pr_id, *(_fmt(v) for v in row)])


def read_feature_csv(source: IO[str]) -> tuple[dict[str, str], list[str], list[str], np.ndarray]:
    lines = source.read().splitlines()
    meta = read_header_comment(lines)
    body = [ln for ln in lines if not ln.startswith("#")]
    rows = list(csv.reader(body))
    header = rows[0][1:]
    ids = [r[0] for r in rows[1:]]
    X = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(len(ids), len(header))
    return meta, header, ids, X
