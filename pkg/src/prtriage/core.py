"""Domain types shared across the pipeline.

Records are frozen dataclasses. Timestamps are integer Unix seconds (UTC);
anything finer is truncated on the way in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum


class AuthorKind(str, Enum):
    GENERATIVE_AGENT = "generative_agent"
    DETERMINISTIC_BOT = "deterministic_bot"
    HUMAN = "human"


class PRState(str, Enum):
    OPEN = "open"
    MERGED = "merged"
    REJECTED = "rejected"


class EventKind(str, Enum):
    REVIEW = "review"
    COMMENT = "comment"


class EventAuthor(str, Enum):
    HUMAN = "human"
    BOT = "bot"


class CIStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NONE = "none"


class Stage(str, Enum):
    T0 = "T0"
    T1 = "T1"

    @classmethod
    def _missing_(cls, value):
        # Accept "t0" / "t1" as written on the command line.
        if isinstance(value, str):
            for member in cls:
                if member.value == value.upper():
                    return member
        return None


class Ghosting(str, Enum):
    GHOSTED = "ghosted"
    ENGAGED = "engaged"
    NOT_APPLICABLE = "not_applicable"


def parse_timestamp(value: str | int | float | None) -> int | None:
    """ISO-8601 (or epoch seconds) to integer Unix seconds, UTC."""
    if value is None or value == "":
        return None
    if isinstance(value, (int, float)):
        return int(value)
    text = value.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int | None) -> str | None:
    if ts is None:
        return None
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class FileChange:
    path: str
    additions: int
    deletions: int

    @property
    def changes(self) -> int:
        return self.additions + self.deletions


@dataclass(frozen=True)
class InteractionEvent:
    kind: EventKind
    author_kind: EventAuthor
    timestamp: int


@dataclass(frozen=True)
class Commit:
    timestamp: int
    sha: str


@dataclass(frozen=True)
class PullRequestRecord:
    id: str
    repo_id: str
    agent_name: str
    author_kind: AuthorKind
    created_at: int
    state: PRState
    title: str = ""
    body: str = ""
    merged_at: int | None = None
    closed_at: int | None = None
    files: tuple[FileChange, ...] = ()
    total_additions: int = 0
    total_deletions: int = 0
    commits: tuple[Commit, ...] = ()
    timeline: tuple[InteractionEvent, ...] = ()
    ci_status: CIStatus = CIStatus.NONE
    linked_issue: bool = False
    primary_language: str = ""

    @property
    def total_changes(self) -> int:
        return self.total_additions + self.total_deletions

    @property
    def files_truncated(self) -> bool:
        # Real dumps drop the file list for huge PRs; totals stay authoritative.
        return not self.files and self.total_changes > 0

    def human_events(self) -> list[InteractionEvent]:
        return [e for e in self.timeline if e.author_kind is EventAuthor.HUMAN]


@dataclass(frozen=True)
class FeatureVector:
    stage: Stage
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature names")
        for name, v in zip(self.names, self.values):
            if not math.isfinite(v):
                raise ValueError(f"feature {name!r} is not finite: {v}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]


@dataclass(frozen=True)
class LabelSet:
    effort_score: int
    effort_score_human_only: int
    is_high_cost: bool
    ghosting: Ghosting
    is_instant_merge: bool

    def __post_init__(self):
        if self.effort_score < 0 or self.effort_score_human_only < 0:
            raise ValueError("effort scores must be nonnegative")
        if self.effort_score_human_only > self.effort_score:
            raise ValueError("human-only effort exceeds total effort")


def _sorted_by_time(items) -> bool:
    return all(a.timestamp <= b.timestamp for a, b in zip(items, items[1:]))


def validate_record(record: PullRequestRecord) -> list[str]:
    """Check every record invariant; never raises.

    Each violation string starts with the offending field name.
    """
    out: list[str] = []
    if not record.id:
        out.append("id empty")
    if record.state is PRState.MERGED and record.merged_at is None:
        out.append("merged_at missing")
    if record.state is not PRState.MERGED and record.merged_at is not None:
        out.append("merged_at present on non-merged PR")
    if record.state is PRState.OPEN and record.closed_at is not None:
        out.append("closed_at present on open PR")
    if record.total_additions < 0:
        out.append("total_additions negative")
    if record.total_deletions < 0:
        out.append("total_deletions negative")
    for i, f in enumerate(record.files):
        if not f.path:
            out.append(f"files[{i}].path empty")
        if f.additions < 0 or f.deletions < 0:
            out.append(f"files[{i}] negative line count")
    if record.files:
        adds = sum(f.additions for f in record.files)
        dels = sum(f.deletions for f in record.files)
        if adds != record.total_additions:
            out.append(f"total_additions {record.total_additions} != sum of file additions {adds}")
        if dels != record.total_deletions:
            out.append(f"total_deletions {record.total_deletions} != sum of file deletions {dels}")
    for name in ("merged_at", "closed_at"):
        ts = getattr(record, name)
        if ts is not None and ts < record.created_at:
            out.append(f"{name} before created_at")
    if any(c.timestamp < record.created_at for c in record.commits):
        out.append("commits timestamp before created_at")
    if any(e.timestamp < record.created_at for e in record.timeline):
        out.append("timeline timestamp before created_at")
    if not _sorted_by_time(record.commits):
        out.append("commits not sorted by timestamp")
    if not _sorted_by_time(record.timeline):
        out.append("timeline not sorted by timestamp")
    return out

