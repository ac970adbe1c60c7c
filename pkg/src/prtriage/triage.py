"""The gated triage policy: scores plus structural rules to gate decisions.

Rule precedence, highest first:

1. ``issue_link_exempt``: a PR linked to an issue is never fast-failed.
2. ``no_plan_sprawl``: large (additions over threshold) and no plan -> fast_fail.
3. ``size_flag``: additions over threshold -> flag_high_effort.
4. ``budget_rank``: score in the top budget fraction of the batch -> flag_high_effort.
5. ``low_score``: score under the fast-track cutoff -> fast_track.
6. otherwise ``standard`` -> standard_review.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Sequence

from ._io import header_line
from .core import PRState, PullRequestRecord
from .eval.metrics import budget_size
from .features import detect_plan
from .labeling import DAY


class Action(str, Enum):
    FAST_TRACK = "fast_track"
    STANDARD_REVIEW = "standard_review"
    FLAG_HIGH_EFFORT = "flag_high_effort"
    FAST_FAIL = "fast_fail"


RULE_ORDER = ("issue_link_exempt", "no_plan_sprawl", "size_flag", "budget_rank", "low_score", "standard")


@dataclass(frozen=True)
class TriagePolicy:
    budget: float = 0.20
    additions_flag_threshold: int = 500
    require_plan: bool = True
    timeout_days: float = 14
    issue_link_exempt: bool = True
    fast_track_probability_cutoff: float = 0.05

    def __post_init__(self):
        if not 0 < self.budget <= 1:
            raise ValueError("budget must lie in (0, 1]")
        if self.additions_flag_threshold <= 0:
            raise ValueError("additions_flag_threshold must be positive")
        if not 0 <= self.fast_track_probability_cutoff < 1:
            raise ValueError("fast_track_probability_cutoff must lie in [0, 1)")
        if self.timeout_days <= 0:
            raise ValueError("timeout_days must be positive")


@dataclass(frozen=True)
class TriageInput:
    id: str
    additions: int
    has_plan: bool
    linked_issue: bool
    score: float

    @classmethod
    def from_record(cls, record: PullRequestRecord, score: float) -> "TriageInput":
        return cls(record.id, record.total_additions, detect_plan(record.body), record.linked_issue, float(score))


@dataclass(frozen=True)
class TriageDecision:
    id: str
    action: Action
    reasons: tuple[str, ...]
    score: float


def action_from_reasons(reasons: Iterable[str]) -> Action:
    """Replay fired rules through the precedence table."""
    fired = set(reasons)
    if "no_plan_sprawl" in fired and "issue_link_exempt" not in fired:
        return Action.FAST_FAIL
    if fired & {"size_flag", "budget_rank", "no_plan_sprawl"}:
        return Action.FLAG_HIGH_EFFORT
    if "low_score" in fired:
        return Action.FAST_TRACK
    return Action.STANDARD_REVIEW


def decide(pr: TriageInput, policy: TriagePolicy = TriagePolicy(), in_budget: bool = False) -> TriageDecision:
    """Gate one PR. ``in_budget`` says whether its score ranks inside the batch budget."""
    if not 0 <= pr.score <= 1:
        raise ValueError(f"score must lie in [0, 1], got {pr.score}")
    large = pr.additions > policy.additions_flag_threshold
    sprawl = large and policy.require_plan and not pr.has_plan
    fired = set()
    if sprawl:
        fired.add("no_plan_sprawl")
        if policy.issue_link_exempt and pr.linked_issue:
            fired.add("issue_link_exempt")
    if large:
        fired.add("size_flag")
    if in_budget:
        fired.add("budget_rank")
    if pr.score < policy.fast_track_probability_cutoff:
        fired.add("low_score")
    reasons = tuple(r for r in RULE_ORDER if r in fired)
    action = action_from_reasons(reasons)
    if action is Action.STANDARD_REVIEW and "standard" not in reasons:
        reasons = reasons + ("standard",)
    return TriageDecision(pr.id, action, reasons, pr.score)


def budget_ranked_ids(batch: Sequence[TriageInput], budget: float) -> set[str]:
    ordered = sorted(batch, key=lambda p: (-p.score, p.id))
    return {p.id for p in ordered[: budget_size(budget, len(ordered))]}


def batch_gate(batch: Sequence[TriageInput], policy: TriagePolicy = TriagePolicy()) -> list[TriageDecision]:
    """Gate a batch; exactly ceil(budget*n) PRs fire the ranking rule."""
    if not batch:
        raise ValueError("batch_gate needs a nonempty batch")
    flagged = budget_ranked_ids(batch, policy.budget)
    return [decide(pr, policy, pr.id in flagged) for pr in batch]


@dataclass(frozen=True)
class TimeoutStatus:
    id: str
    days_stale: float
    expired: bool


def timeout_sweep(open_prs: Iterable[PullRequestRecord], now: int, policy: TriagePolicy = TriagePolicy()) -> list[TimeoutStatus]:
    """Staleness of open PRs that received human feedback.

    A PR whose agent committed after the last feedback is engaged and never
    expires; ``days_stale`` still counts from that feedback.
    """
    out = []
    for pr in open_prs:
        if pr.state is not PRState.OPEN:
            continue
        human = pr.human_events()
        if not human:
            continue
        last = human[-1].timestamp
        days = (now - last) / DAY
        engaged = any(c.timestamp > last for c in pr.commits)
        out.append(TimeoutStatus(pr.id, days, (not engaged) and days > policy.timeout_days))
    return out


def write_decisions_csv(sink: IO[str], decisions: Sequence[TriageDecision], **meta) -> None:
    if meta:
        sink.write(header_line(**meta))
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["id", "action", "score", "reasons"])
    for d in decisions:
        w.writerow([d.id, d.action.value, f"{d.score:.9g}", ";".join(d.reasons)])


def write_decisions_jsonl(sink: IO[str], decisions: Sequence[TriageDecision]) -> None:
    for d in decisions:
        sink.write(json.dumps({"id": d.id, "action": d.action.value, "score": d.score, "reasons": list(d.reasons)}))
        sink.write("\n")
