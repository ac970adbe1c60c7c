"""Target variables: effort score, High Cost, ghosting, instant merge."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Sequence

from ._io import read_header_comment
from .core import EventAuthor, EventKind, Ghosting, LabelSet, PRState, PullRequestRecord

DAY = 86_400


class EffortVariant(str, Enum):
    ALL_EVENTS = "all_events"
    HUMAN_ONLY = "human_only"


class FeedbackAnchor(str, Enum):
    LAST = "last"
    FIRST = "first"


@dataclass(frozen=True)
class LabelConfig:
    high_cost_quantile: float = 0.80
    ghosting_timeout_days: float = 14
    instant_window_seconds: int = 60
    effort_variant: EffortVariant = EffortVariant.ALL_EVENTS
    feedback_anchor: FeedbackAnchor = FeedbackAnchor.LAST
    review_weight: int = 1
    comment_weight: int = 1

    def __post_init__(self):
        if not 0 < self.high_cost_quantile < 1:
            raise ValueError("high_cost_quantile must lie in (0, 1)")
        if self.ghosting_timeout_days < 1:
            raise ValueError("ghosting timeout must be at least one day")
        if self.instant_window_seconds < 1:
            raise ValueError("instant window must be at least one second")
        if self.review_weight < 0 or self.comment_weight < 0:
            raise ValueError("effort weights must be nonnegative")


def effort_score(
    record: PullRequestRecord,
    variant: EffortVariant | str = EffortVariant.ALL_EVENTS,
    review_weight: int = 1,
    comment_weight: int = 1,
) -> int:
    """Count of review and comment events; ``human_only`` drops bot messages.

    The weights exist for re-weighting sensitivity runs and default to a
    plain count.
    """
    variant = EffortVariant(variant)
    total = 0
    for e in record.timeline:
        if variant is EffortVariant.HUMAN_ONLY and e.author_kind is not EventAuthor.HUMAN:
            continue
        total += review_weight if e.kind is EventKind.REVIEW else comment_weight
    return total


def nearest_rank(values: Sequence[float], q: float):
    """The ceil(q*n)-th smallest value (1-based), clamped to [1, n]."""
    if not len(values):
        raise ValueError("nearest-rank quantile of an empty sequence")
    ordered = sorted(values)
    # Tolerance guards against q*n landing a hair above an integer (0.8*10).
    k = math.ceil(q * len(ordered) - 1e-9)
    return ordered[min(max(k, 1), len(ordered)) - 1]


def high_cost_threshold(training_scores: Sequence[int], quantile: float = 0.80) -> int:
    """Threshold t from training data only; a PR is high cost iff effort > t."""
    if not len(training_scores):
        raise ValueError("cannot compute a threshold from an empty training set")
    return nearest_rank(training_scores, quantile)


def _anchor_time(record: PullRequestRecord, anchor: FeedbackAnchor) -> int | None:
    human = record.human_events()
    if not human:
        return None
    return human[-1].timestamp if anchor is FeedbackAnchor.LAST else human[0].timestamp


def ghosting_label(
    record: PullRequestRecord,
    timeout_days: float = 14,
    anchor: FeedbackAnchor | str = FeedbackAnchor.LAST,
) -> Ghosting:
    if record.state is not PRState.REJECTED:
        return Ghosting.NOT_APPLICABLE
    f = _anchor_time(record, FeedbackAnchor(anchor))
    if f is None:
        return Ghosting.NOT_APPLICABLE
    horizon = f + timeout_days * DAY
    # Follow-up must be strictly after feedback and within the timeout.
    if any(f < c.timestamp <= horizon for c in record.commits):
        return Ghosting.ENGAGED
    return Ghosting.GHOSTED


def instant_merge(record: PullRequestRecord, window_seconds: int = 60) -> bool:
    return (
        record.state is PRState.MERGED
        and record.merged_at is not None
        and record.merged_at - record.created_at < window_seconds
    )


def label_agreement(labels_a: Sequence[bool], labels_b: Sequence[bool]) -> float:
    if len(labels_a) != len(labels_b):
        raise ValueError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    if not len(labels_a):
        raise ValueError("label_agreement needs at least one label")
    return sum(bool(a) == bool(b) for a, b in zip(labels_a, labels_b)) / len(labels_a)


def feedback_to_close_seconds(record: PullRequestRecord, anchor: FeedbackAnchor = FeedbackAnchor.LAST) -> int | None:
    """Seconds from human feedback to close, for rejected PRs with feedback."""
    if record.state is not PRState.REJECTED or record.closed_at is None:
        return None
    f = _anchor_time(record, anchor)
    if f is None:
        return None
    return max(0, record.closed_at - f)


def label_records(
    records: Sequence[PullRequestRecord],
    config: LabelConfig = LabelConfig(),
    threshold: int | None = None,
    threshold_variant: EffortVariant | None = None,
) -> tuple[list[LabelSet], int]:
    """Label a corpus; returns the labels and the High Cost threshold used.

    Pass ``threshold`` to label a test set with a frozen training threshold.
    """
    variant = threshold_variant or config.effort_variant
    weights = dict(review_weight=config.review_weight, comment_weight=config.comment_weight)
    all_scores = [effort_score(r, EffortVariant.ALL_EVENTS, **weights) for r in records]
    human_scores = [effort_score(r, EffortVariant.HUMAN_ONLY, **weights) for r in records]
    target = all_scores if variant is EffortVariant.ALL_EVENTS else human_scores
    if threshold is None:
        threshold = high_cost_threshold(target, config.high_cost_quantile)
    labels = [
        LabelSet(
            effort_score=a,
            effort_score_human_only=h,
            is_high_cost=t > threshold,
            ghosting=ghosting_label(r, config.ghosting_timeout_days, config.feedback_anchor),
            is_instant_merge=instant_merge(r, config.instant_window_seconds),
        )
        for r, a, h, t in zip(records, all_scores, human_scores, target)
    ]
    return labels, threshold


LABEL_COLUMNS = ("id", "effort_score", "effort_score_human_only", "is_high_cost", "ghosting", "is_instant_merge")


def write_labels_csv(
    sink: IO[str],
    ids: Sequence[str],
    labels: Sequence[LabelSet],
    threshold: int,
    seed: int | None = None,
) -> None:
    sink.write(f"# high_cost_threshold={threshold}" + (f" seed={seed}\n" if seed is not None else "\n"))
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(LABEL_COLUMNS)
    for pr_id, lab in zip(ids, labels):
        w.writerow(
            [
                pr_id,
                lab.effort_score,
                lab.effort_score_human_only,
                int(lab.is_high_cost),
                lab.ghosting.value,
                int(lab.is_instant_merge),
            ]
        )


def read_labels_csv(source: IO[str]) -> tuple[dict[str, str], list[str], list[LabelSet]]:
    lines = source.read().splitlines()
    meta = read_header_comment(lines)
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    ids = [r["id"] for r in rows]
    labels = [
        LabelSet(
            effort_score=int(r["effort_score"]),
            effort_score_human_only=int(r["effort_score_human_only"]),
            is_high_cost=r["is_high_cost"] == "1",
            ghosting=Ghosting(r["ghosting"]),
            is_instant_merge=r["is_instant_merge"] == "1",
        )
        for r in rows
    ]
    return meta, ids, labels
