"""Descriptive tables: per-agent outcomes, regime prevalence and ghosting risk cells."""

from __future__ import annotations

import statistics
from typing import Sequence

from ..config import DEFAULT_CONFIG, Config
from ..core import Ghosting, PRState, PullRequestRecord
from ..features import detect_plan, file_type_flags
from ..labeling import LabelConfig, ghosting_label, instant_merge


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def top_level_components(record: PullRequestRecord) -> set[str]:
    """First path segment of each changed file; root-level files share ``.``."""
    return {f.path.split("/", 1)[0] if "/" in f.path else "." for f in record.files}


def is_multi_component(record: PullRequestRecord) -> bool:
    return len(top_level_components(record)) >= 2


AGENT_COLUMNS = ("agent", "total", "instant_pct", "rejected_with_feedback", "ghosted", "ghosting_pct", "acceptance_pct")


def agent_stats(records: Sequence[PullRequestRecord], config: LabelConfig = LabelConfig()) -> list[tuple]:
    """One row per agent plus an ``all`` row; percentages in 0..100."""
    groups: dict[str, list[PullRequestRecord]] = {}
    for r in records:
        groups.setdefault(r.agent_name, []).append(r)
    rows = []
    for agent in sorted(groups) + ["all"]:
        prs = records if agent == "all" else groups[agent]
        instant = sum(instant_merge(r, config.instant_window_seconds) for r in prs)
        ghost = [ghosting_label(r, config.ghosting_timeout_days, config.feedback_anchor) for r in prs]
        applicable = sum(g is not Ghosting.NOT_APPLICABLE for g in ghost)
        ghosted = sum(g is Ghosting.GHOSTED for g in ghost)
        closed = [r for r in prs if r.state is not PRState.OPEN]
        merged = sum(r.state is PRState.MERGED for r in closed)
        rows.append(
            (
                agent,
                len(prs),
                100 * _rate(instant, len(prs)),
                applicable,
                ghosted,
                100 * _rate(ghosted, applicable),
                100 * _rate(merged, len(closed)),
            )
        )
    return rows


REGIME_COLUMNS = (
    "regime", "n", "median_total_changes", "touches_config", "touches_ci", "touches_tests",
    "has_plan", "acceptance",
)


def regime_prevalence(
    records: Sequence[PullRequestRecord],
    config: Config = DEFAULT_CONFIG,
    window_seconds: int = 60,
) -> list[tuple]:
    """Feature prevalence (fractions) in the instant and normal regimes."""
    rows = []
    for name, want in (("instant", True), ("normal", False)):
        prs = [r for r in records if instant_merge(r, window_seconds) is want]
        if not prs:
            rows.append((name, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        flags = [file_type_flags([f.path for f in r.files], config) for r in prs]
        closed = [r for r in prs if r.state is not PRState.OPEN]
        rows.append(
            (
                name,
                len(prs),
                float(statistics.median(r.total_changes for r in prs)),
                _rate(sum(f["touches_config"] for f in flags), len(prs)),
                _rate(sum(f["touches_ci"] for f in flags), len(prs)),
                _rate(sum(f["touches_tests"] for f in flags), len(prs)),
                _rate(sum(detect_plan(r.body) for r in prs), len(prs)),
                _rate(sum(r.state is PRState.MERGED for r in closed), len(closed)),
            )
        )
    return rows


HEATMAP_COLUMNS = ("multi_component", "touches_ci", "n", "ghosted", "ghosting_rate")


def ghosting_heatmap(
    records: Sequence[PullRequestRecord],
    label_config: LabelConfig = LabelConfig(),
    config: Config = DEFAULT_CONFIG,
) -> list[tuple]:
    """Ghosting rate among rejected-with-feedback PRs in each multi_component x touches_ci cell."""
    cells = {(m, c): [0, 0] for m in (0, 1) for c in (0, 1)}
    for r in records:
        g = ghosting_label(r, label_config.ghosting_timeout_days, label_config.feedback_anchor)
        if g is Ghosting.NOT_APPLICABLE:
            continue
        ci = file_type_flags([f.path for f in r.files], config)["touches_ci"]
        cell = cells[(int(is_multi_component(r)), int(ci))]
        cell[0] += 1
        cell[1] += g is Ghosting.GHOSTED
    return [(m, c, n, k, _rate(k, n)) for (m, c), (n, k) in sorted(cells.items())]
