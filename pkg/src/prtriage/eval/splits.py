"""Train/test protocols and size strata."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ..core import PullRequestRecord
from ..labeling import nearest_rank


class SplitKind(str, Enum):
    TEMPORAL = "temporal"
    REPO_DISJOINT = "repo"
    LOAO = "loao"
    RANDOM = "random"


@dataclass(frozen=True)
class SplitSpec:
    kind: SplitKind = SplitKind.TEMPORAL
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


Records = Sequence[PullRequestRecord]


def _n_train(fraction: float, n: int) -> int:
    # Tolerance keeps 0.29 * 100 from flooring to 28.
    return min(max(math.floor(fraction * n + 1e-9), 1), n - 1)


def temporal_split(records: Records, fraction: float = 0.8) -> tuple[list, list]:
    """Oldest floor(fraction*n) PRs train, the rest test; equal timestamps order by id."""
    if len(records) < 2:
        raise ValueError("temporal split needs at least two records")
    ordered = sorted(records, key=lambda r: (r.created_at, r.id))
    k = _n_train(fraction, len(ordered))
    return ordered[:k], ordered[k:]


def random_split(records: Records, fraction: float = 0.8, seed: int = 0) -> tuple[list, list]:
    if len(records) < 2:
        raise ValueError("random split needs at least two records")
    perm = np.random.default_rng(seed).permutation(len(records))
    k = _n_train(fraction, len(records))
    train_idx = sorted(perm[:k].tolist())
    test_idx = sorted(perm[k:].tolist())
    return [records[i] for i in train_idx], [records[i] for i in test_idx]


def repo_disjoint_split(records: Records, fraction: float = 0.8, seed: int = 0) -> tuple[list, list]:
    """Shuffle repositories, then fill the training side repo by repo.

    Stops once the training side holds at least fraction*n PRs; the final
    repository always goes to test so neither side is empty.
    """
    repos = sorted({r.repo_id for r in records})
    if len(repos) < 2:
        raise ValueError("repo-disjoint split needs at least two repositories")
    sizes: dict[str, int] = {}
    for r in records:
        sizes[r.repo_id] = sizes.get(r.repo_id, 0) + 1
    order = [repos[i] for i in np.random.default_rng(seed).permutation(len(repos))]
    target = fraction * len(records)
    train_repos: set[str] = set()
    count = 0
    for repo in order[:-1]:
        if count >= target:
            break
        train_repos.add(repo)
        count += sizes[repo]
    train = [r for r in records if r.repo_id in train_repos]
    test = [r for r in records if r.repo_id not in train_repos]
    return train, test


def loao_folds(records: Records) -> list[tuple[str, list, list]]:
    """One fold per agent: that agent's PRs are the test set."""
    agents = sorted({r.agent_name for r in records})
    if len(agents) < 2:
        raise ValueError("leave-one-agent-out needs at least two agents")
    return [
        (a, [r for r in records if r.agent_name != a], [r for r in records if r.agent_name == a])
        for a in agents
    ]


@dataclass(frozen=True)
class Stratum:
    name: str
    low: float | None  # exclusive
    high: float | None  # inclusive
    indices: tuple[int, ...]

    def label(self) -> str:
        if self.low is None:
            return f"<= {self.high:g}"
        if self.high is None:
            return f"> {self.low:g}"
        return f"({self.low:g}, {self.high:g}]"


QUARTILE_NAMES = ("Q1_small", "Q2_medium", "Q3_large", "Q4_xl")


def size_quartile_bounds(sizes: Sequence[float]) -> tuple[float, float, float]:
    return tuple(nearest_rank(sizes, q) for q in (0.25, 0.5, 0.75))


def size_quartile_strata(records_or_sizes) -> list[Stratum]:
    """Quartiles of total_changes with nearest-rank boundaries b1 <= b2 <= b3.

    Strata are right-closed: (-inf, b1], (b1, b2], (b2, b3], (b3, inf).
    """
    seq = list(records_or_sizes)
    if not seq:
        raise ValueError("size strata of an empty corpus")
    sizes = [s.total_changes if isinstance(s, PullRequestRecord) else s for s in seq]
    b1, b2, b3 = size_quartile_bounds(sizes)
    edges = [(None, b1), (b1, b2), (b2, b3), (b3, None)]
    strata = []
    for name, (lo, hi) in zip(QUARTILE_NAMES, edges):
        idx = tuple(
            i for i, x in enumerate(sizes) if (lo is None or x > lo) and (hi is None or x <= hi)
        )
        strata.append(Stratum(name, lo, hi, idx))
    return strata
