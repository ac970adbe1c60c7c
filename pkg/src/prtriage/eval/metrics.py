"""Ranking and probability metrics, bootstrap intervals, curves, attribution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class DegenerateDataError(ValueError):
    pass


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores ({s.size}) and labels ({y.size}) differ in length")
    return s, y


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [values.size]))
    ranks = np.empty(values.size)
    # Positions start..end-1 share rank (start+1 + end) / 2.
    group_rank = (starts + 1 + ends) / 2.0
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate: P(random positive outranks random negative), ties count one half."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    ranks = average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision, taking the expectation over orderings within tied scores.

    For a tie group of size m holding p positives, preceded by A items of which
    B are positive, a positive placed at slot j has on average
    (j-1)(p-1)/(m-1) other positives ahead of it inside the group, so its
    expected precision is (B + 1 + (j-1)(p-1)/(m-1)) / (A + j) with j uniform.
    """
    s, y = _as_arrays(scores, labels)
    total_pos = int(y.sum())
    if total_pos == 0:
        raise ValueError("pr_auc needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    boundaries = np.flatnonzero(np.diff(s_sorted)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    sizes = ends - starts
    group_pos = np.add.reduceat(y_sorted.astype(float), starts)
    above = np.cumsum(group_pos) - group_pos
    # Broadcast group quantities to positions; j is the 1-based slot inside the group.
    m = np.repeat(sizes, sizes).astype(float)
    p = np.repeat(group_pos, sizes)
    a = np.repeat(starts, sizes).astype(float)
    b = np.repeat(above, sizes)
    j = np.arange(s.size) - a + 1
    inside = np.where(m > 1, (j - 1) * (p - 1) / np.maximum(m - 1, 1), 0.0)
    terms = p / m * (b + 1 + inside) / (a + j)
    return float(terms[p > 0].sum() / total_pos)


def _topk_order(scores: np.ndarray, ids: Sequence | None) -> np.ndarray:
    keys = np.arange(scores.size) if ids is None else np.asarray(ids)
    return np.lexsort((keys, -scores))


def budget_size(budget: float, n: int) -> int:
    if not 0 < budget <= 1:
        raise ValueError("budget must lie in (0, 1]")
    # Small tolerance so 0.2 * 50 counts as exactly 10.
    return min(n, math.ceil(budget * n - 1e-9))


def budget_metrics(scores, labels, budget: float = 0.2, ids: Sequence | None = None) -> tuple[float, float]:
    """(precision, recall) among the top ceil(budget*n) PRs; ties go to the smaller id."""
    s, y = _as_arrays(scores, labels)
    k = budget_size(budget, s.size)
    top = _topk_order(s, ids)[:k]
    hits = int(y[top].sum())
    total = int(y.sum())
    precision = hits / k if k else 0.0
    recall = hits / total if total else 0.0
    return precision, recall


def topk_coverage(scores, labels, ids: Sequence | None = None, grid: Sequence[float] | None = None):
    """Recall at each review budget; default grid is 1%, 2%, ..., 100%."""
    s, y = _as_arrays(scores, labels)
    grid = grid if grid is not None else [i / 100 for i in range(1, 101)]
    order = _topk_order(s, ids)
    cum = np.cumsum(y[order])
    total = max(int(y.sum()), 1)
    out = []
    for b in grid:
        k = budget_size(b, s.size)
        hits = int(cum[k - 1]) if k else 0
        out.append((b, k, hits / total))
    return out


def roc_curve_points(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) at every distinct score, starting from (inf, 0, 0)."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc curve needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last = np.concatenate((np.flatnonzero(np.diff(s_sorted)), [s.size - 1]))
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    pts = [(math.inf, 0.0, 0.0)]
    pts += [(float(s_sorted[i]), fp_i / n_neg, tp_i / n_pos) for i, fp_i, tp_i in zip(last, fp, tp)]
    return pts


@dataclass(frozen=True)
class Interval:
    point: float
    low: float
    high: float
    skipped: int = 0


def _two_classes(y: np.ndarray) -> bool:
    return bool(y.any()) and not bool(y.all())


def bootstrap_ci(
    metric_fn: Callable,
    scores,
    labels,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> Interval:
    """Percentile interval over B row resamples.

    Single-class resamples are skipped and counted. The interval is widened
    to contain the point estimate when the percentile bounds miss it.
    """
    return bootstrap_many({"m": metric_fn}, scores, labels, B, alpha, seed)["m"]


def bootstrap_many(
    metric_fns: dict,
    scores,
    labels,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> dict[str, Interval]:
    """Like :func:`bootstrap_ci` for several metrics sharing one set of resamples."""
    s, y = _as_arrays(scores, labels)
    n = s.size
    rng = np.random.default_rng(seed)
    stats: dict[str, list[float]] = {k: [] for k in metric_fns}
    skipped = 0
    for _ in range(B):
        idx = rng.integers(0, n, size=n)
        ys = y[idx]
        if not _two_classes(ys):
            skipped += 1
            continue
        ss = s[idx]
        for k, fn in metric_fns.items():
            stats[k].append(fn(ss, ys))
    if B and skipped > B / 2:
        raise DegenerateDataError(f"{skipped} of {B} bootstrap resamples had a single class")
    out = {}
    for k, fn in metric_fns.items():
        point = float(fn(s, y))
        if stats[k]:
            low, high = np.quantile(stats[k], [alpha / 2, 1 - alpha / 2])
            low, high = min(float(low), point), max(float(high), point)
        else:
            low = high = point
        out[k] = Interval(point, low, high, skipped)
    return out


def calibration_curve(probs, labels, n_bins: int = 10) -> list[tuple[float, float, float, int]]:
    """(bin_mid, mean_pred, frac_pos, count) over equal-width bins; empty bins omitted."""
    p, y = _as_arrays(probs, labels)
    if ((p < 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    idx = np.minimum((p * n_bins).astype(int), n_bins - 1)
    out = []
    for b in range(n_bins):
        mask = idx == b
        c = int(mask.sum())
        if c:
            out.append(((b + 0.5) / n_bins, float(p[mask].mean()), float(y[mask].mean()), c))
    return out


def permutation_importance(
    model,
    X: np.ndarray,
    y,
    feature_names: Sequence[str] | None = None,
    metric: Callable = roc_auc,
    repeats: int = 5,
    seed: int = 0,
) -> list[tuple[str, float]]:
    """Mean metric drop when each column is shuffled; ranked by drop, descending.

    ``model`` is anything with ``predict_proba(X)`` or a plain callable.
    """
    predict = model.predict_proba if hasattr(model, "predict_proba") else model
    X = np.array(X, dtype=float)  # shuffled in place below
    y = np.asarray(y).astype(bool)
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    base = metric(predict(X), y)
    rng = np.random.default_rng(seed)
    drops = []
    for j in range(X.shape[1]):
        total = 0.0
        saved = X[:, j].copy()
        for _ in range(repeats):
            X[:, j] = saved[rng.permutation(X.shape[0])]
            total += base - metric(predict(X), y)
        X[:, j] = saved
        drops.append(total / repeats)
    order = sorted(range(len(drops)), key=lambda j: (-drops[j], j))
    return [(names[j], drops[j]) for j in order]


def ecdf(durations) -> list[tuple[float, float]]:
    """Right-continuous step points (x, fraction <= x), one per distinct x."""
    d = np.sort(np.asarray(durations, dtype=float))
    if d.size == 0:
        raise ValueError("ecdf of an empty sample")
    if (d < 0).any():
        raise ValueError("durations must be nonnegative")
    last = np.concatenate((np.flatnonzero(np.diff(d)), [d.size - 1]))
    return [(float(d[i]), (i + 1) / d.size) for i in last]
