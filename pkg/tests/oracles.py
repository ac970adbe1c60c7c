"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np


def auc_pairs(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def ap_pairwise(scores, labels) -> float:
    """Expected average precision under uniformly random ordering of tied scores.

    For positive i, its expected precision at its own rank is
    E[(1 + positives ahead) / (1 + items ahead)]. Ties are symmetric, so this
    is averaged exactly by enumerating how many of the tied items land ahead.
    """
    n_pos = sum(labels)
    total = 0.0
    for i, (si, yi) in enumerate(zip(scores, labels)):
        if not yi:
            continue
        above = [j for j in range(len(scores)) if scores[j] > si]
        tied = [j for j in range(len(scores)) if j != i and scores[j] == si]
        a = len(above)
        b = sum(labels[j] for j in above)
        m = len(tied)
        tp = sum(labels[j] for j in tied)
        # Position of i among its tie group is uniform over 0..m.
        acc = 0.0
        for k in range(m + 1):
            # k tied items ahead; each tied item is positive with prob tp/m.
            pos_ahead = k * tp / m if m else 0.0
            acc += (b + 1 + pos_ahead) / (a + k + 1)
        total += acc / (m + 1)
    return total / n_pos


def ap_enumerate(scores, labels) -> float:
    """Average precision averaged over every ordering consistent with the scores."""
    groups = {}
    for i, s in enumerate(scores):
        groups.setdefault(s, []).append(i)
    ordered = [groups[s] for s in sorted(groups, reverse=True)]
    n_pos = sum(labels)
    totals, count = 0.0, 0
    for perm in itertools.product(*(itertools.permutations(g) for g in ordered)):
        order = [i for g in perm for i in g]
        hits, ap = 0, 0.0
        for rank, i in enumerate(order, 1):
            if labels[i]:
                hits += 1
                ap += hits / rank
        totals += ap / n_pos
        count += 1
    return totals / count


def budget_oracle(scores, labels, ids, budget):
    k = min(len(scores), math.ceil(round(budget * len(scores), 9)))
    top = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))[:k]
    hits = sum(labels[i] for i in top)
    return hits / k, hits / sum(labels) if sum(labels) else 0.0


def auc_pairs_np(scores, labels) -> float:
    """Pair counting over the full positive x negative grid."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, bool)
    diff = s[y][:, None] - s[~y][None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def ap_pairwise_np(scores, labels) -> float:
    """Vectorized :func:`ap_pairwise`: O(n^2) comparisons, exact tie expectation."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, bool)
    total = 0.0
    for i in np.flatnonzero(y):
        above = s > s[i]
        tied = s == s[i]
        tied[i] = False
        a, b = int(above.sum()), int((above & y).sum())
        m, tp = int(tied.sum()), int((tied & y).sum())
        k = np.arange(m + 1)
        pos_ahead = k * tp / m if m else np.zeros(1)
        total += float(np.mean((b + 1 + pos_ahead) / (a + k + 1)))
    return total / int(y.sum())
