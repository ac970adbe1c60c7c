import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from prtriage.eval.metrics import (
    DegenerateDataError,
    average_ranks,
    bootstrap_ci,
    bootstrap_many,
    budget_metrics,
    calibration_curve,
    ecdf,
    permutation_importance,
    pr_auc,
    roc_auc,
    roc_curve_points,
    topk_coverage,
)

from oracles import ap_enumerate, ap_pairwise, auc_pairs, budget_oracle

scores_labels = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 5).map(float), min_size=n, max_size=n),
        st.lists(st.booleans(), min_size=n, max_size=n),
    )
)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(scores_labels)
def test_auc_matches_pair_counting(data):
    s, y = data
    assume(any(y) and not all(y))
    assert abs(roc_auc(s, y) - auc_pairs(s, y)) <= 1e-12


def test_pr_auc_examples():
    assert pr_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert pr_auc(list(range(10, 0, -1)), [0] * 9 + [1]) == pytest.approx(1 / 10)
    rng = np.random.default_rng(0)
    y = rng.random(20000) < 0.3
    assert pr_auc(rng.random(20000), y) == pytest.approx(y.mean(), abs=0.05)
    with pytest.raises(ValueError):
        pr_auc([0.2, 0.3], [0, 0])


@settings(max_examples=200, deadline=None)
@given(scores_labels)
def test_pr_auc_matches_pairwise_expectation(data):
    s, y = data
    assume(any(y))
    assert abs(pr_auc(s, y) - ap_pairwise(s, y)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 7).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 2).map(float), min_size=n, max_size=n),
            st.lists(st.booleans(), min_size=n, max_size=n),
        )
    )
)
def test_pr_auc_matches_full_enumeration(data):
    s, y = data
    assume(any(y))
    assert abs(pr_auc(s, y) - ap_enumerate(s, y)) <= 1e-12


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_average_ranks(values):
    v = np.array(values)
    r = average_ranks(v)
    for i in range(v.size):
        less = (v < v[i]).sum()
        eq = (v == v[i]).sum()
        assert r[i] == pytest.approx(less + (eq + 1) / 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=2, max_size=40, unique=True), st.data())
def test_auc_invariants(scores, data):
    y = data.draw(st.lists(st.booleans(), min_size=len(scores), max_size=len(scores)))
    assume(any(y) and not all(y))
    flipped = [not v for v in y]
    assert roc_auc(scores, y) + roc_auc(scores, flipped) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(np.exp(np.array(scores) / 10), y) == roc_auc(scores, y)


def test_budget_examples():
    s = [0.9, 0.8] + [0.1] * 8
    assert budget_metrics(s, [1, 1] + [0] * 8, 0.2) == (1.0, 1.0)
    assert budget_metrics(s, [0, 0] + [1] * 8, 0.2) == (0.0, 0.0)
    # 50 PRs, 10 reviewed, 5 of 10 positives among them.
    scores = list(range(50, 0, -1))
    labels = [1] * 5 + [0] * 5 + [1] * 5 + [0] * 35
    assert budget_metrics(scores, labels, 0.2) == (0.5, 0.5)


@settings(max_examples=100, deadline=None)
@given(scores_labels, st.floats(0.01, 1.0))
def test_budget_matches_oracle_and_is_monotone(data, budget):
    s, y = data
    assume(any(y))
    ids = [f"id{i:03d}" for i in range(len(s))][::-1]
    assert budget_metrics(s, y, budget, ids) == pytest.approx(budget_oracle(s, y, ids, budget))
    recalls = [r for _, _, r in topk_coverage(s, y, ids)]
    assert recalls == sorted(recalls)
    assert budget_metrics(s, y, 1.0)[0] == pytest.approx(sum(y) / len(y))


def test_budget_ties_go_to_smaller_id():
    p, r = budget_metrics([0.5] * 4, [0, 1, 0, 0], 0.25, ids=["d", "a", "c", "b"])
    assert (p, r) == (1.0, 1.0)


def test_topk_grid():
    curve = topk_coverage([0.9, 0.1, 0.5, 0.4], [1, 0, 0, 1])
    assert len(curve) == 100 and curve[-1][2] == 1.0 and curve[0][1] == 1


def test_roc_points():
    pts = roc_curve_points([0.9, 0.5, 0.5, 0.1], [1, 1, 0, 0])
    assert pts[0] == (math.inf, 0.0, 0.0)
    assert pts[1:] == [(0.9, 0.0, 0.5), (0.5, 0.5, 1.0), (0.1, 1.0, 1.0)]


def test_bootstrap_examples():
    y = np.array([1] * 500 + [0] * 500)
    s = y.astype(float)
    ci = bootstrap_ci(roc_auc, s, y, B=200, seed=1)
    assert ci.high - ci.low < 0.01 and ci.point == 1.0
    rng = np.random.default_rng(2)
    s2 = rng.random(300)
    y2 = rng.random(300) < 0.3
    a = bootstrap_ci(roc_auc, s2, y2, B=300, seed=7)
    b = bootstrap_ci(roc_auc, s2, y2, B=300, seed=7)
    assert a == b
    assert a.low <= a.point <= a.high


def test_bootstrap_degenerate():
    y = np.zeros(50, bool)
    with pytest.raises(DegenerateDataError):
        bootstrap_ci(roc_auc, np.arange(50.0), y, B=100, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_bootstrap_contains_point(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(60)
    y = rng.random(60) < 0.4
    assume(y.any() and not y.all())
    for ci in bootstrap_many({"auc": roc_auc, "ap": pr_auc}, s, y, B=50, seed=seed).values():
        assert 0 <= ci.low <= ci.point <= ci.high <= 1


def test_calibration_examples():
    rng = np.random.default_rng(3)
    p = rng.random(10_000)
    y = rng.random(10_000) < p
    bins = calibration_curve(p, y)
    assert sum(b[3] for b in bins) == 10_000
    assert max(abs(b[1] - b[2]) for b in bins) < 0.05
    assert calibration_curve([0.5] * 4, [1, 0, 1, 0]) == [(0.55, 0.5, 0.5, 4)]
    assert calibration_curve([1.0, 0.0], [1, 0])[-1][0] == 0.95
    with pytest.raises(ValueError):
        calibration_curve([1.2], [1])


def test_permutation_importance():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 3))
    y = X[:, 1] > 0
    ranked = permutation_importance(lambda M: M[:, 1], X, y, ["a", "b", "c"], seed=1)
    assert ranked[0][0] == "b" and ranked[0][1] > 0.3
    assert all(abs(d) < 1e-12 for n, d in ranked if n != "b")
    assert ranked == permutation_importance(lambda M: M[:, 1], X, y, ["a", "b", "c"], seed=1)
    X_before = X.copy()
    permutation_importance(lambda M: M[:, 1], X, y, seed=2)
    assert np.array_equal(X, X_before)


def test_ecdf():
    assert ecdf([1, 2, 3]) == [(1.0, 1 / 3), (2.0, 2 / 3), (3.0, 1.0)]
    assert ecdf([5, 5, 1]) == [(1.0, 1 / 3), (5.0, 1.0)]
    with pytest.raises(ValueError):
        ecdf([])
