import pytest
from hypothesis import given, settings, strategies as st

from prtriage.eval.splits import (
    SplitSpec,
    loao_folds,
    random_split,
    repo_disjoint_split,
    size_quartile_bounds,
    size_quartile_strata,
    temporal_split,
)

from factories import T0, make_pr


def _corpus(rows):
    """rows: list of (created offset, repo, agent)."""
    return [
        make_pr(id=f"pr{i:03d}", created_at=T0 + t, repo_id=repo, agent_name=agent)
        for i, (t, repo, agent) in enumerate(rows)
    ]


corpora = st.lists(
    st.tuples(st.integers(0, 50), st.sampled_from("abcdef"), st.sampled_from(["Codex", "Devin", "Copilot"])),
    min_size=2,
    max_size=60,
).map(_corpus)


def test_temporal_examples():
    recs = _corpus([(t, "a", "Codex") for t in range(10, 0, -1)])
    train, test = temporal_split(recs, 0.8)
    assert len(train) == 8 and len(test) == 2
    assert max(r.created_at for r in train) <= min(r.created_at for r in test)
    assert [r.created_at - T0 for r in test] == [9, 10]

    same = _corpus([(0, "a", "Codex")] * 4)
    train, test = temporal_split(same[::-1], 0.5)
    assert [r.id for r in train] == ["pr000", "pr001"]

    train, test = temporal_split(_corpus([(i, "a", "Codex") for i in range(3)]), 0.5)
    assert (len(train), len(test)) == (1, 2)


def test_split_errors():
    with pytest.raises(ValueError):
        temporal_split(_corpus([(0, "a", "Codex")]))
    with pytest.raises(ValueError):
        repo_disjoint_split(_corpus([(0, "a", "Codex"), (1, "a", "Devin")]))
    with pytest.raises(ValueError):
        loao_folds(_corpus([(0, "a", "Codex"), (1, "b", "Codex")]))
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=1.0)
    with pytest.raises(ValueError):
        size_quartile_strata([])


@settings(max_examples=100, deadline=None)
@given(corpora, st.floats(0.1, 0.9))
def test_temporal_partition(recs, frac):
    train, test = temporal_split(recs, frac)
    assert train and test
    assert sorted(r.id for r in train + test) == sorted(r.id for r in recs)
    assert max((r.created_at, r.id) for r in train) < min((r.created_at, r.id) for r in test)


@settings(max_examples=100, deadline=None)
@given(corpora, st.integers(0, 100))
def test_repo_disjoint_partition(recs, seed):
    if len({r.repo_id for r in recs}) < 2:
        return
    train, test = repo_disjoint_split(recs, 0.8, seed)
    assert train and test
    assert not {r.repo_id for r in train} & {r.repo_id for r in test}
    assert sorted(r.id for r in train + test) == sorted(r.id for r in recs)
    assert (train, test) == repo_disjoint_split(recs, 0.8, seed)


@settings(max_examples=100, deadline=None)
@given(corpora)
def test_loao_folds(recs):
    agents = sorted({r.agent_name for r in recs})
    if len(agents) < 2:
        return
    folds = loao_folds(recs)
    assert [a for a, _, _ in folds] == agents
    for agent, train, test in folds:
        assert {r.agent_name for r in test} == {agent}
        assert agent not in {r.agent_name for r in train}
        assert len(train) + len(test) == len(recs)


def test_random_split_deterministic():
    recs = _corpus([(i, "a", "Codex") for i in range(20)])
    assert random_split(recs, 0.8, 3) == random_split(recs, 0.8, 3)
    train, test = random_split(recs, 0.8, 3)
    assert len(train) == 16 and len(test) == 4


def test_quartile_examples():
    assert size_quartile_bounds(range(1, 101)) == (25, 50, 75)
    strata = size_quartile_strata(list(range(1, 101)))
    assert [len(s.indices) for s in strata] == [25, 25, 25, 25]
    assert strata[0].label() == "<= 25" and strata[3].label() == "> 75"
    assert strata[1].label() == "(25, 50]"


@given(st.lists(st.integers(0, 10**6), min_size=4, max_size=300, unique=True))
def test_quartiles_balanced_for_distinct_sizes(sizes):
    strata = size_quartile_strata(sizes)
    assert sum(len(s.indices) for s in strata) == len(sizes)
    for s in strata:
        assert abs(len(s.indices) - len(sizes) / 4) <= 1


@given(st.lists(st.integers(0, 5), min_size=1, max_size=100))
def test_quartiles_cover_with_ties(sizes):
    strata = size_quartile_strata(sizes)
    covered = sorted(i for s in strata for i in s.indices)
    assert covered == list(range(len(sizes)))
