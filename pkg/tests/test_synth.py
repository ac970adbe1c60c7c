import io
import math

import numpy as np
import pytest

from prtriage.core import PRState, validate_record
from prtriage.eval.regimes import agent_stats
from prtriage.features import detect_plan
from prtriage.ingest import parse_corpus, serialize_record, write_corpus
from prtriage.labeling import Ghosting, ghosting_label, instant_merge
from prtriage.synth import (
    DEFAULT_AGENT_MIX,
    SynthError,
    SynthParams,
    generate_corpus,
    planted_signal_corpus,
    poisson_inverse,
    spearman,
)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(SynthParams(n_prs=10_000, seed=11))


def within_3sigma(k: int, n: int, p: float) -> bool:
    return abs(k - n * p) <= 3 * math.sqrt(n * p * (1 - p)) + 1


def _dump(records) -> str:
    buf = io.StringIO()
    write_corpus(records, buf)
    return buf.getvalue()


def test_same_seed_same_bytes():
    p = SynthParams(n_prs=300, seed=5)
    assert _dump(generate_corpus(p)) == _dump(generate_corpus(p))
    assert _dump(generate_corpus(p)) != _dump(generate_corpus(SynthParams(n_prs=300, seed=6)))
    a, lam_a, y_a = planted_signal_corpus(p)
    b, lam_b, y_b = planted_signal_corpus(p)
    assert _dump(a) == _dump(b) and np.array_equal(lam_a, lam_b) and np.array_equal(y_a, y_b)


def test_records_valid_and_round_trip(corpus):
    sample = corpus[:500]
    assert all(validate_record(r) == [] for r in sample)
    parsed, diags = parse_corpus(io.StringIO(_dump(sample)))
    assert diags == [] and parsed == sample
    assert all(serialize_record(a) == serialize_record(b) for a, b in zip(parsed, sample))


def test_no_instant_regime():
    recs = generate_corpus(SynthParams(n_prs=500, instant_fraction=0.0, seed=2))
    assert not any(instant_merge(r) for r in recs)


def test_instant_regime_shape(corpus):
    instant = [r for r in corpus if instant_merge(r)]
    assert len(instant) == 2830
    assert all(r.state is PRState.MERGED and not r.timeline for r in instant)


def test_rates_within_binomial_bounds(corpus):
    n = len(corpus)
    total = sum(DEFAULT_AGENT_MIX.values())
    for agent, w in DEFAULT_AGENT_MIX.items():
        assert within_3sigma(sum(r.agent_name == agent for r in corpus), n, w / total), agent

    normal = [r for r in corpus if not instant_merge(r)]
    merged = sum(r.state is PRState.MERGED for r in normal)
    assert within_3sigma(merged, len(normal), 0.687)
    assert within_3sigma(sum(detect_plan(r.body) for r in corpus), n, 0.35)
    assert within_3sigma(sum(r.linked_issue for r in corpus), n, 0.3)

    rates = SynthParams().agent_ghosting_rates
    for agent, _total, _i, applicable, ghosted, _g, _a in agent_stats(corpus):
        if agent in rates and applicable >= 200:
            assert within_3sigma(ghosted, applicable, rates[agent]), agent


def test_ghosted_prs_are_silent_after_feedback(corpus):
    for r in corpus:
        if ghosting_label(r) is Ghosting.GHOSTED:
            last = r.human_events()[-1].timestamp
            assert all(c.timestamp <= last for c in r.commits)


def test_effort_tracks_size(corpus):
    normal = [r for r in corpus if not instant_merge(r)]
    rho = spearman([r.total_changes for r in normal], [len(r.timeline) for r in normal])
    assert 0.5 <= rho <= 0.7


def test_param_errors():
    for bad in (
        dict(instant_fraction=1.2),
        dict(normal_median_changes=0),
        dict(n_prs=0),
        dict(effort_size_correlation=1.0),
        dict(agent_mix={"Codex": 0}),
        dict(agent_mix={"Nobody": 1}),
        dict(agent_ghosting_rates={"Codex": -0.1, "Claude": 0, "Devin": 0, "Copilot": 0}),
    ):
        with pytest.raises(SynthError):
            SynthParams(**bad)
    with pytest.raises(SynthError):
        planted_signal_corpus(SynthParams(n_prs=100), signal_strength=-1)


def test_per_agent_instant_override():
    p = SynthParams(n_prs=4000, seed=3, agent_instant_rates={"Codex": 0.6, "Claude": 0.0, "Devin": 0.0, "Copilot": 0.0})
    recs = generate_corpus(p)
    codex = [r for r in recs if r.agent_name == "Codex"]
    others = [r for r in recs if r.agent_name != "Codex"]
    assert within_3sigma(sum(instant_merge(r) for r in codex), len(codex), 0.6)
    assert not any(instant_merge(r) for r in others)


def test_poisson_inverse_matches_distribution():
    rng = np.random.default_rng(0)
    draws = poisson_inverse(rng.random(200_000), np.full(200_000, 3.0))
    assert abs(draws.mean() - 3.0) < 0.02 and abs(draws.var() - 3.0) < 0.05
    assert poisson_inverse(np.array([0.5]), np.array([0.0]))[0] == 0


def test_planted_labels_follow_quantile():
    recs, lam, y = planted_signal_corpus(SynthParams(n_prs=2000, seed=4))
    assert len(recs) == len(lam) == len(y) == 2000
    assert 0.1 <= y.mean() <= 0.2
    effort = np.array([len(r.timeline) for r in recs])
    assert spearman(lam, effort) > 0.3
