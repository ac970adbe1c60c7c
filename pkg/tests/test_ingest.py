import io
import json
import threading
import time

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from prtriage.core import AuthorKind, CIStatus, EventAuthor, EventKind, PRState
from prtriage.ingest import (
    AgentRegistry,
    CorpusError,
    ForgeClient,
    MappingError,
    NotFoundError,
    RateLimitedError,
    classify_author,
    fetch_pull_request,
    parse_corpus,
    record_to_dict,
    serialize_record,
    write_corpus,
)

from factories import T0, bot, human, make_pr


@pytest.mark.parametrize(
    "login,flag,kind",
    [
        ("codex[bot]", "Bot", AuthorKind.GENERATIVE_AGENT),
        ("Copilot", "Bot", AuthorKind.GENERATIVE_AGENT),
        ("dependabot[bot]", "Bot", AuthorKind.DETERMINISTIC_BOT),
        ("renovate[bot]", "User", AuthorKind.DETERMINISTIC_BOT),
        ("alice", "User", AuthorKind.HUMAN),
        ("codex-fan", "User", AuthorKind.HUMAN),
        ("mystery-bot[bot]", "Bot", AuthorKind.HUMAN),
    ],
)
def test_classify_author(login, flag, kind):
    assert classify_author(login, flag) is kind


@given(login=st.text(max_size=20), flag=st.sampled_from(["Bot", "User", "Organization", ""]))
def test_empty_denylist_never_yields_deterministic(login, flag):
    reg = AgentRegistry({"Codex": ("codex",)}, ())
    assert classify_author(login, flag, reg) is not AuthorKind.DETERMINISTIC_BOT


def _lines(records):
    buf = io.StringIO()
    write_corpus(records, buf)
    return buf.getvalue()


def test_parse_three_valid_lines():
    text = _lines([make_pr(id=f"o/r#{i}") for i in range(3)])
    records, diags = parse_corpus(io.BytesIO(text.encode()))
    assert len(records) == 3 and diags == []


def test_truncated_line_is_skipped_with_diagnostic():
    lines = _lines([make_pr(id="a"), make_pr(id="b")]).splitlines()
    lines.insert(1, lines[0][: len(lines[0]) // 2])
    records, diags = parse_corpus(io.StringIO("\n".join(lines) + "\n"))
    assert [r.id for r in records] == ["a", "b"]
    assert len(diags) == 1 and diags[0].startswith("line 2:")


def test_strict_mode_aborts_with_line_number():
    text = _lines([make_pr()]) + "{not json\n"
    with pytest.raises(CorpusError) as exc:
        parse_corpus(io.StringIO(text), strict=True)
    assert exc.value.line_no == 2


def test_empty_stream():
    assert parse_corpus(io.BytesIO(b"")) == ([], [])


def test_invalid_record_is_diagnosed():
    obj = record_to_dict(make_pr())
    obj["total_additions"] += 3
    records, diags = parse_corpus(io.StringIO(json.dumps(obj) + "\n"))
    assert records == [] and "total_additions" in diags[0]


def test_raw_forge_author_type_is_classified():
    obj = record_to_dict(make_pr())
    obj["author_type"] = "Bot"
    obj["agent_name"] = "devin-ai-integration[bot]"
    (rec,), _ = parse_corpus([json.dumps(obj)])
    assert rec.author_kind is AuthorKind.GENERATIVE_AGENT
    assert rec.agent_name == "Devin"


event = st.tuples(st.sampled_from(["review", "comment"]), st.sampled_from(["human", "bot"]), st.integers(0, 10**6))


@settings(max_examples=50, deadline=None)
@given(
    files=st.lists(
        st.tuples(st.text("abc/._-xyz", min_size=1, max_size=12), st.integers(0, 999), st.integers(0, 999)),
        max_size=4,
    ),
    events=st.lists(event, max_size=5),
    state=st.sampled_from(list(PRState)),
    body=st.text(max_size=40),
    ci=st.sampled_from(list(CIStatus)),
    linked=st.booleans(),
)
def test_corpus_roundtrip(files, events, state, body, ci, linked):
    pr = make_pr(files=files, events=events, state=state, body=body, ci_status=ci, linked_issue=linked)
    text = serialize_record(pr) + "\n"
    (back,), diags = parse_corpus(io.StringIO(text))
    assert diags == []
    assert back == pr
    assert serialize_record(back) + "\n" == text


# -- forge client against a scripted transport ---------------------------------------

PR_PAYLOAD = {
    "number": 7,
    "state": "closed",
    "title": "Add retry logic",
    "body": "Plan:\n1. add retry\n\nFixes #12",
    "user": {"login": "codex[bot]", "type": "Bot"},
    "created_at": "2025-03-01T10:00:00Z",
    "merged_at": "2025-03-02T10:00:00Z",
    "closed_at": "2025-03-02T10:00:00Z",
    "additions": 15,
    "deletions": 3,
    "base": {"repo": {"language": "Python"}},
}
FILES = [
    {"filename": "src/retry.py", "additions": 12, "deletions": 3},
    {"filename": "tests/test_retry.py", "additions": 3, "deletions": 0},
]
TIMELINE = [
    {"event": "commented", "user": {"login": "ci-helper", "type": "Bot"}, "created_at": "2025-03-01T10:05:00Z"},
    {"event": "reviewed", "user": {"login": "maint", "type": "User"}, "submitted_at": "2025-03-01T12:00:00Z"},
    {"event": "labeled", "actor": {"login": "maint", "type": "User"}, "created_at": "2025-03-01T12:01:00Z"},
    {"event": "commented", "user": {"login": "maint", "type": "User"}, "created_at": "2025-03-01T13:00:00Z"},
]
COMMITS = [
    {"sha": "b" * 40, "commit": {"committer": {"date": "2025-03-01T15:00:00Z"}}},
    {"sha": "a" * 40, "commit": {"committer": {"date": "2025-03-01T10:00:00Z"}}},
]


def _router(overrides=None):
    routes = {
        "/repos/o/r/pulls/7": PR_PAYLOAD,
        "/repos/o/r/pulls/7/files": FILES,
        "/repos/o/r/issues/7/timeline": TIMELINE,
        "/repos/o/r/pulls/7/commits": COMMITS,
    }
    routes.update(overrides or {})

    def handler(request: httpx.Request) -> httpx.Response:
        if request.url.path not in routes:
            return httpx.Response(404, json={"message": "Not Found"})
        return httpx.Response(200, json=routes[request.url.path])

    return handler


def _client(handler, **kw):
    return ForgeClient(base_url="https://forge.test", transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw)


def test_golden_fixture_maps_every_field():
    with _client(_router()) as client:
        rec = client.fetch_pull_request("o/r", 7)
    assert rec.id == "o/r#7"
    assert rec.agent_name == "Codex" and rec.author_kind is AuthorKind.GENERATIVE_AGENT
    assert rec.state is PRState.MERGED
    assert rec.merged_at - rec.created_at == 86400
    assert [f.path for f in rec.files] == ["src/retry.py", "tests/test_retry.py"]
    assert (rec.total_additions, rec.total_deletions) == (15, 3)
    assert [(e.kind, e.author_kind) for e in rec.timeline] == [
        (EventKind.COMMENT, EventAuthor.BOT),
        (EventKind.REVIEW, EventAuthor.HUMAN),
        (EventKind.COMMENT, EventAuthor.HUMAN),
    ]
    assert [c.sha[0] for c in rec.commits] == ["a", "b"]
    assert rec.linked_issue and rec.primary_language == "Python"


def test_not_found():
    with _client(_router()) as client, pytest.raises(NotFoundError):
        client.fetch_pull_request("o/r", 8)


def test_rate_limit_then_success_records_backoff():
    calls = {"n": 0}
    inner = _router()

    def handler(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            return httpx.Response(403, headers={"X-RateLimit-Remaining": "0"}, json={})
        return inner(request)

    with _client(handler) as client:
        rec = client.fetch_pull_request("o/r", 7)
    assert rec.id == "o/r#7"
    assert client.backoffs == [1.0, 2.0]


def test_persistent_rate_limit_raises():
    with _client(lambda r: httpx.Response(429), max_retries=3) as client:
        with pytest.raises(RateLimitedError):
            client.fetch_pull_request("o/r", 7)
        assert client.backoffs == [1.0, 2.0, 4.0]


def test_backoff_is_capped():
    with _client(lambda r: httpx.Response(429), max_retries=4, backoff_cap=3.0) as client:
        with pytest.raises(RateLimitedError):
            client.fetch_pull_request("o/r", 7)
    assert client.backoffs == [1.0, 2.0, 3.0, 3.0]


def test_schema_drift_names_missing_field():
    drifted = {k: v for k, v in PR_PAYLOAD.items() if k != "additions"}
    with _client(_router({"/repos/o/r/pulls/7": drifted})) as client:
        with pytest.raises(MappingError) as exc:
            client.fetch_pull_request("o/r", 7)
    assert exc.value.field_path == "additions"


def test_pagination_follows_link_header():
    def handler(request):
        path = request.url.path
        if path == "/repos/o/r/pulls/7/files":
            if request.url.params.get("page") == "2":
                return httpx.Response(200, json=FILES[1:])
            return httpx.Response(
                200, json=FILES[:1], headers={"Link": '<https://forge.test/repos/o/r/pulls/7/files?page=2>; rel="next"'}
            )
        return _router()(request)

    with _client(handler) as client:
        rec = client.fetch_pull_request("o/r", 7)
    assert len(rec.files) == 2


def test_token_comes_from_environment(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request.headers.get("Authorization"))
        return _router()(request)

    monkeypatch.setenv("CB_FORGE_TOKEN", "s3cret")
    rec = fetch_pull_request("o/r", 7, base_url="https://forge.test", transport=httpx.MockTransport(handler))
    assert rec.id == "o/r#7"
    assert set(seen) == {"Bearer s3cret"}


def test_in_flight_requests_are_bounded():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}
    inner = _router()

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.01)
        with lock:
            state["now"] -= 1
        return inner(request)

    with _client(handler, max_in_flight=2) as client:
        threads = [threading.Thread(target=client.fetch_pull_request, args=("o/r", 7)) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert 1 <= state["peak"] <= 2
