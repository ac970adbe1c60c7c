"""Corpus loading, author classification and the forge REST client."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import IO, Callable, Iterable

import httpx

from .config import DEFAULT_CONFIG, Config
from .core import (
    AuthorKind,
    CIStatus,
    Commit,
    EventAuthor,
    EventKind,
    FileChange,
    InteractionEvent,
    PRState,
    PullRequestRecord,
    format_timestamp,
    parse_timestamp,
    validate_record,
)

logger = logging.getLogger(__name__)

CORPUS_FIELDS = (
    "id",
    "repo_id",
    "agent_name",
    "author_type",
    "created_at",
    "merged_at",
    "closed_at",
    "state",
    "title",
    "body",
    "total_additions",
    "total_deletions",
    "files",
    "commits",
    "timeline",
    "ci_status",
    "linked_issue",
    "primary_language",
)


class CorpusError(ValueError):
    """A malformed corpus line in strict mode."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class AgentRegistry:
    generative_patterns: dict  # canonical name -> substrings
    deterministic_patterns: tuple[str, ...]

    @classmethod
    def from_config(cls, config: Config = DEFAULT_CONFIG) -> "AgentRegistry":
        return cls(dict(config.agent_patterns), tuple(config.deterministic_patterns))

    def canonical_agent(self, login: str) -> str | None:
        name = _strip_bot_suffix(login).lower()
        for canonical, pats in self.generative_patterns.items():
            if any(p in name for p in pats):
                return canonical
        return None

    def is_deterministic(self, login: str) -> bool:
        name = _strip_bot_suffix(login).lower()
        return any(p in name for p in self.deterministic_patterns)


DEFAULT_REGISTRY = AgentRegistry.from_config()


def _strip_bot_suffix(login: str) -> str:
    return login[:-5] if login.lower().endswith("[bot]") else login


def classify_author(login: str, forge_type_flag: str, registry: AgentRegistry = DEFAULT_REGISTRY) -> AuthorKind:
    # The denylist wins: maintenance bots are excluded even if a name also looks generative.
    if registry.is_deterministic(login):
        return AuthorKind.DETERMINISTIC_BOT
    if forge_type_flag == "Bot" and registry.canonical_agent(login) is not None:
        return AuthorKind.GENERATIVE_AGENT
    return AuthorKind.HUMAN


# -- corpus codec -----------------------------------------------------------


def record_to_dict(record: PullRequestRecord) -> dict:
    return {
        "id": record.id,
        "repo_id": record.repo_id,
        "agent_name": record.agent_name,
        "author_type": record.author_kind.value,
        "created_at": format_timestamp(record.created_at),
        "merged_at": format_timestamp(record.merged_at),
        "closed_at": format_timestamp(record.closed_at),
        "state": record.state.value,
        "title": record.title,
        "body": record.body,
        "total_additions": record.total_additions,
        "total_deletions": record.total_deletions,
        "files": [{"path": f.path, "additions": f.additions, "deletions": f.deletions} for f in record.files],
        "commits": [{"timestamp": format_timestamp(c.timestamp), "sha": c.sha} for c in record.commits],
        "timeline": [
            {"kind": e.kind.value, "author_kind": e.author_kind.value, "timestamp": format_timestamp(e.timestamp)}
            for e in record.timeline
        ],
        "ci_status": record.ci_status.value,
        "linked_issue": record.linked_issue,
        "primary_language": record.primary_language,
    }


def _int(obj: dict, key: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"{key} must be an integer, got {v!r}")
    return v


def record_from_dict(obj: dict, registry: AgentRegistry = DEFAULT_REGISTRY) -> PullRequestRecord:
    missing = [k for k in CORPUS_FIELDS if k not in obj]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    author_type = obj["author_type"]
    if author_type in ("Bot", "User", "Organization"):
        # Raw forge flag rather than an already-classified kind.
        author_kind = classify_author(obj["agent_name"], author_type, registry)
    else:
        author_kind = AuthorKind(author_type)
    agent = registry.canonical_agent(obj["agent_name"]) or obj["agent_name"]
    record = PullRequestRecord(
        id=str(obj["id"]),
        repo_id=str(obj["repo_id"]),
        agent_name=agent,
        author_kind=author_kind,
        created_at=parse_timestamp(obj["created_at"]),
        merged_at=parse_timestamp(obj["merged_at"]),
        closed_at=parse_timestamp(obj["closed_at"]),
        state=PRState(obj["state"]),
        title=obj["title"] or "",
        body=obj["body"] or "",
        total_additions=_int(obj, "total_additions"),
        total_deletions=_int(obj, "total_deletions"),
        files=tuple(FileChange(f["path"], _int(f, "additions"), _int(f, "deletions")) for f in obj["files"]),
        commits=tuple(Commit(parse_timestamp(c["timestamp"]), c["sha"]) for c in obj["commits"]),
        timeline=tuple(
            InteractionEvent(EventKind(e["kind"]), EventAuthor(e["author_kind"]), parse_timestamp(e["timestamp"]))
            for e in obj["timeline"]
        ),
        ci_status=CIStatus(obj["ci_status"] or "none"),
        linked_issue=bool(obj["linked_issue"]),
        primary_language=obj["primary_language"] or "",
    )
    if record.created_at is None:
        raise ValueError("created_at missing")
    problems = validate_record(record)
    if problems:
        raise ValueError("; ".join(problems))
    return record


def parse_corpus(
    source: IO[bytes] | IO[str] | Iterable,
    strict: bool = False,
    registry: AgentRegistry = DEFAULT_REGISTRY,
) -> tuple[list[PullRequestRecord], list[str]]:
    """Read newline-delimited JSON records.

    Bad lines are skipped with a ``"line N: reason"`` diagnostic, or raise
    :class:`CorpusError` on the first one when ``strict`` is set. Blank lines
    are ignored silently.
    """
    records: list[PullRequestRecord] = []
    diagnostics: list[str] = []
    for line_no, raw in enumerate(source, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("record is not a JSON object")
            records.append(record_from_dict(obj, registry))
        except (ValueError, KeyError, TypeError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            if strict:
                raise CorpusError(line_no, msg) from None
            diagnostics.append(f"line {line_no}: {msg}")
    return records, diagnostics


def serialize_record(record: PullRequestRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False, separators=(",", ":"))


def write_corpus(records: Iterable[PullRequestRecord], sink: IO[str]) -> None:
    for r in records:
        sink.write(serialize_record(r))
        sink.write("\n")


def read_corpus_file(path, strict: bool = False, registry: AgentRegistry = DEFAULT_REGISTRY):
    with open(path, "rb") as fh:
        return parse_corpus(fh, strict=strict, registry=registry)


# -- forge client -------------------------------------------------------------


class ForgeError(RuntimeError):
    pass


class NotFoundError(ForgeError):
    pass


class RateLimitedError(ForgeError):
    pass


class MappingError(ForgeError):
    """An API payload lacks a field the record mapping needs."""

    def __init__(self, field_path: str):
        super().__init__(f"payload missing field {field_path!r}")
        self.field_path = field_path


_ISSUE_LINK = re.compile(r"\b(close[sd]?|fix(e[sd])?|resolve[sd]?)\s+([\w.-]+/[\w.-]+)?#\d+", re.IGNORECASE)


def _get(obj, path: str):
    cur = obj
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise MappingError(path)
        cur = cur[part]
    return cur


def map_payloads(
    repo: str,
    number: int,
    pr: dict,
    files: list[dict],
    timeline: list[dict],
    commits: list[dict],
    registry: AgentRegistry = DEFAULT_REGISTRY,
) -> PullRequestRecord:
    """Deterministic mapping from REST payloads to a record."""
    login = _get(pr, "user.login")
    merged_at = parse_timestamp(_get(pr, "merged_at"))
    closed_at = parse_timestamp(_get(pr, "closed_at"))
    if merged_at is not None:
        state = PRState.MERGED
    elif _get(pr, "state") == "closed":
        state = PRState.REJECTED
    else:
        state = PRState.OPEN
    events = []
    for ev in timeline:
        kind = ev.get("event")
        if kind == "commented":
            ek, who, ts = EventKind.COMMENT, ev.get("user") or ev.get("actor"), ev.get("created_at")
        elif kind == "reviewed":
            ek, who, ts = EventKind.REVIEW, ev.get("user") or ev.get("actor"), ev.get("submitted_at")
        else:
            continue
        if who is None or ts is None:
            raise MappingError(f"timeline[{kind}].user/timestamp")
        author = EventAuthor.BOT if who.get("type") == "Bot" else EventAuthor.HUMAN
        events.append(InteractionEvent(ek, author, parse_timestamp(ts)))
    events.sort(key=lambda e: e.timestamp)
    mapped_commits = sorted(
        (Commit(parse_timestamp(_get(c, "commit.committer.date")), _get(c, "sha")) for c in commits),
        key=lambda c: c.timestamp,
    )
    body = pr.get("body") or ""
    base_repo = _get(pr, "base.repo")
    return PullRequestRecord(
        id=f"{repo}#{number}",
        repo_id=repo,
        agent_name=registry.canonical_agent(login) or login,
        author_kind=classify_author(login, _get(pr, "user.type"), registry),
        created_at=parse_timestamp(_get(pr, "created_at")),
        merged_at=merged_at,
        closed_at=closed_at,
        state=state,
        title=_get(pr, "title") or "",
        body=body,
        files=tuple(FileChange(_get(f, "filename"), _get(f, "additions"), _get(f, "deletions")) for f in files),
        total_additions=_get(pr, "additions"),
        total_deletions=_get(pr, "deletions"),
        commits=tuple(mapped_commits),
        timeline=tuple(events),
        ci_status=CIStatus.NONE,
        linked_issue=bool(_ISSUE_LINK.search(body)),
        primary_language=(base_repo or {}).get("language") or "",
    )


class ForgeClient:
    """Minimal REST client for the PR, files, timeline and commits endpoints.

    ``max_in_flight`` bounds concurrent requests across all threads sharing
    this client. Rate-limited responses (403 with an exhausted quota, or 429)
    are retried with exponential backoff up to ``max_retries`` times.
    """

    def __init__(
        self,
        base_url: str = "https://api.github.com",
        token: str | None = None,
        transport: httpx.BaseTransport | None = None,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 60.0,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        registry: AgentRegistry = DEFAULT_REGISTRY,
    ):
        token = token if token is not None else os.environ.get("CB_FORGE_TOKEN")
        headers = {"Accept": "application/vnd.github+json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=base_url, headers=headers, transport=transport, timeout=30.0)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self.backoffs: list[float] = []
        self.registry = registry

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @staticmethod
    def _rate_limited(resp: httpx.Response) -> bool:
        if resp.status_code == 429:
            return True
        return resp.status_code == 403 and resp.headers.get("X-RateLimit-Remaining") == "0"

    def _get_json(self, url: str, params: dict | None = None):
        for attempt in range(self.max_retries + 1):
            with self._slots:
                resp = self._client.get(url, params=params)
            if resp.status_code == 404:
                raise NotFoundError(f"not found: {url}")
            if self._rate_limited(resp):
                if attempt == self.max_retries:
                    break
                delay = min(self.backoff_cap, self.backoff_base * 2**attempt)
                with self._lock:
                    self.backoffs.append(delay)
                logger.warning("rate limited on %s, backing off %.1fs", url, delay)
                self._sleep(delay)
                continue
            if resp.status_code >= 400:
                raise ForgeError(f"HTTP {resp.status_code} for {url}")
            return resp.json(), resp.links.get("next", {}).get("url")
        raise RateLimitedError(f"rate limit persisted after {self.max_retries} retries: {url}")

    def _get_all(self, url: str) -> list:
        items: list = []
        next_url, params = url, {"per_page": 100}
        while next_url:
            page, next_url = self._get_json(next_url, params)
            params = None
            items.extend(page)
        return items

    def fetch_pull_request(self, repo: str, number: int) -> PullRequestRecord:
        pr, _ = self._get_json(f"/repos/{repo}/pulls/{number}")
        files = self._get_all(f"/repos/{repo}/pulls/{number}/files")
        timeline = self._get_all(f"/repos/{repo}/issues/{number}/timeline")
        commits = self._get_all(f"/repos/{repo}/pulls/{number}/commits")
        return map_payloads(repo, number, pr, files, timeline, commits, self.registry)


def fetch_pull_request(repo: str, number: int, credentials: str | None = None, **client_kwargs) -> PullRequestRecord:
    with ForgeClient(token=credentials, **client_kwargs) as client:
        return client.fetch_pull_request(repo, number)
