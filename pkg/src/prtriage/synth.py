"""Synthetic two-regime PR corpora with known structure.

Each PR is drawn from one of two regimes. Instant PRs merge within a minute,
are smaller, rarely touch configuration and get no review traffic. Normal
PRs are larger, touch configuration more often, collect review and comment
events whose count rises with patch size, merge at the configured acceptance
rate, and when rejected after human feedback may be abandoned at a per-agent
rate.

Patch sizes are log-normal around the regime medians. Effort counts are
Poisson with a log link on standardized log size, a config-touch term and a
no-plan term. The size slope is solved by bisection so that the Spearman
correlation between size and effort in the normal regime hits
``effort_size_correlation``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

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
)
from .eval.metrics import average_ranks
from .labeling import DAY, high_cost_threshold

# Per-agent PR counts in the reference corpus, used as mixing weights.
DEFAULT_AGENT_MIX = {"Codex": 21799, "Claude": 523, "Devin": 4827, "Copilot": 5017}
DEFAULT_GHOSTING = {"Codex": 0.100, "Claude": 0.031, "Devin": 0.009, "Copilot": 0.023}
DEFAULT_LANGUAGES = {
    "Python": 0.30,
    "TypeScript": 0.22,
    "JavaScript": 0.12,
    "Go": 0.08,
    "Rust": 0.05,
    "Java": 0.05,
    "C++": 0.03,
    "C#": 0.03,
    "Ruby": 0.02,
    "PHP": 0.02,
    "Kotlin": 0.04,
    "Swift": 0.04,
}
START_TS = 1_735_689_600  # 2025-01-01T00:00:00Z

_EXT = {
    "Python": "py", "TypeScript": "ts", "JavaScript": "js", "Go": "go", "Rust": "rs", "Java": "java",
    "C++": "cpp", "C#": "cs", "Ruby": "rb", "PHP": "php", "Kotlin": "kt", "Swift": "swift",
}
_COMPONENTS = ("src", "lib", "api", "core", "web", "cli", "server", "utils")
_MODULES = ("parser", "client", "models", "handlers", "config_loader", "auth", "cache", "router", "views", "schema")
_CONFIG_FILES = ("config/settings.yaml", "docker-compose.yml", "Dockerfile", "setup.cfg", "Makefile", "app.ini")
_CI_FILES = (".github/workflows/ci.yml", ".github/workflows/release.yml", ".gitlab-ci.yml")
_DEPS_FILES = ("package.json", "requirements.txt", "go.mod")
_LOCK_FILES = ("package-lock.json", "yarn.lock", "go.sum", "poetry.lock")
_DOC_FILES = ("README.md", "docs/guide.md", "CHANGELOG.md")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthParams:
    n_prs: int = 10_000
    seed: int = 0
    instant_fraction: float = 0.283
    instant_median_changes: float = 68.0
    normal_median_changes: float = 104.0
    size_sigma: float = 1.0
    instant_config_rate: float = 0.071
    normal_config_rate: float = 0.184
    effort_size_correlation: float = 0.6
    effort_mean: float = 3.0
    config_effort_effect: float = 0.4
    no_plan_effort_effect: float = 0.3
    bot_event_rate: float = 0.05
    agent_mix: dict = field(default_factory=lambda: dict(DEFAULT_AGENT_MIX))
    agent_ghosting_rates: dict = field(default_factory=lambda: dict(DEFAULT_GHOSTING))
    agent_instant_rates: dict | None = None
    acceptance_rate_non_instant: float = 0.687
    open_fraction: float = 0.0
    plan_rate: float = 0.35
    plan_ghosting_factor: float = 0.4
    linked_issue_rate: float = 0.3
    n_repos: int | None = None
    span_days: int = 180

    def __post_init__(self):
        fractions = {
            "instant_fraction": self.instant_fraction,
            "instant_config_rate": self.instant_config_rate,
            "normal_config_rate": self.normal_config_rate,
            "bot_event_rate": self.bot_event_rate,
            "acceptance_rate_non_instant": self.acceptance_rate_non_instant,
            "open_fraction": self.open_fraction,
            "plan_rate": self.plan_rate,
            "plan_ghosting_factor": self.plan_ghosting_factor,
            "linked_issue_rate": self.linked_issue_rate,
        }
        for name, v in fractions.items():
            if not 0 <= v <= 1:
                raise SynthError(f"{name} must lie in [0, 1], got {v}")
        for agent, v in {**self.agent_ghosting_rates, **(self.agent_instant_rates or {})}.items():
            if not 0 <= v <= 1:
                raise SynthError(f"rate for {agent} must lie in [0, 1], got {v}")
        if self.instant_median_changes <= 0 or self.normal_median_changes <= 0:
            raise SynthError("median changes must be positive")
        if self.n_prs < 1:
            raise SynthError("n_prs must be positive")
        if not 0 <= self.effort_size_correlation < 1:
            raise SynthError("effort_size_correlation must lie in [0, 1)")
        if self.effort_mean <= 0 or self.size_sigma <= 0:
            raise SynthError("effort_mean and size_sigma must be positive")
        if not self.agent_mix or any(w <= 0 for w in self.agent_mix.values()):
            raise SynthError("agent_mix needs positive weights")
        if set(self.agent_mix) - set(self.agent_ghosting_rates):
            raise SynthError("every agent in agent_mix needs a ghosting rate")


def poisson_inverse(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Poisson quantile function; lets callers share uniforms across rates."""
    u = np.asarray(u, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), u.shape)
    k = np.zeros(u.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    pending = u > cdf
    step = 0
    while pending.any() and step < 10_000:
        step += 1
        k[pending] += 1
        p = np.where(pending, p * lam / np.maximum(k, 1), p)
        cdf = np.where(pending, cdf + p, cdf)
        pending = pending & (u > cdf) & (p > 0)
    return k


def spearman(a, b) -> float:
    ra = average_ranks(np.asarray(a, dtype=float))
    rb = average_ranks(np.asarray(b, dtype=float))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float((ra**2).sum() * (rb**2).sum()))
    return float((ra * rb).sum() / denom) if denom else 0.0


def _log_rate(z, cfg, no_plan, slope, params: SynthParams):
    return slope * z + params.config_effort_effect * cfg + params.no_plan_effort_effect * no_plan


def _intercept(slope: float, params: SynthParams) -> float:
    # Mean of exp(slope*z) with z ~ N(0,1) is exp(slope^2/2); the Bernoulli terms average analytically.
    cfg_mean = 1 - params.normal_config_rate + params.normal_config_rate * math.exp(params.config_effort_effect)
    plan_mean = params.plan_rate + (1 - params.plan_rate) * math.exp(params.no_plan_effort_effect)
    return math.log(params.effort_mean) - slope**2 / 2 - math.log(cfg_mean * plan_mean)


@functools.lru_cache(maxsize=64)
def _calibrated_slope(target, effort_mean, cfg_rate, cfg_eff, plan_rate, plan_eff, sigma) -> float:
    """Size slope whose normal-regime Spearman(size, effort) matches ``target``.

    Bisection on a fixed auxiliary sample with common random numbers, so the
    result is a deterministic function of the parameters.
    """
    p = SynthParams(
        effort_size_correlation=target,
        effort_mean=effort_mean,
        normal_config_rate=cfg_rate,
        config_effort_effect=cfg_eff,
        plan_rate=plan_rate,
        no_plan_effort_effect=plan_eff,
        size_sigma=sigma,
    )
    rng = np.random.default_rng(20_240_601)
    n = 20_000
    z = rng.standard_normal(n)
    cfg = (rng.random(n) < cfg_rate).astype(float)
    no_plan = (rng.random(n) >= plan_rate).astype(float)
    u = rng.random(n)

    def corr(slope):
        lam = np.exp(_intercept(slope, p) + _log_rate(z, cfg, no_plan, slope, p))
        return spearman(z, poisson_inverse(u, lam))

    # Correlation rises then falls as zeros pile up, so bracket on the rising side.
    best, best_value, prev = 0.0, -1.0, 0.0
    for step in np.linspace(0.0, 3.0, 31):
        value = corr(step)
        if value >= target:
            break
        if value > best_value:
            best, best_value = float(step), value
        prev = float(step)
    else:
        return best
    if step == 0:
        return 0.0
    lo, hi = prev, float(step)
    for _ in range(20):
        mid = (lo + hi) / 2
        if corr(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def effort_slope(params: SynthParams) -> float:
    return _calibrated_slope(
        params.effort_size_correlation,
        params.effort_mean,
        params.normal_config_rate,
        params.config_effort_effect,
        params.plan_rate,
        params.no_plan_effort_effect,
        params.size_sigma,
    )


def _exact_mask(rng, n: int, rate: float) -> np.ndarray:
    """Boolean mask with exactly round(rate*n) True entries at random positions."""
    k = int(round(rate * n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[:k]] = True
    return mask


@dataclass
class _Skeleton:
    """Per-PR draws shared by every effort model."""

    instant: np.ndarray
    agent: list
    repo: list
    language: list
    created: np.ndarray
    size: np.ndarray
    z: np.ndarray
    config: np.ndarray
    plan: np.ndarray
    linked: np.ndarray
    files: list


def _split_changes(rng, total: int, n_files: int) -> np.ndarray:
    if n_files == 1:
        return np.array([total])
    shares = rng.dirichlet(np.ones(n_files))
    return rng.multinomial(total, shares)


def _build_files(rng, total: int, language: str, config: bool, normal: bool) -> tuple[FileChange, ...]:
    ext = _EXT.get(language, "txt")
    paths = []
    n_src = 1 + rng.poisson(0.35 * math.log1p(total))
    for _ in range(n_src):
        comp = _COMPONENTS[rng.integers(len(_COMPONENTS))]
        mod = _MODULES[rng.integers(len(_MODULES))]
        paths.append(f"{comp}/{mod}.{ext}")
    if rng.random() < (0.35 if normal else 0.15):
        paths.append(f"tests/test_{_MODULES[rng.integers(len(_MODULES))]}.{ext}")
    if config:
        paths.append(_CONFIG_FILES[rng.integers(len(_CONFIG_FILES))])
    if rng.random() < (0.10 if normal else 0.04):
        paths.append(_CI_FILES[rng.integers(len(_CI_FILES))])
    if rng.random() < (0.08 if normal else 0.05):
        i = rng.integers(len(_DEPS_FILES))
        paths.append(_DEPS_FILES[i])
        if rng.random() < 0.5:
            paths.append(_LOCK_FILES[i])
    if rng.random() < 0.2:
        paths.append(_DOC_FILES[rng.integers(len(_DOC_FILES))])
    paths = list(dict.fromkeys(paths))  # dedupe, keep order
    changes = _split_changes(rng, total, len(paths))
    add_frac = rng.beta(5, 2)
    out = []
    for p, c in zip(paths, changes):
        adds = int(rng.binomial(int(c), add_frac))
        out.append(FileChange(p, adds, int(c) - adds))
    return tuple(out)


def _skeleton(params: SynthParams, rng) -> _Skeleton:
    n = params.n_prs
    agents = list(params.agent_mix)
    weights = np.array([params.agent_mix[a] for a in agents], dtype=float)
    agent_idx = rng.choice(len(agents), size=n, p=weights / weights.sum())
    agent = [agents[i] for i in agent_idx]

    if params.agent_instant_rates:
        rates = np.array([params.agent_instant_rates.get(a, params.instant_fraction) for a in agent])
        instant = rng.random(n) < rates
    else:
        instant = _exact_mask(rng, n, params.instant_fraction)

    n_repos = params.n_repos or max(20, n // 25)
    repo_w = 1.0 / np.arange(1, n_repos + 1) ** 0.8
    repo_idx = rng.choice(n_repos, size=n, p=repo_w / repo_w.sum())
    langs = list(DEFAULT_LANGUAGES)
    lang_w = np.array(list(DEFAULT_LANGUAGES.values()))
    repo_lang = [langs[i] for i in rng.choice(len(langs), size=n_repos, p=lang_w / lang_w.sum())]
    repo = [f"org{int(r) % 97}/repo-{int(r):04d}" for r in repo_idx]
    language = [repo_lang[r] for r in repo_idx]

    created = np.sort(START_TS + rng.integers(0, params.span_days * DAY, size=n))
    z = rng.standard_normal(n)
    median = np.where(instant, params.instant_median_changes, params.normal_median_changes)
    size = np.maximum(1, np.rint(np.exp(np.log(median) + params.size_sigma * z))).astype(np.int64)

    config = np.zeros(n, dtype=bool)
    for regime_mask, rate in ((instant, params.instant_config_rate), (~instant, params.normal_config_rate)):
        idx = np.flatnonzero(regime_mask)
        config[idx] = _exact_mask(rng, idx.size, rate)
    plan = rng.random(n) < params.plan_rate
    linked = rng.random(n) < params.linked_issue_rate
    files = [_build_files(rng, int(size[i]), language[i], bool(config[i]), not instant[i]) for i in range(n)]
    return _Skeleton(instant, agent, repo, language, created, size, z, config, plan, linked, files)


_WORDS = ("update", "refactor", "handle", "edge", "case", "module", "cleanup", "improve", "logic", "tests",
          "docs", "error", "path", "config", "support", "option", "add", "remove", "deprecated", "api")


def _body(rng, size: int, plan: bool, linked: bool) -> str:
    n_words = 8 + rng.poisson(4 * math.log1p(size))
    text = " ".join(_WORDS[i] for i in rng.integers(len(_WORDS), size=n_words)).capitalize() + "."
    if plan:
        style = rng.integers(3)
        if style == 0:
            text += "\n\nPlan:\n1. Reproduce the issue\n2. Apply the fix\n3. Add tests"
        elif style == 1:
            text += "\n\n## Steps\n- [ ] update code\n- [ ] run tests"
        else:
            text += "\n\n**Steps:** refactor, test, document"
    if linked:
        text += f"\n\nFixes #{int(rng.integers(1, 5000))}"
    return text


def _title(rng) -> str:
    return " ".join(_WORDS[i] for i in rng.integers(len(_WORDS), size=3 + rng.integers(5))).capitalize()


def _events(rng, start: int, count: int, bot_rate: float) -> tuple[InteractionEvent, ...]:
    out = []
    t = start
    for _ in range(count):
        t += 60 + int(rng.exponential(6 * 3600))
        kind = EventKind.REVIEW if rng.random() < 0.4 else EventKind.COMMENT
        who = EventAuthor.BOT if rng.random() < bot_rate else EventAuthor.HUMAN
        out.append(InteractionEvent(kind, who, t))
    return tuple(out)


def _sha(rng) -> str:
    return rng.bytes(20).hex()


def _assemble(params: SynthParams, sk: _Skeleton, effort: np.ndarray, rng, events_for_instant: bool):
    n = params.n_prs
    ghost_base = {}
    denom = params.plan_rate * params.plan_ghosting_factor + (1 - params.plan_rate)
    for a, r in params.agent_ghosting_rates.items():
        no_plan_rate = min(1.0, r / denom) if denom > 0 else r
        ghost_base[a] = (no_plan_rate * params.plan_ghosting_factor, no_plan_rate)
    records = []
    for i in range(n):
        created = int(sk.created[i])
        files = sk.files[i]
        adds = sum(f.additions for f in files)
        dels = sum(f.deletions for f in files)
        commits = [Commit(created, _sha(rng))]
        body = _body(rng, int(sk.size[i]), bool(sk.plan[i]), bool(sk.linked[i]))
        ci = CIStatus.PASS if rng.random() < 0.8 else CIStatus.FAIL
        merged_at = closed_at = None
        if sk.instant[i]:
            merged_at = closed_at = created + int(rng.integers(5, 60))
            state = PRState.MERGED
            timeline = _events(rng, created, int(effort[i]), params.bot_event_rate) if events_for_instant else ()
        else:
            timeline = _events(rng, created, int(effort[i]), params.bot_event_rate)
            last_event = timeline[-1].timestamp if timeline else created
            human_times = [e.timestamp for e in timeline if e.author_kind is EventAuthor.HUMAN]
            u = rng.random()
            if u < params.open_fraction:
                state = PRState.OPEN
            elif rng.random() < params.acceptance_rate_non_instant:
                state = PRState.MERGED
            else:
                state = PRState.REJECTED
            if state is PRState.REJECTED and human_times:
                f = human_times[-1]
                lo, hi = ghost_base[sk.agent[i]]
                ghost = rng.random() < (lo if sk.plan[i] else hi)
                for e in human_times[:-1]:
                    if rng.random() < 0.6:
                        ts = e + 60 + int(rng.exponential(3 * 3600))
                        # A ghosted PR must stay silent after its last feedback.
                        if not (ghost and ts > f):
                            commits.append(Commit(ts, _sha(rng)))
                if ghost:
                    closed_at = f + int(rng.uniform(15, 60) * DAY)
                else:
                    follow = f + 60 + int(min(rng.exponential(1.5 * DAY), 13 * DAY))
                    commits.append(Commit(follow, _sha(rng)))
                    closed_at = follow + int(rng.exponential(2 * DAY)) + 60
            else:
                for e in human_times:
                    if rng.random() < 0.6:
                        commits.append(Commit(e + 60 + int(rng.exponential(3 * 3600)), _sha(rng)))
                end = max([last_event] + [c.timestamp for c in commits])
                if state is PRState.MERGED:
                    merged_at = closed_at = max(end + int(rng.exponential(DAY)) + 60, created + 120)
                elif state is PRState.REJECTED:
                    closed_at = end + int(rng.exponential(3 * DAY)) + 60
            commits.sort(key=lambda c: c.timestamp)
        records.append(
            PullRequestRecord(
                id=f"pr-{i:06d}",
                repo_id=sk.repo[i],
                agent_name=sk.agent[i],
                author_kind=AuthorKind.GENERATIVE_AGENT,
                created_at=created,
                merged_at=merged_at,
                closed_at=closed_at,
                state=state,
                title=_title(rng),
                body=body,
                files=files,
                total_additions=adds,
                total_deletions=dels,
                commits=tuple(commits),
                timeline=timeline,
                ci_status=ci,
                linked_issue=bool(sk.linked[i]),
                primary_language=sk.language[i],
            )
        )
    return records


def generate_corpus(params: SynthParams = SynthParams()) -> list[PullRequestRecord]:
    """Two-regime corpus; a pure function of ``params`` (seed included)."""
    rng = np.random.default_rng(params.seed)
    sk = _skeleton(params, rng)
    slope = effort_slope(params)
    lam = np.exp(
        _intercept(slope, params)
        + _log_rate(sk.z, sk.config.astype(float), (~sk.plan).astype(float), slope, params)
    )
    effort = np.where(sk.instant, 0, poisson_inverse(rng.random(params.n_prs), lam))
    return _assemble(params, sk, effort, rng, events_for_instant=False)


@dataclass(frozen=True)
class PlantedCoefficients:
    """Log-rate effects on effort for the planted-signal corpus, before scaling."""

    size: float = 0.9
    config: float = 1.2
    no_plan: float = 0.9
    base_mean: float = 6.0


def planted_signal_corpus(
    params: SynthParams = SynthParams(),
    signal_strength: float = 1.0,
    coefficients: PlantedCoefficients = PlantedCoefficients(),
    quantile: float = 0.8,
) -> tuple[list[PullRequestRecord], np.ndarray, np.ndarray]:
    """Corpus whose effort depends only on size, config touches and missing plans.

    Every PR, instant or not, draws effort from the same Poisson log-link
    model, so with ``signal_strength=0`` effort is independent of every
    feature. Returns (records, expected effort, corpus-level High Cost labels).
    """
    if signal_strength < 0:
        raise SynthError("signal_strength must be nonnegative")
    rng = np.random.default_rng(params.seed)
    sk = _skeleton(params, rng)
    # Standardize log size over the whole corpus so the size effect spans both regimes.
    log_size = np.log(sk.size.astype(float))
    z = (log_size - log_size.mean()) / (log_size.std() or 1.0)
    c = coefficients
    eta = signal_strength * (c.size * z + c.config * sk.config + c.no_plan * (~sk.plan))
    eta = eta - np.log(np.mean(np.exp(eta)))
    lam = c.base_mean * np.exp(eta)
    effort = poisson_inverse(rng.random(params.n_prs), lam)
    records = _assemble(params, sk, effort, rng, events_for_instant=True)
    t = high_cost_threshold(effort.tolist(), quantile)
    return records, lam, effort > t


def with_seed(params: SynthParams, seed: int) -> SynthParams:
    return replace(params, seed=seed)
