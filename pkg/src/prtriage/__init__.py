"""Creation-time review-effort prediction and gated triage for agent-authored PRs."""

__version__ = "0.1.0"
