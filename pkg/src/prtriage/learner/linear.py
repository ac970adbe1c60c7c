"""L2-regularized logistic regression (IRLS) and the two linear baselines."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import PullRequestRecord
from .gbdt import TrainingError, sigmoid

_TOKEN_SPLIT = re.compile(r"[/._\-]+")


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: tuple[str, ...] = ()
    n_iter: int = 0

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X @ self.weights + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def _penalized_nll(Xa, y, beta, penalty):
    eta = Xa @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * np.sum(penalty * beta**2))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    feature_names: Sequence[str] = (),
) -> LinearModel:
    """Newton/IRLS on the penalized log-likelihood; the intercept is unpenalized.

    Stops when the largest coefficient update falls below ``tol``. Steps that
    would increase the objective are halved.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise TrainingError("X and y lengths differ")
    if y.min() == y.max():
        raise TrainingError("training labels contain a single class")
    n, p = X.shape
    Xa = np.hstack([np.ones((n, 1)), X])
    penalty = np.full(p + 1, float(l2))
    penalty[0] = 0.0
    beta = np.zeros(p + 1)
    prev = y.mean()
    beta[0] = math.log(prev / (1 - prev))
    obj = _penalized_nll(Xa, y, beta, penalty)
    it = 0
    for it in range(1, max_iter + 1):
        mu = sigmoid(Xa @ beta)
        w = mu * (1 - mu)
        grad = Xa.T @ (y - mu) - penalty * beta
        hess = (Xa * w[:, None]).T @ Xa + np.diag(penalty)
        hess[np.diag_indices_from(hess)] += 1e-12
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            cand_obj = _penalized_nll(Xa, y, cand, penalty)
            if cand_obj <= obj + 1e-12 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        delta = np.max(np.abs(cand - beta))
        beta, obj = cand, cand_obj
        if delta < tol:
            break
    return LinearModel(beta[1:].copy(), float(beta[0]), tuple(feature_names), it)


def train_size_only(x_size: np.ndarray, y: np.ndarray, l2: float = 1e-6) -> LinearModel:
    """Univariate logistic regression on log1p(total_changes)."""
    return fit_logistic(np.asarray(x_size, dtype=float).reshape(-1, 1), y, l2=l2, feature_names=("log1p_total_changes",))


def tokenize_path(path: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(path.lower()) if t]


@dataclass
class PathTokenModel:
    """TF-IDF over file-path tokens feeding a logistic regression.

    The vocabulary is frozen at training time; unseen tokens are dropped.
    """

    vocabulary: dict
    idf: np.ndarray
    linear: LinearModel

    def transform(self, records: Sequence[PullRequestRecord]) -> np.ndarray:
        return _tfidf(records, self.vocabulary, self.idf)

    def predict_proba(self, records: Sequence[PullRequestRecord]) -> np.ndarray:
        return self.linear.predict_proba(self.transform(records))


def _tfidf(records, vocabulary, idf) -> np.ndarray:
    M = np.zeros((len(records), len(vocabulary)))
    for i, r in enumerate(records):
        for f in r.files:
            for tok in tokenize_path(f.path):
                j = vocabulary.get(tok)
                if j is not None:
                    M[i, j] += 1.0
    M *= idf[None, :]
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    np.divide(M, norms, out=M, where=norms > 0)
    return M


def train_path_token_baseline(
    records: Sequence[PullRequestRecord],
    y: np.ndarray,
    min_df: int = 5,
    l2: float = 1.0,
) -> PathTokenModel:
    df: Counter = Counter()
    for r in records:
        df.update({tok for f in r.files for tok in tokenize_path(f.path)})
    vocab_tokens = sorted(t for t, c in df.items() if c >= min_df)
    if not vocab_tokens:
        raise TrainingError(f"no path token reaches document frequency {min_df}")
    vocabulary = {t: i for i, t in enumerate(vocab_tokens)}
    n = len(records)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in vocab_tokens])
    M = _tfidf(records, vocabulary, idf)
    linear = fit_logistic(M, y, l2=l2, feature_names=tuple(vocab_tokens))
    return PathTokenModel(vocabulary, idf, linear)
