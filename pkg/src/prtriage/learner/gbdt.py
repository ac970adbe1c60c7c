"""Histogram gradient-boosted trees for binary logistic loss.

Trees are grown level-wise to ``max_depth`` with second-order leaf weights.
Split search bins every feature into at most ``n_histogram_bins`` buckets
once, up front. Histograms are built with ``np.bincount`` over rows in a
fixed order, so the fitted model is bit-identical for any thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

FORMAT_NAME = "prtriage-gbdt"
FORMAT_VERSION = 1
_MARGIN_CLIP = 30.0


class TrainingError(ValueError):
    pass


class SchemaMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    learning_rate: float = 0.05
    max_depth: int = 6
    min_samples_leaf: int = 20
    l2_leaf_penalty: float = 1.0
    n_histogram_bins: int = 255
    subsample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.l2_leaf_penalty < 0:
            raise ValueError("l2_leaf_penalty must be >= 0")
        if not 2 <= self.n_histogram_bins <= 255:
            raise ValueError("n_histogram_bins must lie in [2, 255]")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must lie in (0, 1]")


def sigmoid(margin: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(margin, -_MARGIN_CLIP, _MARGIN_CLIP)))


def logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood, computed stably from margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def logistic_grad_hess(margin: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = sigmoid(margin)
    return p - y, p * (1.0 - p)


@dataclass
class Tree:
    """Flat array tree. ``feature[i] == -1`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    default_left: list[bool] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)
    count: list[int] = field(default_factory=list)

    def add_node(self, count: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.default_left.append(True)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(0.0)
        self.count.append(count)
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        dleft = np.asarray(self.default_left)
        lch = np.asarray(self.left)
        rch = np.asarray(self.right)
        val = np.asarray(self.value)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = feat[node] >= 0
            if not internal.any():
                break
            r = rows[internal]
            nd = node[internal]
            x = X[r, feat[nd]]
            go_left = np.where(np.isnan(x), dleft[nd], x <= thr[nd])
            node[r] = np.where(go_left, lch[nd], rch[nd])
        return val[node]

    def scale(self, factor: float) -> None:
        self.value = [v * factor for v in self.value]


@dataclass
class GbdtModel:
    base_score: float
    trees: list[Tree]
    feature_names: tuple[str, ...]
    schema_hash: str
    params: GbdtParams
    prevalence: float
    loss_history: list[float] = field(default_factory=list)

    def _check(self, X: np.ndarray, schema_hash: str | None) -> np.ndarray:
        if schema_hash is not None and schema_hash != self.schema_hash:
            raise SchemaMismatchError(f"model schema {self.schema_hash} != input schema {schema_hash}")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(f"expected {len(self.feature_names)} columns, got shape {X.shape}")
        return X

    def decision_function(self, X: np.ndarray, schema_hash: str | None = None) -> np.ndarray:
        X = self._check(X, schema_hash)
        margin = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margin += tree.predict(X)
        return margin

    def predict_proba(self, X: np.ndarray, schema_hash: str | None = None) -> np.ndarray:
        return sigmoid(self.decision_function(X, schema_hash))

    def gain_importance(self) -> dict[str, float]:
        """Total split gain per feature, normalized to sum to one."""
        totals = np.zeros(len(self.feature_names))
        for tree in self.trees:
            for f, g in zip(tree.feature, tree.gain):
                if f >= 0:
                    totals[f] += g
        s = totals.sum()
        if s > 0:
            totals = totals / s
        return dict(zip(self.feature_names, totals.tolist()))

    # -- text format ---------------------------------------------------------

    def dumps(self) -> str:
        lines = [
            f"{FORMAT_NAME} {FORMAT_VERSION}",
            f"schema_hash {self.schema_hash}",
            "features " + json.dumps(list(self.feature_names), ensure_ascii=False),
            "params " + json.dumps(asdict(self.params), sort_keys=True),
            f"prevalence {self.prevalence!r}",
            f"base_score {self.base_score!r}",
            "loss_history " + json.dumps(self.loss_history),
            f"trees {len(self.trees)}",
        ]
        for i, tree in enumerate(self.trees):
            lines.append(f"tree {i} {tree.n_nodes}")
            for j in range(tree.n_nodes):
                f = tree.feature[j]
                if f >= 0:
                    fields = [j, "split", f, self.feature_names[f], repr(tree.threshold[j]),
                              "L" if tree.default_left[j] else "R", tree.left[j], tree.right[j],
                              repr(tree.gain[j]), tree.count[j]]
                else:
                    fields = [j, "leaf", repr(tree.value[j]), tree.count[j]]
                lines.append("\t".join(str(v) for v in fields))
        lines.append("end")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GbdtModel":
        it = iter(text.splitlines())

        def field_line(name: str) -> str:
            key, _, rest = next(it).partition(" ")
            if key != name:
                raise ValueError(f"model file: expected {name!r}, found {key!r}")
            return rest

        magic = next(it).split()
        if magic != [FORMAT_NAME, str(FORMAT_VERSION)]:
            raise ValueError(f"not a {FORMAT_NAME} v{FORMAT_VERSION} file")
        schema_hash = field_line("schema_hash")
        names = tuple(json.loads(field_line("features")))
        params = GbdtParams(**json.loads(field_line("params")))
        prevalence = float(field_line("prevalence"))
        base_score = float(field_line("base_score"))
        loss_history = [float(v) for v in json.loads(field_line("loss_history"))]
        n_trees = int(field_line("trees"))
        trees = []
        for _ in range(n_trees):
            _, _, n_nodes = next(it).split()
            tree = Tree()
            for _ in range(int(n_nodes)):
                parts = next(it).split("\t")
                if parts[1] == "split":
                    j = tree.add_node(int(parts[9]))
                    tree.feature[j] = int(parts[2])
                    if not 0 <= tree.feature[j] < len(names):
                        raise ValueError(f"model file: node {j} references feature index outside the schema")
                    if parts[3] != names[tree.feature[j]]:
                        raise ValueError(f"model file: node {j} names feature {parts[3]!r}, schema says otherwise")
                    tree.threshold[j] = float(parts[4])
                    tree.default_left[j] = parts[5] == "L"
                    tree.left[j] = int(parts[6])
                    tree.right[j] = int(parts[7])
                    tree.gain[j] = float(parts[8])
                else:
                    j = tree.add_node(int(parts[3]))
                    tree.value[j] = float(parts[2])
            trees.append(tree)
        if next(it) != "end":
            raise ValueError("model file: missing end marker")
        return cls(base_score, trees, names, schema_hash, params, prevalence, loss_history)


# -- training -------------------------------------------------------------------


def bin_edges(X: np.ndarray, n_bins: int) -> list[np.ndarray]:
    """Per-feature cut points; bin(x) = number of edges strictly below x."""
    edges = []
    qs = np.arange(1, n_bins) / n_bins
    for j in range(X.shape[1]):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size <= n_bins:
            e = uniq[:-1]
        else:
            e = np.unique(np.quantile(col, qs, method="lower"))
            e = e[e < uniq[-1]]
        edges.append(e.astype(float))
    return edges


def apply_bins(X: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    B = np.empty(X.shape, dtype=np.uint8)
    for j, e in enumerate(edges):
        B[:, j] = np.searchsorted(e, X[:, j], side="left")
    return B


def _block_keys(B: np.ndarray, feats: np.ndarray, n_bins: int) -> np.ndarray:
    """Bin codes for a feature block, offset so each feature owns its own bin range."""
    return B[:, feats].astype(np.int64) + np.arange(len(feats), dtype=np.int64)[None, :] * n_bins


def _feature_histograms(keys, slot, g, h, n_slots, n_bins):
    """Gradient, hessian and count histograms for one feature block.

    ``keys`` comes from :func:`_block_keys`; result arrays are shaped
    (n_slots, block_width, n_bins).
    """
    k = keys.shape[1]
    flat = (keys + (slot * (k * n_bins))[:, None]).ravel()
    size = n_slots * k * n_bins
    G = np.bincount(flat, weights=np.repeat(g, k), minlength=size)
    H = np.bincount(flat, weights=np.repeat(h, k), minlength=size)
    C = np.bincount(flat, minlength=size)
    shape = (n_slots, k, n_bins)
    return G.reshape(shape), H.reshape(shape), C.reshape(shape)


def _split_gains(G, H, C, lam, min_leaf):
    """Gain for every (slot, feature, cut) where the cut sends bins <= b left."""
    GL = np.cumsum(G, axis=2)[:, :, :-1]
    HL = np.cumsum(H, axis=2)[:, :, :-1]
    CL = np.cumsum(C, axis=2)[:, :, :-1]
    Gt = G.sum(axis=2, keepdims=True)
    Ht = H.sum(axis=2, keepdims=True)
    Ct = C.sum(axis=2, keepdims=True)
    GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
    with np.errstate(divide="ignore", invalid="ignore"):  # empty sides with lam=0; masked below
        gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam)
    valid = (CL >= min_leaf) & (CR >= min_leaf)
    return np.where(valid, gain, -np.inf), CL, CR


def _grow_tree(B, block_keys, X_edges, g, h, params: GbdtParams, pool) -> Tree:
    n_rows = B.shape[0]
    n_bins = params.n_histogram_bins
    lam = params.l2_leaf_penalty
    tree = Tree()
    root = tree.add_node(n_rows)
    slot = np.zeros(n_rows, dtype=np.int64)  # index into `open_nodes`, -1 once settled
    open_nodes = [root]
    node_G = {root: float(g.sum())}
    node_H = {root: float(h.sum())}

    def leaf_value(node):
        return -node_G[node] / (node_H[node] + lam) * params.learning_rate

    for _depth in range(params.max_depth):
        if not open_nodes:
            break
        active = slot >= 0
        rows = np.flatnonzero(active)
        s, ga, ha = slot[rows], g[rows], h[rows]
        n_slots = len(open_nodes)
        all_rows = rows.size == n_rows

        def work(keys):
            G, H, C = _feature_histograms(keys if all_rows else keys[rows], s, ga, ha, n_slots, n_bins)
            return _split_gains(G, H, C, lam, params.min_samples_leaf)

        parts = list(pool.map(work, block_keys)) if pool is not None else [work(k) for k in block_keys]
        gain = np.concatenate([p[0] for p in parts], axis=1)
        CL = np.concatenate([p[1] for p in parts], axis=1)
        CR = np.concatenate([p[2] for p in parts], axis=1)

        next_open = []
        new_slot = np.full(n_rows, -1, dtype=np.int64)
        for si, node in enumerate(open_nodes):
            flat = gain[si].ravel()
            best = int(np.argmax(flat))  # first maximum: lowest feature, then lowest cut
            best_gain = flat[best]
            if not np.isfinite(best_gain) or best_gain <= 1e-12:
                tree.value[node] = leaf_value(node)
                continue
            f, b = divmod(best, n_bins - 1)
            in_node = rows[s == si]
            go_left = B[in_node, f] <= b
            lrows, rrows = in_node[go_left], in_node[~go_left]
            tree.feature[node] = f
            tree.threshold[node] = float(X_edges[f][b])
            tree.default_left[node] = bool(CL[si, f, b] >= CR[si, f, b])
            tree.gain[node] = float(best_gain)
            for side_rows, attr in ((lrows, "left"), (rrows, "right")):
                child = tree.add_node(int(side_rows.size))
                getattr(tree, attr)[node] = child
                node_G[child] = float(g[side_rows].sum())
                node_H[child] = float(h[side_rows].sum())
                new_slot[side_rows] = len(next_open)
                next_open.append(child)
        open_nodes = next_open
        slot = new_slot

    for node in open_nodes:
        tree.value[node] = leaf_value(node)
    return tree


def _check_inputs(X, y, params: GbdtParams):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise TrainingError("X must be two-dimensional")
    if X.shape[0] != y.shape[0]:
        raise TrainingError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise TrainingError(f"non-finite feature value at row {r}, column {c}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise TrainingError("labels must be 0/1")
    if y.min() == y.max():
        raise TrainingError("training labels contain a single class")
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise TrainingError(f"need at least {2 * params.min_samples_leaf} rows, got {X.shape[0]}")
    return X, y


def train_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    params: GbdtParams = GbdtParams(),
    feature_names: Sequence[str] | None = None,
    schema_hash: str = "",
    threads: int = 1,
) -> GbdtModel:
    """Fit a boosted ensemble; output is independent of ``threads``.

    If a boosting step would raise the training loss, its leaf values are
    halved until it does not, so the recorded loss history never increases.
    """
    X, y = _check_inputs(X, y, params)
    n, n_feat = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(n_feat))
    if len(names) != n_feat:
        raise TrainingError("feature_names length does not match X")
    if any("\t" in name or "\n" in name for name in names):
        raise TrainingError("feature names may not contain tabs or newlines")
    prevalence = float(y.mean())
    base = math.log(prevalence / (1.0 - prevalence))
    edges = bin_edges(X, params.n_histogram_bins)
    B = apply_bins(X, edges)
    rng = np.random.default_rng(params.seed)

    threads = max(1, int(threads))
    blocks = [b for b in np.array_split(np.arange(n_feat), min(threads, n_feat)) if b.size]
    block_keys = [_block_keys(B, b, params.n_histogram_bins) for b in blocks]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    margin = np.full(n, base)
    loss = logistic_loss(margin, y)
    history = [loss]
    trees: list[Tree] = []
    try:
        for _ in range(params.n_trees):
            g, h = logistic_grad_hess(margin, y)
            if params.subsample_fraction < 1.0:
                k = max(2 * params.min_samples_leaf, int(round(params.subsample_fraction * n)))
                rows = np.sort(rng.choice(n, size=min(k, n), replace=False))
                sub_keys = [kb[rows] for kb in block_keys]
                tree = _grow_tree(B[rows], sub_keys, edges, g[rows], h[rows], params, pool)
            else:
                tree = _grow_tree(B, block_keys, edges, g, h, params, pool)
            step = tree.predict(X)
            new_loss = logistic_loss(margin + step, y)
            halvings = 0
            while new_loss > loss and halvings < 40:
                tree.scale(0.5)
                step = step * 0.5
                new_loss = logistic_loss(margin + step, y)
                halvings += 1
            if new_loss > loss:
                tree.scale(0.0)
                step = np.zeros(n)
                new_loss = loss
            margin = margin + step
            loss = new_loss
            history.append(loss)
            trees.append(tree)
    finally:
        if pool is not None:
            pool.shutdown()
    return GbdtModel(base, trees, names, schema_hash, params, prevalence, history)
