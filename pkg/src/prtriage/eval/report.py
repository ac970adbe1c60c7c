"""Run every split protocol and write the evaluation directory.

Layout of the output directory (all CSV with a ``# seed= schema_hash=`` line):

    metrics.csv        split, model, metric, point, ci_low, ci_high, n_test, n_pos
    predictions.csv    split, id, total_changes, label, one score column per model
    roc_points.csv     split, model, threshold, fpr, tpr
    calibration.csv    split, model, bin_mid, mean_pred, frac_pos, count
    topk_coverage.csv  split, model, budget, k, recall
    quartile_auc.csv   split, stratum, bounds, n, n_pos, auc_full, auc_size_only,
                       precision_full, precision_size_only, lift
    importance.csv     rank, feature, group, permutation_drop, gain
    ecdf.csv           agent, seconds, days, fraction
    sensitivity.csv    analysis, setting, ghosted, applicable, ghosting_rate, agreement, auc
    agent_stats.csv, regimes.csv, ghosting_heatmap.csv

The four curve files are pure functions of predictions.csv, which is what
:func:`regenerate_curves` relies on.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .._io import read_table, write_table
from ..config import DEFAULT_CONFIG, Config
from ..core import PullRequestRecord, Stage
from ..features import FeatureSchema, feature_matrix
from ..labeling import (
    DAY,
    EffortVariant,
    LabelConfig,
    feedback_to_close_seconds,
    label_agreement,
    label_records,
)
from ..learner import GbdtParams, TrainingError, train_gbdt, train_path_token_baseline, train_size_only
from . import regimes
from .metrics import (
    DegenerateDataError,
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
from .splits import QUARTILE_NAMES, loao_folds, repo_disjoint_split, size_quartile_bounds, temporal_split

MODELS = ("gbdt", "size_only", "path_tokens")
METRICS = ("roc_auc", "pr_auc", "precision_at_budget", "recall_at_budget")


@dataclass(frozen=True)
class EvalConfig:
    stage: Stage = Stage.T0
    splits: tuple[str, ...] = ("temporal", "repo", "loao")
    train_fraction: float = 0.8
    budget: float = 0.2
    labels: LabelConfig = LabelConfig()
    gbdt: GbdtParams = GbdtParams()
    bootstrap: int = 1000
    alpha: float = 0.05
    importance_repeats: int = 5
    timeouts: tuple[float, ...] = (7, 14, 21, 30)
    effort_weights: tuple[tuple[int, int], ...] = ((1, 1), (2, 1), (1, 2))
    seed: int = 0
    threads: int = 1
    config: Config = DEFAULT_CONFIG

    def __post_init__(self):
        unknown = set(self.splits) - {"temporal", "repo", "loao"}
        if unknown:
            raise ValueError(f"unknown split(s): {sorted(unknown)}")


@dataclass
class SplitPredictions:
    split: str
    ids: list[str]
    sizes: list[int]
    labels: np.ndarray
    scores: dict[str, np.ndarray]


@dataclass
class EvalReport:
    meta: dict
    metrics: list[tuple] = field(default_factory=list)
    predictions: list[SplitPredictions] = field(default_factory=list)
    quartile_bounds: tuple[float, float, float] = (0, 0, 0)
    importance: list[tuple] = field(default_factory=list)
    ecdf: list[tuple] = field(default_factory=list)
    sensitivity: list[tuple] = field(default_factory=list)
    agent_stats: list[tuple] = field(default_factory=list)
    regimes: list[tuple] = field(default_factory=list)
    heatmap: list[tuple] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        meta = dict(self.meta)
        if self.skipped:
            meta["skipped"] = ",".join(self.skipped)

        def dump(name, columns, rows, **extra):
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                write_table(fh, columns, [[_cell(v) for v in row] for row in rows], **meta, **extra)

        dump("metrics.csv", ("split", "model", "metric", "point", "ci_low", "ci_high", "n_test", "n_pos"), self.metrics)
        bounds = ",".join(_cell(b) for b in self.quartile_bounds)
        dump("predictions.csv", ("split", "id", "total_changes", "label", *MODELS), _prediction_rows(self.predictions),
             quartile_bounds=bounds)
        for name, columns, rows in curve_tables(self.predictions, self.quartile_bounds, self.meta.get("budget", 0.2)):
            dump(name, columns, rows)
        dump("importance.csv", ("rank", "feature", "group", "permutation_drop", "gain"), self.importance)
        dump("ecdf.csv", ("agent", "seconds", "days", "fraction"), self.ecdf)
        dump("sensitivity.csv",
             ("analysis", "setting", "ghosted", "applicable", "ghosting_rate", "agreement", "auc"), self.sensitivity)
        dump("agent_stats.csv", regimes.AGENT_COLUMNS, self.agent_stats)
        dump("regimes.csv", regimes.REGIME_COLUMNS, self.regimes)
        dump("ghosting_heatmap.csv", regimes.HEATMAP_COLUMNS, self.heatmap)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{float(v):.9g}"
    return str(v)


def _prediction_rows(preds: Sequence[SplitPredictions]):
    for p in preds:
        for i, pr_id in enumerate(p.ids):
            yield [p.split, pr_id, p.sizes[i], int(p.labels[i])] + [
                # Full precision so curves rebuilt from this file match exactly.
                repr(float(p.scores[m][i])) if m in p.scores else None for m in MODELS
            ]


def curve_tables(preds: Sequence[SplitPredictions], bounds, budget: float = 0.2):
    """Derive (filename, columns, rows) for every curve file from saved predictions."""
    roc, cal, topk, quart = [], [], [], []
    b1, b2, b3 = bounds
    edges = [(None, b1), (b1, b2), (b2, b3), (b3, None)]
    for p in preds:
        for m in MODELS:
            if m not in p.scores:
                continue
            s = p.scores[m]
            roc += [(p.split, m, t, f, r) for t, f, r in roc_curve_points(s, p.labels)]
            cal += [(p.split, m, *row) for row in calibration_curve(s, p.labels)]
            topk += [(p.split, m, *row) for row in topk_coverage(s, p.labels, p.ids)]
        sizes = np.asarray(p.sizes)
        for name, (lo, hi) in zip(QUARTILE_NAMES, edges):
            mask = np.ones(sizes.size, dtype=bool)
            if lo is not None:
                mask &= sizes > lo
            if hi is not None:
                mask &= sizes <= hi
            label = f"<= {hi:g}" if lo is None else (f"> {lo:g}" if hi is None else f"({lo:g}, {hi:g}]")
            y = p.labels[mask]
            ids = [i for i, keep in zip(p.ids, mask) if keep]
            row = [p.split, name, label, int(mask.sum()), int(y.sum())]
            if mask.any() and y.any() and not y.all() and "size_only" in p.scores:
                full, size = p.scores["gbdt"][mask], p.scores["size_only"][mask]
                pf = budget_metrics(full, y, budget, ids)[0]
                ps = budget_metrics(size, y, budget, ids)[0]
                row += [roc_auc(full, y), roc_auc(size, y), pf, ps, pf - ps]
            else:
                row += [None] * 5
            quart.append(tuple(row))
    return [
        ("roc_points.csv", ("split", "model", "threshold", "fpr", "tpr"), roc),
        ("calibration.csv", ("split", "model", "bin_mid", "mean_pred", "frac_pos", "count"), cal),
        ("topk_coverage.csv", ("split", "model", "budget", "k", "recall"), topk),
        ("quartile_auc.csv",
         ("split", "stratum", "bounds", "n", "n_pos", "auc_full", "auc_size_only", "precision_full",
          "precision_size_only", "lift"), quart),
    ]


def regenerate_curves(report_dir: str, out_dir: str | None = None) -> list[str]:
    """Rewrite the curve CSVs of a saved report from its predictions.csv."""
    out_dir = out_dir or report_dir
    with open(os.path.join(report_dir, "predictions.csv"), newline="") as fh:
        meta, rows = read_table(fh)
    preds: dict[str, SplitPredictions] = {}
    for r in rows:
        p = preds.setdefault(r["split"], SplitPredictions(r["split"], [], [], [], {}))
        p.ids.append(r["id"])
        p.sizes.append(int(r["total_changes"]))
        p.labels.append(r["label"] == "1")
        for m in MODELS:
            if r.get(m):
                p.scores.setdefault(m, []).append(float(r[m]))
    for p in preds.values():
        p.labels = np.asarray(p.labels, dtype=bool)
        p.scores = {m: np.asarray(v) for m, v in p.scores.items() if len(v) == len(p.ids)}
    bounds = tuple(float(b) for b in meta.pop("quartile_bounds").split(","))
    budget = float(meta.get("budget", 0.2))
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, columns, table in curve_tables(list(preds.values()), bounds, budget):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            write_table(fh, columns, [[_cell(v) for v in row] for row in table], **meta)
        written.append(path)
    return written


def _fit_models(train, test, X_train, X_test, y_train, schema, cfg: EvalConfig):
    """Train the three models on one split; returns (scores by model, gbdt model)."""
    scores = {}
    model = train_gbdt(X_train, y_train, cfg.gbdt, schema.names, schema.hash, cfg.threads)
    scores["gbdt"] = model.predict_proba(X_test)
    size_col = schema.index("log1p_total_changes")
    scores["size_only"] = train_size_only(X_train[:, size_col], y_train).predict_proba(X_test[:, size_col])
    try:
        scores["path_tokens"] = train_path_token_baseline(train, y_train).predict_proba(test)
    except TrainingError:
        pass
    return scores, model


def _split_iter(records, cfg: EvalConfig):
    for kind in cfg.splits:
        if kind == "temporal":
            yield "temporal", *temporal_split(records, cfg.train_fraction)
        elif kind == "repo":
            yield "repo", *repo_disjoint_split(records, cfg.train_fraction, cfg.seed)
        else:
            for agent, train, test in loao_folds(records):
                yield f"loao:{agent}", train, test


def _metric_fns(budget: float) -> dict:
    return {
        "roc_auc": roc_auc,
        "pr_auc": pr_auc,
        "precision_at_budget": lambda s, y: budget_metrics(s, y, budget)[0],
        "recall_at_budget": lambda s, y: budget_metrics(s, y, budget)[1],
    }


def _labels(records, cfg: LabelConfig, threshold=None):
    labels, t = label_records(records, cfg, threshold)
    return np.array([lab.is_high_cost for lab in labels], dtype=bool), t


def evaluate(records: Sequence[PullRequestRecord], cfg: EvalConfig = EvalConfig()) -> EvalReport:
    records = list(records)
    schema = FeatureSchema.build(cfg.stage, cfg.config)
    X = feature_matrix(records, schema)
    row_of = {r.id: i for i, r in enumerate(records)}
    report = EvalReport(
        meta={"seed": cfg.seed, "schema_hash": schema.hash, "stage": schema.stage.value, "budget": cfg.budget}
    )
    report.quartile_bounds = size_quartile_bounds([r.total_changes for r in records])
    fns = _metric_fns(cfg.budget)
    temporal_model = temporal_data = None

    for name, train, test in _split_iter(records, cfg):
        y_train, threshold = _labels(train, cfg.labels)
        y_test, _ = _labels(test, cfg.labels, threshold)
        if y_train.all() or not y_train.any() or y_test.all() or not y_test.any():
            report.skipped.append(name)
            continue
        X_train = X[[row_of[r.id] for r in train]]
        X_test = X[[row_of[r.id] for r in test]]
        scores, model = _fit_models(train, test, X_train, X_test, y_train, schema, cfg)
        if name == "temporal":
            temporal_model, temporal_data = model, (X_test, y_test)
        for m in MODELS:
            if m not in scores:
                continue
            try:
                cis = bootstrap_many(fns, scores[m], y_test, cfg.bootstrap, cfg.alpha, cfg.seed)
            except DegenerateDataError:
                report.skipped.append(f"{name}/{m}")
                continue
            for metric in METRICS:
                ci = cis[metric]
                report.metrics.append((name, m, metric, ci.point, ci.low, ci.high, len(test), int(y_test.sum())))
        report.predictions.append(
            SplitPredictions(name, [r.id for r in test], [r.total_changes for r in test], y_test, scores)
        )

    if temporal_model is not None:
        report.importance = _importance(temporal_model, *temporal_data, schema, cfg)
    report.ecdf = _ecdf_rows(records, cfg.labels)
    report.sensitivity = _sensitivity(records, X, row_of, schema, cfg)
    report.agent_stats = regimes.agent_stats(records, cfg.labels)
    report.regimes = regimes.regime_prevalence(records, schema.config, cfg.labels.instant_window_seconds)
    report.heatmap = regimes.ghosting_heatmap(records, cfg.labels, schema.config)
    return report


def _importance(model, X_test, y_test, schema: FeatureSchema, cfg: EvalConfig):
    ranked = permutation_importance(model, X_test, y_test, schema.names, roc_auc, cfg.importance_repeats, cfg.seed)
    gains = model.gain_importance()
    group = dict(zip(schema.names, schema.groups))
    return [(i + 1, n, group[n], drop, gains.get(n, 0.0)) for i, (n, drop) in enumerate(ranked)]


def _ecdf_rows(records, label_cfg: LabelConfig):
    by_agent: dict[str, list[int]] = {}
    for r in records:
        d = feedback_to_close_seconds(r, label_cfg.feedback_anchor)
        if d is not None:
            by_agent.setdefault(r.agent_name, []).append(d)
            by_agent.setdefault("all", []).append(d)
    rows = []
    for agent in sorted(by_agent):
        rows += [(agent, x, x / DAY, frac) for x, frac in ecdf(by_agent[agent])]
    return rows


def _sensitivity(records, X, row_of, schema, cfg: EvalConfig):
    rows = []
    for days in cfg.timeouts:
        label_cfg = replace(cfg.labels, ghosting_timeout_days=days)
        heat = regimes.agent_stats(records, label_cfg)[-1]
        rows.append(("ghosting_timeout", f"{days:g}d", heat[4], heat[3], heat[5] / 100, None, None))

    base, _ = _labels(records, cfg.labels)
    human, _ = _labels(records, replace(cfg.labels, effort_variant=EffortVariant.HUMAN_ONLY))
    rows.append(("effort_variant", "human_only", None, None, None, label_agreement(base, human), None))

    train, test = temporal_split(records, cfg.train_fraction)
    X_train = X[[row_of[r.id] for r in train]]
    X_test = X[[row_of[r.id] for r in test]]
    for rw, cw in cfg.effort_weights:
        label_cfg = replace(cfg.labels, review_weight=rw, comment_weight=cw)
        reweighted, _ = _labels(records, label_cfg)
        y_train, t = _labels(train, label_cfg)
        y_test, _ = _labels(test, label_cfg, t)
        auc = None
        if y_train.any() and not y_train.all() and y_test.any() and not y_test.all():
            model = train_gbdt(X_train, y_train, cfg.gbdt, schema.names, schema.hash, cfg.threads)
            auc = roc_auc(model.predict_proba(X_test), y_test)
        rows.append(("effort_weights", f"review={rw};comment={cw}", None, None, None,
                     label_agreement(base, reweighted), auc))
    return rows
