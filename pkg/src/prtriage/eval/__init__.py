"""Evaluation: metrics, split protocols, regime tables and report assembly."""

from .metrics import (
    DegenerateDataError,
    Interval,
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
from .splits import (
    SplitKind,
    SplitSpec,
    Stratum,
    loao_folds,
    random_split,
    repo_disjoint_split,
    size_quartile_strata,
    temporal_split,
)
