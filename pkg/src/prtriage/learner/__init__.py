from .gbdt import GbdtModel, GbdtParams, SchemaMismatchError, TrainingError, train_gbdt
from .linear import LinearModel, PathTokenModel, fit_logistic, train_path_token_baseline, train_size_only

__all__ = [
    "GbdtModel",
    "GbdtParams",
    "LinearModel",
    "PathTokenModel",
    "SchemaMismatchError",
    "TrainingError",
    "fit_logistic",
    "train_gbdt",
    "train_path_token_baseline",
    "train_size_only",
]
