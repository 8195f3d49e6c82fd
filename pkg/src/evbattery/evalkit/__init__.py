"""Vehicle-level scoring, cross-validation plans, metrics and reports."""

from .folds import FoldPlan, RoundRoles, build_folds, build_group_folds
from .metrics import (auroc, average_roc, confusion, f1_score, interpolate_roc, rmse, roc_area,
                      roc_curve)
from .protocol import EvalReport, RoundResult, run_detection
from .scoring import (DEFAULT_H_GRID, RobustScoreParams, robust_vehicle_predict,
                      robust_vehicle_score, select_hyperparams, select_threshold, tau_grid,
                      top_count, vehicle_scores)

__all__ = [
    "DEFAULT_H_GRID", "EvalReport", "FoldPlan", "RobustScoreParams", "RoundResult", "RoundRoles",
    "auroc", "average_roc", "build_folds", "build_group_folds", "confusion", "f1_score",
    "interpolate_roc", "rmse", "robust_vehicle_predict", "robust_vehicle_score", "roc_area",
    "roc_curve", "run_detection", "select_hyperparams", "select_threshold", "tau_grid",
    "top_count", "vehicle_scores",
]
