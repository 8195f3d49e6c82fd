"""Robust vehicle scoring: mean of the largest h% snippet scores, thresholded at tau."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import auroc, f1_score

DEFAULT_H_GRID = (1, 2, 5, 10, 25, 50, 100)
DEFAULT_N_TAU = 50


@dataclass(frozen=True)
class RobustScoreParams:
    h: float | None
    tau: float

    def __post_init__(self):
        if self.h is not None and not 0 < self.h <= 100:
            raise ValueError("h must lie in (0, 100]")


def top_count(n: int, h: float) -> int:
    """``max(1, floor(n * h / 100))``, robust to float noise in ``n * h``."""
    return max(1, math.floor(round(n * h / 100.0, 9)))


def robust_vehicle_score(snippet_scores, h: float) -> float:
    s = np.asarray(snippet_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("vehicle has no snippets")
    if not 0 < h <= 100:
        raise ValueError("h must lie in (0, 100]")
    k = top_count(s.size, h)
    top = np.sort(s)[::-1][:k]
    # correctly rounded sum: the result does not depend on summation order
    return math.fsum(top) / k


def robust_vehicle_predict(score: float, tau: float) -> int:
    return int(score > tau)


def vehicle_scores(per_vehicle_scores, h: float) -> np.ndarray:
    return np.array([robust_vehicle_score(s, h) for s in per_vehicle_scores])


def tau_grid(vehicle_level_scores, n: int = DEFAULT_N_TAU) -> np.ndarray:
    return np.unique(np.quantile(np.asarray(vehicle_level_scores, dtype=np.float64),
                                 np.linspace(0.0, 1.0, n)))


def select_threshold(labels, vehicle_level_scores, taus=None) -> tuple[float, float]:
    """tau maximizing F1 of ``score > tau``; ties go to the smaller tau."""
    scores = np.asarray(vehicle_level_scores, dtype=np.float64)
    taus = tau_grid(scores) if taus is None else np.sort(np.asarray(taus, dtype=np.float64))
    best_tau, best_f1 = None, -1.0
    for tau in taus:
        f1 = f1_score(labels, scores > tau)
        if f1 > best_f1:
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1


def select_hyperparams(labels, per_vehicle_scores, h_grid=DEFAULT_H_GRID, taus=None):
    """Pick h by validation AUROC, then tau by validation F1.

    ``per_vehicle_scores`` holds one array of snippet scores per validation
    vehicle.  Ties are broken toward smaller h, then smaller tau.  Returns
    ``(RobustScoreParams, diagnostics)``.
    """
    labels = np.asarray(labels)
    if labels.size == 0 or labels.min() == labels.max():
        raise ValueError("validation set needs both normal and anomalous vehicles")
    sweep = {}
    best_h, best_auc = None, -1.0
    for h in sorted(h_grid):
        a = auroc(labels, vehicle_scores(per_vehicle_scores, h))
        sweep[h] = a
        if a > best_auc:
            best_h, best_auc = h, a
    tau, f1 = select_threshold(labels, vehicle_scores(per_vehicle_scores, best_h), taus)
    return RobustScoreParams(best_h, tau), {"val_auroc": best_auc, "val_f1": f1,
                                            "h_sweep": sweep}
