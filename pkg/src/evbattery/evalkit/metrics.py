"""AUROC, ROC curves and RMSE."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

FPR_GRID_POINTS = 101


def _check_binary(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError("labels and scores must be 1-D and of equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("AUROC needs both classes present")
    return labels.astype(bool), scores


def auroc(labels, scores) -> float:
    """Probability that a random positive outranks a random negative (ties count 1/2)."""
    pos, scores = _check_binary(labels, scores)
    ranks = rankdata(scores)  # average ranks for ties
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(labels, scores):
    """ROC points ``(fpr, tpr, thresholds)`` with one point per distinct score.

    A sample is predicted positive when its score is ``>= threshold``.  The
    curve starts at (0, 0) (threshold ``+inf``) and ends at (1, 1).
    """
    pos, scores = _check_binary(labels, scores)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = pos[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last_of_run]
    fps = (last_of_run + 1) - tps
    tpr = np.r_[0.0, tps / pos.sum()]
    fpr = np.r_[0.0, fps / (~pos).sum()]
    thresholds = np.r_[np.inf, s[last_of_run]]
    return fpr, tpr, thresholds


def roc_area(fpr, tpr) -> float:
    return float(np.trapezoid(tpr, fpr))


def interpolate_roc(fpr, tpr, grid) -> np.ndarray:
    """Linear interpolation of a ROC curve onto ``grid``; vertical jumps take the upper value."""
    fpr = np.asarray(fpr)
    tpr = np.asarray(tpr)
    ux, inv = np.unique(fpr, return_inverse=True)
    top = np.full(ux.size, -np.inf)
    np.maximum.at(top, inv, tpr)
    return np.interp(grid, ux, top)


def average_roc(curves, n_points: int = FPR_GRID_POINTS):
    """Mean and standard deviation of several ROC curves on a uniform fpr grid.

    ``curves`` is a sequence of ``(fpr, tpr)`` pairs.  Returns an
    ``(n_points, 3)`` array with columns ``fpr, tpr_mean, tpr_std``.
    """
    if not curves:
        raise ValueError("no curves to average")
    grid = np.linspace(0.0, 1.0, n_points)
    stacked = np.stack([interpolate_roc(f, t, grid) for f, t in curves])
    # where all curves agree, report that value and a zero band without rounding residue
    same = np.ptp(stacked, axis=0) == 0
    mean = np.where(same, stacked[0], stacked.mean(axis=0))
    std = np.where(same, 0.0, stacked.std(axis=0))
    return np.column_stack([grid, mean, std])


def rmse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def f1_score(labels, predictions) -> float:
    y = np.asarray(labels).astype(bool)
    p = np.asarray(predictions).astype(bool)
    tp = np.sum(y & p)
    denom = 2 * tp + np.sum(~y & p) + np.sum(y & ~p)
    return 0.0 if denom == 0 else float(2 * tp / denom)


def confusion(labels, predictions) -> dict:
    y = np.asarray(labels).astype(bool)
    p = np.asarray(predictions).astype(bool)
    return {"tp": int(np.sum(y & p)), "fp": int(np.sum(~y & p)),
            "tn": int(np.sum(~y & ~p)), "fn": int(np.sum(y & ~p))}
