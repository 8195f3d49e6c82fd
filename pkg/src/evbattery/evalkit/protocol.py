"""End-to-end k-fold detection protocol producing an :class:`EvalReport`."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import AVG_VOLT, ProtocolError, derive_seed, fit_normalizer
from ..detectors import AEConfig, DyadConfig, ae_train, dyad_train, variance_score
from .folds import build_folds
from .metrics import auroc, average_roc, confusion, roc_curve
from .scoring import DEFAULT_H_GRID, select_hyperparams, select_threshold, vehicle_scores

log = logging.getLogger(__name__)

# SeedSequence spawn keys (see core.derive_seed)
SEED_FOLDS = 0
SEED_ROUND_MODEL = 1


@dataclass
class RoundResult:
    round: int
    auroc: float
    h: float | None
    tau: float
    confusion: dict
    val_auroc: float
    roc_fpr: list
    roc_tpr: list
    test_vehicles: list
    test_labels: list
    test_scores: list
    train_loss: list = field(default_factory=list)
    # per test vehicle snippet scores; written to CSV, not to report.json
    snippet_scores: dict | None = None


@dataclass
class EvalReport:
    detector: str
    seed: int
    k: int
    rounds: list
    config: dict = field(default_factory=dict)

    @property
    def aurocs(self) -> list[float]:
        return [r.auroc for r in self.rounds]

    @property
    def auroc_mean(self) -> float:
        return float(np.mean(self.aurocs))

    @property
    def auroc_std(self) -> float:
        return float(np.std(self.aurocs))

    def mean_roc(self, n_points: int = 101) -> np.ndarray:
        return average_roc([(r.roc_fpr, r.roc_tpr) for r in self.rounds], n_points)

    def to_dict(self) -> dict:
        return {
            "kind": "detection",
            "detector": self.detector,
            "seed": self.seed,
            "k": self.k,
            "config": self.config,
            "rounds": [{k: v for k, v in asdict(r).items() if k != "snippet_scores"}
                       for r in self.rounds],
            "summary": {"auroc_mean": self.auroc_mean, "auroc_std": self.auroc_std},
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        for r in self.rounds:
            _write_csv(out / f"roc_round{r.round}.csv", ["fpr", "tpr"], zip(r.roc_fpr, r.roc_tpr))
        _write_csv(out / "roc_mean.csv", ["fpr", "tpr_mean", "tpr_std"], self.mean_roc().tolist())
        return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def _train_scorer(detector, train, seed, dyad_config, ae_config):
    norm = fit_normalizer([s for v in train for s in v.snippets])
    if detector == "dyad":
        return dyad_train(train, dyad_config, seed, norm)
    if detector == "ae":
        return ae_train(train, ae_config, seed, norm)
    raise ValueError(f"unknown detector {detector!r}")


def run_detection(vehicles, detector: str = "dyad", k: int = 5, seed: int = 0,
                  dyad_config: DyadConfig | None = None, ae_config: AEConfig | None = None,
                  h_grid=DEFAULT_H_GRID, variance_channel: int = AVG_VOLT,
                  keep_snippet_scores: bool = False) -> EvalReport:
    """Train on normal folds, tune (h, tau) on validation, report test AUROC per round."""
    by_id = {v.vehicle_id: v for v in vehicles}
    plan = build_folds(vehicles, k, derive_seed(seed, SEED_FOLDS))
    rounds = []
    for roles in plan.rounds():
        train = [by_id[i] for i in roles.train]
        val = [by_id[i] for i in roles.validation]
        test = [by_id[i] for i in roles.test]
        if any(v.health_label for v in train):
            raise ProtocolError("anomalous vehicle assigned to training")
        val_labels = [v.health_label for v in val]
        test_labels = [v.health_label for v in test]
        history = []
        if detector == "variance":
            val_vs = [variance_score(v, variance_channel) for v in val]
            test_vs = np.array([variance_score(v, variance_channel) for v in test])
            tau, _ = select_threshold(val_labels, val_vs)
            h = None
            val_auc = auroc(val_labels, val_vs)
            snippet_scores = None
        else:
            model = _train_scorer(detector, train, derive_seed(seed, SEED_ROUND_MODEL, roles.round),
                                  dyad_config, ae_config)
            history = list(model.history)
            val_ss = [model.score_snippets(list(v.snippets)) for v in val]
            test_ss = [model.score_snippets(list(v.snippets)) for v in test]
            params, diag = select_hyperparams(val_labels, val_ss, h_grid)
            h, tau, val_auc = params.h, params.tau, diag["val_auroc"]
            test_vs = vehicle_scores(test_ss, h)
            snippet_scores = test_ss
        fpr, tpr, _ = roc_curve(test_labels, test_vs)
        res = RoundResult(
            round=roles.round, auroc=auroc(test_labels, test_vs), h=h, tau=tau,
            confusion=confusion(test_labels, test_vs > tau), val_auroc=val_auc,
            roc_fpr=fpr.tolist(), roc_tpr=tpr.tolist(), test_vehicles=list(roles.test),
            test_labels=test_labels, test_scores=test_vs.tolist(), train_loss=history)
        if keep_snippet_scores and snippet_scores is not None:
            res.snippet_scores = {vid: s.tolist() for vid, s in zip(roles.test, snippet_scores)}
        log.info("%s round %d: test AUROC %.3f (h=%s, tau=%.4g)", detector, roles.round,
                 res.auroc, h, tau)
        rounds.append(res)
    config = {"detector": detector, "k": k, "seed": seed, "h_grid": list(h_grid)}
    if detector == "dyad":
        config["dyad"] = (dyad_config or DyadConfig()).to_dict()
    elif detector == "ae":
        config["ae"] = (ae_config or AEConfig()).to_dict()
    else:
        config["variance_channel"] = variance_channel
    return EvalReport(detector, seed, k, rounds, config)
