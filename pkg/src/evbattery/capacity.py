"""Capacity regression from charging snippets.

Three regressors share one interface: a GRU over the snippet feeding two dense
layers, a two-hidden-layer MLP on the flattened snippet, and closed-form ridge
regression on per-channel summary features.  Only capacity-labeled snippets
are used, and health labels are never read.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffkit as dk
from .core import MODEL_CHANNELS, NormStats, ProtocolError, derive_seed, fit_normalizer
from .detectors.base import TrainHistory, stack_normalized
from .evalkit.folds import build_group_folds
from .evalkit.metrics import rmse

REGRESSORS = ("recurrent", "feedforward", "ridge")

SEED_FOLDS = 0
SEED_ROUND_MODEL = 1


@dataclass(frozen=True)
class RegressorConfig:
    kind: str = "recurrent"
    hidden_size: int = 32
    epochs: int = 30
    lr: float = 3e-3
    batch_size: int = 32
    ridge_lambda: float = 1e-3
    grad_clip: float = dk.GRAD_CLIP
    channels: tuple = MODEL_CHANNELS

    def __post_init__(self):
        if self.kind not in REGRESSORS:
            raise ValueError(f"unknown regressor kind {self.kind!r}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        object.__setattr__(self, "channels", tuple(self.channels))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        return d


def summary_features(x: np.ndarray) -> np.ndarray:
    """Per-channel mean, std, min, max and last value of (n, T, C) snippets."""
    return np.concatenate([x.mean(axis=1), x.std(axis=1), x.min(axis=1), x.max(axis=1),
                           x[:, -1, :]], axis=1)


def ridge_fit(X, y, lam: float) -> tuple[np.ndarray, float]:
    """Ridge regression with an unpenalized intercept.

    Solves ``(Xc^T Xc + lam I) w = Xc^T yc`` on centered data; with ``lam == 0``
    the minimum-norm least-squares solution is returned.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc, yc = X - x_mean, y - y_mean
    if lam > 0:
        coef = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ yc)
    else:
        coef = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    return coef, float(y_mean - x_mean @ coef)


def ridge_residual(X, y, lam: float, coef) -> float:
    """Norm of the normal-equation residual for a centered ridge fit."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    return float(np.linalg.norm((Xc.T @ Xc + lam * np.eye(X.shape[1])) @ coef - Xc.T @ yc))


class CapacityModel:
    def __init__(self, config: RegressorConfig, norm: NormStats, target_mean: float,
                 target_std: float, rng: np.random.Generator, n_steps: int = 128):
        self.config = c = config
        self.norm = norm
        self.target_mean = target_mean
        self.target_std = target_std
        self.params = p = dk.ModelParams()
        self.history = TrainHistory()
        n_ch = len(c.channels)
        if c.kind == "recurrent":
            dk.init_gru(p, "gru", n_ch, c.hidden_size, rng)
            dk.init_dense(p, "fc1", c.hidden_size, c.hidden_size, rng)
            dk.init_dense(p, "fc2", c.hidden_size, 1, rng)
        elif c.kind == "feedforward":
            dk.init_dense(p, "fc0", n_steps * n_ch, c.hidden_size, rng)
            dk.init_dense(p, "fc1", c.hidden_size, c.hidden_size, rng)
            dk.init_dense(p, "fc2", c.hidden_size, 1, rng)
        self.coef = None
        self.intercept = 0.0
        self.feature_mean = None
        self.feature_std = None

    def prepare(self, snippets) -> np.ndarray:
        return stack_normalized(snippets, self.norm, self.config.channels)

    def _features(self, x):
        f = summary_features(x)
        return (f - self.feature_mean) / self.feature_std

    def forward(self, x):
        """Standardized prediction (n,) and cache."""
        p, kind = self.params, self.config.kind
        if kind == "recurrent":
            hs, gc = dk.gru_forward(x, None, *dk.gru_weights(p, "gru"))
            h1, c1 = dk.dense_forward(hs[:, -1], p["fc1.W"], p["fc1.b"], "relu")
            y, c2 = dk.dense_forward(h1, p["fc2.W"], p["fc2.b"])
            return y[:, 0], (hs.shape, gc, c1, c2)
        h0, c0 = dk.dense_forward(x.reshape(x.shape[0], -1), p["fc0.W"], p["fc0.b"], "relu")
        h1, c1 = dk.dense_forward(h0, p["fc1.W"], p["fc1.b"], "relu")
        y, c2 = dk.dense_forward(h1, p["fc2.W"], p["fc2.b"])
        return y[:, 0], (c0, c1, c2)

    def backward(self, dy, cache) -> None:
        p = self.params
        dh, dW, db = dk.dense_backward(dy[:, None], cache[-1])
        p.accumulate("fc2.W", dW)
        p.accumulate("fc2.b", db)
        dh, dW, db = dk.dense_backward(dh, cache[-2])
        p.accumulate("fc1.W", dW)
        p.accumulate("fc1.b", db)
        if self.config.kind == "recurrent":
            hs_shape, gc = cache[0], cache[1]
            dhs = np.zeros(hs_shape)
            dhs[:, -1] = dh
            _, _, dWx, dWh, dbx, dbh = dk.gru_backward(dhs, gc)
            for name, g in zip(("Wx", "Wh", "bx", "bh"), (dWx, dWh, dbx, dbh)):
                p.accumulate(f"gru.{name}", g)
        else:
            _, dW, db = dk.dense_backward(dh, cache[0])
            p.accumulate("fc0.W", dW)
            p.accumulate("fc0.b", db)

    def predict_array(self, x, chunk: int = 512) -> np.ndarray:
        if self.config.kind == "ridge":
            return self._features(x) @ self.coef + self.intercept
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            out[s:s + chunk] = self.forward(x[s:s + chunk])[0]
        return out * self.target_std + self.target_mean

    def predict(self, snippets) -> np.ndarray:
        if len(snippets) == 0:
            return np.empty(0)
        return self.predict_array(self.prepare(snippets))


def _labels(snippets) -> np.ndarray:
    missing = [s for s in snippets if s.capacity_label is None]
    if missing:
        s = missing[0]
        raise ProtocolError(f"unlabeled snippet {s.vehicle_id}#{s.snippet_index} in capacity data "
                            f"({len(missing)} total)")
    return np.array([s.capacity_label for s in snippets], dtype=np.float64)


def train_regressor(snippets, config: RegressorConfig | None = None, seed: int = 0,
                    norm: NormStats | None = None) -> CapacityModel:
    config = config or RegressorConfig()
    snippets = list(snippets)
    if not snippets:
        raise ValueError("no training data")
    y = _labels(snippets)
    if norm is None:
        norm = fit_normalizer(snippets)
    rng = np.random.default_rng(seed)
    t_std = float(y.std()) if y.std() > 0 else 1.0
    model = CapacityModel(config, norm, float(y.mean()), t_std, rng, snippets[0].series.shape[0])
    x = model.prepare(snippets)
    if config.kind == "ridge":
        f = summary_features(x)
        model.feature_mean = f.mean(axis=0)
        model.feature_std = np.where(f.std(axis=0) > 0, f.std(axis=0), 1.0)
        model.coef, model.intercept = ridge_fit(model._features(x), y, config.ridge_lambda)
        return model
    target = (y - model.target_mean) / model.target_std
    opt = dk.Adam(model.params, lr=config.lr)
    n = x.shape[0]
    for _ in range(config.epochs):
        total = 0.0
        for idx in dk.minibatches(n, config.batch_size, rng):
            model.params.zero_grad()
            pred, cache = model.forward(x[idx])
            loss, dy = dk.mse(pred, target[idx])
            model.backward(dy, cache)
            model.params.clip_grad_norm(config.grad_clip)
            opt.step()
            total += loss * len(idx)
        model.history.append(total / n)
    if not model.params.all_finite():
        raise FloatingPointError("non-finite parameters after training")
    return model


def predict_capacity(model: CapacityModel, snippet) -> float:
    return float(model.predict([snippet])[0])


@dataclass
class CapacityReport:
    regressor: str
    seed: int
    k: int
    rmse: list
    baseline_rmse: list
    predictions: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def rmse_mean(self) -> float:
        return float(np.mean(self.rmse))

    @property
    def rmse_std(self) -> float:
        return float(np.std(self.rmse))

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_rmse))

    def to_dict(self) -> dict:
        return {
            "kind": "capacity",
            "regressor": self.regressor,
            "seed": self.seed,
            "k": self.k,
            "config": self.config,
            "rounds": [{"round": r, "rmse": a, "baseline_rmse": b}
                       for r, (a, b) in enumerate(zip(self.rmse, self.baseline_rmse))],
            "summary": {"rmse_mean": self.rmse_mean, "rmse_std": self.rmse_std,
                        "baseline_rmse_mean": self.baseline_mean,
                        "baseline_rmse_std": float(np.std(self.baseline_rmse))},
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        with open(out / "predictions.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vehicle_id", "snippet_index", "predicted_capacity", "true_capacity"])
            for vid, idx, pred, true in self.predictions:
                w.writerow([vid, idx, repr(float(pred)), repr(float(true))])
        return path


def evaluate_capacity(vehicles, config: RegressorConfig | None = None, k: int = 5, seed: int = 0,
                      folds=None) -> CapacityReport:
    """k-fold capacity regression over all vehicles regardless of health label."""
    config = config or RegressorConfig()
    labeled = {v.vehicle_id: [s for s in v.snippets if s.capacity_label is not None]
               for v in vehicles}
    if folds is None:
        folds = build_group_folds(labeled, k, derive_seed(seed, SEED_FOLDS))
    k = len(folds)
    rmses, baselines, rows = [], [], []
    for r in range(k):
        train = [s for j in range(k) if j != r for vid in folds[j] for s in labeled[vid]]
        test = [s for vid in folds[r] for s in labeled[vid]]
        if not test:
            raise ProtocolError(f"round {r} has no capacity-labeled test snippets")
        if not train:
            raise ProtocolError(f"round {r} has no capacity-labeled training snippets")
        model = train_regressor(train, config, derive_seed(seed, SEED_ROUND_MODEL, r))
        y_test = _labels(test)
        pred = model.predict(test)
        rmses.append(rmse(pred, y_test))
        baselines.append(rmse(np.full(y_test.shape, _labels(train).mean()), y_test))
        rows.extend((s.vehicle_id, s.snippet_index, p, t) for s, p, t in zip(test, pred, y_test))
    cfg = {"regressor": config.to_dict(), "k": k, "seed": seed}
    return CapacityReport(config.kind, seed, k, rmses, baselines, rows, cfg)
