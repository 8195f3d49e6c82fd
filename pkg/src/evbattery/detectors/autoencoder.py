"""Feed-forward autoencoder baseline on flattened snippets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import diffkit as dk
from ..core import MODEL_CHANNELS, NormStats, fit_normalizer
from .base import SnippetScore, TrainHistory, check_normal_only, stack_normalized


@dataclass(frozen=True)
class AEConfig:
    channels: tuple = MODEL_CHANNELS
    hidden_sizes: tuple = (64, 32, 32, 64)
    activation: str = "sigmoid"
    batchnorm: bool = True
    dropout: float = 0.2
    epochs: int = 10
    batch_size: int = dk.BATCH_SIZE
    lr: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


class AEModel:
    def __init__(self, config: AEConfig, norm: NormStats, n_steps: int, rng: np.random.Generator):
        self.config = config
        self.norm = norm
        self.n_in = n_steps * len(config.channels)
        self.params = p = dk.ModelParams()
        sizes = (self.n_in,) + config.hidden_sizes
        self.bn_stats = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            dk.init_dense(p, f"h{i}", a, b, rng)
            if config.batchnorm:
                dk.init_batchnorm(p, f"bn{i}", b)
                self.bn_stats.append(dk.BatchNormStats(b))
        dk.init_dense(p, "out", sizes[-1], self.n_in, rng)
        self.history = TrainHistory()

    def prepare(self, snippets) -> np.ndarray:
        x = stack_normalized(snippets, self.norm, self.config.channels)
        return x.reshape(x.shape[0], -1)

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        c, p = self.config, self.params
        caches = []
        h = x
        for i in range(len(c.hidden_sizes)):
            h, dc = dk.dense_forward(h, p[f"h{i}.W"], p[f"h{i}.b"])
            bc = None
            if c.batchnorm:
                h, bc = dk.batchnorm_forward(h, p[f"bn{i}.gamma"], p[f"bn{i}.beta"],
                                             self.bn_stats[i], training)
            h = act_out = dk.ACTIVATIONS[c.activation][0](h)
            h, mask = dk.dropout_forward(h, c.dropout, rng, training)
            caches.append((dc, bc, act_out, mask))
        y, oc = dk.dense_forward(h, p["out.W"], p["out.b"])
        return y, (caches, oc)

    def backward(self, dy, cache) -> None:
        c, p = self.config, self.params
        caches, oc = cache
        dh, dW, db = dk.dense_backward(dy, oc)
        p.accumulate("out.W", dW)
        p.accumulate("out.b", db)
        act_grad = dk.ACTIVATIONS[c.activation][1]
        for i in range(len(c.hidden_sizes) - 1, -1, -1):
            dc, bc, act_out, mask = caches[i]
            dh = dk.dropout_backward(dh, mask) * act_grad(act_out)
            if c.batchnorm:
                dh, dg, dbeta = dk.batchnorm_backward(dh, bc)
                p.accumulate(f"bn{i}.gamma", dg)
                p.accumulate(f"bn{i}.beta", dbeta)
            dh, dW, db = dk.dense_backward(dh, dc)
            p.accumulate(f"h{i}.W", dW)
            p.accumulate(f"h{i}.b", db)

    def score_array(self, x, chunk: int = 1024) -> np.ndarray:
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            xb = x[s:s + chunk]
            err = self.forward(xb, training=False)[0] - xb
            out[s:s + chunk] = np.mean(err * err, axis=1)
        return out

    def score_snippets(self, snippets) -> np.ndarray:
        if len(snippets) == 0:
            return np.empty(0)
        return self.score_array(self.prepare(snippets))


def ae_train(vehicles, config: AEConfig | None = None, seed: int = 0,
             norm: NormStats | None = None) -> AEModel:
    config = config or AEConfig()
    check_normal_only(vehicles)
    snippets = [s for v in vehicles for s in v.snippets]
    if norm is None:
        norm = fit_normalizer(snippets)
    rng = np.random.default_rng(seed)
    model = AEModel(config, norm, snippets[0].series.shape[0], rng)
    return train_array(model, model.prepare(snippets), rng)


def train_array(model: AEModel, x: np.ndarray, rng: np.random.Generator) -> AEModel:
    c = model.config
    n = x.shape[0]
    opt = dk.Adam(model.params, lr=c.lr, period=None)
    for _ in range(c.epochs):
        total = 0.0
        for idx in dk.minibatches(n, c.batch_size, rng):
            xb = x[idx]
            model.params.zero_grad()
            y, cache = model.forward(xb, training=True, rng=rng)
            loss, dy = dk.mse(y, xb)
            model.backward(dy, cache)
            opt.step()
            total += loss * len(idx)
        model.history.append(total / n)
    if not model.params.all_finite():
        raise FloatingPointError("non-finite parameters after training")
    return model


def ae_score(model: AEModel, snippet) -> SnippetScore:
    return SnippetScore(snippet.vehicle_id, snippet.snippet_index,
                        float(model.score_snippets([snippet])[0]))
