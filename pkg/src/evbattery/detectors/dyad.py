"""Input-conditioned variational detector.

The encoder GRU reads every modeled channel and produces a Gaussian posterior
over a latent code.  The decoder GRU receives, at each timestep, the latent
code concatenated with the *system input* channels (charging current and SOC)
and reconstructs only the *system response* channels (cell voltages and
temperatures).  Rare but healthy drive patterns, such as a charger injecting
current ripple, are therefore handed to the decoder instead of having to be
squeezed through the latent bottleneck.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import diffkit as dk
from ..core import (AVG_VOLT, CURRENT, MAX_TEMP, MAX_VOLT, MIN_TEMP, MIN_VOLT, SOC, TIMESTAMP,
                    NormStats, fit_normalizer)
from .base import TrainHistory, check_normal_only, stack_normalized


@dataclass(frozen=True)
class DyadConfig:
    input_channels: tuple = (CURRENT, SOC)
    response_channels: tuple = (AVG_VOLT, MAX_VOLT, MIN_VOLT, MAX_TEMP, MIN_TEMP)
    hidden_size: int = 64
    latent_size: int = 32
    epochs: int = 10
    kl_weight: float = 0.001
    batch_size: int = dk.BATCH_SIZE
    lr: float = 1e-3
    grad_clip: float = dk.GRAD_CLIP
    zero_latent: bool = False

    def __post_init__(self):
        inp, resp = tuple(self.input_channels), tuple(self.response_channels)
        object.__setattr__(self, "input_channels", inp)
        object.__setattr__(self, "response_channels", resp)
        if set(inp) & set(resp):
            raise ValueError("input and response channels must be disjoint")
        if not resp:
            raise ValueError("response channels must be non-empty")
        if TIMESTAMP in inp or TIMESTAMP in resp:
            raise ValueError("timestamps are not modeled")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be non-negative")

    @property
    def modeled_channels(self) -> tuple:
        return tuple(sorted(self.input_channels + self.response_channels))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["input_channels"] = list(self.input_channels)
        d["response_channels"] = list(self.response_channels)
        return d


class DyadModel:
    def __init__(self, config: DyadConfig, norm: NormStats, rng: np.random.Generator):
        self.config = config
        self.norm = norm
        c = config
        n_all = len(c.modeled_channels)
        self.params = p = dk.ModelParams()
        dk.init_gru(p, "enc", n_all, c.hidden_size, rng)
        dk.init_dense(p, "mu", c.hidden_size, c.latent_size, rng)
        dk.init_dense(p, "logvar", c.hidden_size, c.latent_size, rng)
        dk.init_gru(p, "dec", c.latent_size + len(c.input_channels), c.hidden_size, rng)
        dk.init_dense(p, "out", c.hidden_size, len(c.response_channels), rng)
        pos = {ch: i for i, ch in enumerate(c.modeled_channels)}
        self._inp = [pos[ch] for ch in c.input_channels]
        self._resp = [pos[ch] for ch in c.response_channels]
        self.history = TrainHistory()

    def prepare(self, snippets) -> np.ndarray:
        return stack_normalized(snippets, self.norm, self.config.modeled_channels)

    def encode(self, x):
        p = self.params
        hs, enc_cache = dk.gru_forward(x, None, *dk.gru_weights(p, "enc"))
        h_last = hs[:, -1]
        mu, mu_cache = dk.dense_forward(h_last, p["mu.W"], p["mu.b"])
        logvar, lv_cache = dk.dense_forward(h_last, p["logvar.W"], p["logvar.b"])
        return mu, logvar, (hs.shape, enc_cache, mu_cache, lv_cache)

    def decode(self, z, x):
        p = self.params
        if self.config.zero_latent:
            z = np.zeros_like(z)
        n, t, _ = x.shape
        dec_in = np.concatenate(
            [np.broadcast_to(z[:, None, :], (n, t, z.shape[1])), x[:, :, self._inp]], axis=2)
        hs, dec_cache = dk.gru_forward(dec_in, None, *dk.gru_weights(p, "dec"))
        y, out_cache = dk.dense_forward(hs, p["out.W"], p["out.b"])
        return y, (dec_cache, out_cache)

    def reconstruct(self, x) -> np.ndarray:
        """Response-channel reconstruction using the posterior mean latent."""
        mu, _, _ = self.encode(x)
        return self.decode(mu, x)[0]

    def loss_and_grads(self, x, noise) -> tuple[float, float]:
        """Accumulate parameter gradients for one batch; return (reconstruction, KL) terms."""
        c, p = self.config, self.params
        n = x.shape[0]
        mu, logvar, (hs_shape, enc_cache, mu_cache, lv_cache) = self.encode(x)
        z, z_cache = dk.reparameterize(mu, logvar, noise)
        y, (dec_cache, out_cache) = self.decode(z, x)
        rec, dy = dk.mse(y, x[:, :, self._resp])
        kl = dk.gaussian_kl(mu, logvar) / n

        d_hs, dW, db = dk.dense_backward(dy, out_cache)
        p.accumulate("out.W", dW)
        p.accumulate("out.b", db)
        # z is repeated at every step, so only the time-summed input gradient is needed
        d_in, _, dWx, dWh, dbx, dbh = dk.gru_backward(d_hs, dec_cache, "time_sum")
        for name, g in zip(("Wx", "Wh", "bx", "bh"), (dWx, dWh, dbx, dbh)):
            p.accumulate(f"dec.{name}", g)
        dz = d_in[:, :c.latent_size]
        if c.zero_latent:
            dz = np.zeros_like(dz)
        dmu, dlogvar = dk.reparameterize_backward(dz, z_cache)
        kmu, klv = dk.gaussian_kl_backward(mu, logvar, c.kl_weight / n)
        dh_mu, dW, db = dk.dense_backward(dmu + kmu, mu_cache)
        p.accumulate("mu.W", dW)
        p.accumulate("mu.b", db)
        dh_lv, dW, db = dk.dense_backward(dlogvar + klv, lv_cache)
        p.accumulate("logvar.W", dW)
        p.accumulate("logvar.b", db)
        d_enc = np.zeros(hs_shape)
        d_enc[:, -1] = dh_mu + dh_lv
        _, _, dWx, dWh, dbx, dbh = dk.gru_backward(d_enc, enc_cache, "none")
        for name, g in zip(("Wx", "Wh", "bx", "bh"), (dWx, dWh, dbx, dbh)):
            p.accumulate(f"enc.{name}", g)
        return rec, kl

    def score_array(self, x, chunk: int = 512) -> np.ndarray:
        """Per-snippet reconstruction MSE over response channels for normalized ``x``."""
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            xb = x[s:s + chunk]
            err = self.reconstruct(xb) - xb[:, :, self._resp]
            out[s:s + chunk] = np.mean(err * err, axis=(1, 2))
        return out

    def score_snippets(self, snippets) -> np.ndarray:
        if len(snippets) == 0:
            return np.empty(0)
        return self.score_array(self.prepare(snippets))


def dyad_train(vehicles, config: DyadConfig | None = None, seed: int = 0,
               norm: NormStats | None = None) -> DyadModel:
    """Fit the detector on snippets of normal vehicles only."""
    config = config or DyadConfig()
    check_normal_only(vehicles)
    snippets = [s for v in vehicles for s in v.snippets]
    if norm is None:
        norm = fit_normalizer(snippets)
    rng = np.random.default_rng(seed)
    model = DyadModel(config, norm, rng)
    x = model.prepare(snippets)
    train_array(model, x, rng)
    return model


def train_array(model: DyadModel, x: np.ndarray, rng: np.random.Generator) -> DyadModel:
    c = model.config
    n = x.shape[0]
    opt = dk.Adam(model.params, lr=c.lr, period=c.epochs * dk.n_batches(n, c.batch_size))
    for _ in range(c.epochs):
        total_rec = total_kl = 0.0
        for idx in dk.minibatches(n, c.batch_size, rng):
            xb = x[idx]
            noise = rng.standard_normal((len(idx), c.latent_size))
            model.params.zero_grad()
            rec, kl = model.loss_and_grads(xb, noise)
            model.params.clip_grad_norm(c.grad_clip)
            opt.step()
            total_rec += rec * len(idx)
            total_kl += kl * len(idx)
        model.history.append(total_rec / n + c.kl_weight * total_kl / n)
    if not model.params.all_finite():
        raise FloatingPointError("non-finite parameters after training")
    return model


def dyad_score(model: DyadModel, snippet):
    from .base import SnippetScore
    score = float(model.score_snippets([snippet])[0])
    return SnippetScore(snippet.vehicle_id, snippet.snippet_index, score)
