import numpy as np
import pytest

from evbattery.core import (AVG_VOLT, MAX_TEMP, MAX_VOLT, MIN_TEMP, MIN_VOLT, SOC, ChargingSnippet,
                            NormStats, ProtocolError, Vehicle)
from evbattery.detectors import (AEConfig, AEModel, DyadConfig, DyadModel, SnippetScore, ae_score,
                                 ae_train, dyad_score, dyad_train, variance_score)
from evbattery.detectors.base import read_scores, snippet_scores, write_scores
from evbattery.synthgen import GenConfig, anonymize, generate_fleet

SMALL_DYAD = DyadConfig(hidden_size=8, latent_size=4, epochs=10)
IDENTITY_NORM = NormStats(np.zeros(8), np.ones(8))


@pytest.fixture(scope="module")
def smoke_fleet():
    return generate_fleet(GenConfig(seed=5, n_normal=2, n_anomalous=0, snippets_per_vehicle=25))


@pytest.fixture(scope="module")
def fault_fleet():
    return generate_fleet(GenConfig(seed=11, n_normal=6, n_anomalous=4, snippets_per_vehicle=60,
                                    fault_severity=0.8, transient_fraction=0.3,
                                    ripple_probability=0.0))


def test_dyad_loss_decreases(smoke_fleet):
    cfg = DyadConfig(hidden_size=8, latent_size=4, epochs=40, lr=1e-2, batch_size=16)
    h = np.array(dyad_train(smoke_fleet, cfg, seed=0).history)
    assert len(h) == 40
    # minibatch and latent sampling noise make single epochs jitter; block means must fall
    blocks = h.reshape(4, 10).mean(axis=1)
    assert np.all(np.diff(blocks) < 0)
    assert h[-5:].mean() < 0.1 * h[0]


def test_dyad_seed_determinism(smoke_fleet):
    a = dyad_train(smoke_fleet, SMALL_DYAD, seed=3)
    b = dyad_train(smoke_fleet, SMALL_DYAD, seed=3)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    s = list(smoke_fleet[0].snippets[:3])
    np.testing.assert_array_equal(a.score_snippets(s), b.score_snippets(s))


def test_dyad_rejects_anomalous_training(smoke_fleet):
    bad = [Vehicle("A", 1, tuple(ChargingSnippet("A", s.snippet_index, s.mileage, s.series)
                                 for s in smoke_fleet[0].snippets))]
    with pytest.raises(ProtocolError):
        dyad_train(bad, SMALL_DYAD)


def test_dyad_zero_latent_ignores_encoder():
    cfg = DyadConfig(hidden_size=6, latent_size=3, kl_weight=0.0, zero_latent=True)
    model = DyadModel(cfg, IDENTITY_NORM, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((4, 128, 7))
    before = model.reconstruct(x)
    model.params["enc.Wx"][...] += 1.0
    model.params["mu.b"][...] += 3.0
    np.testing.assert_array_equal(model.reconstruct(x), before)
    model.params.zero_grad()
    model.loss_and_grads(x, np.zeros((4, 3)))
    assert np.all(model.params.grad("enc.Wx") == 0)


def test_dyad_decoder_reads_only_inputs():
    # the decoder sees current and soc; response channels only enter through the encoder
    cfg = DyadConfig(hidden_size=6, latent_size=3, zero_latent=True)
    model = DyadModel(cfg, IDENTITY_NORM, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((2, 128, 7))
    y = x.copy()
    y[:, :, [AVG_VOLT, MAX_VOLT, MIN_VOLT, MAX_TEMP, MIN_TEMP]] += 1.0
    np.testing.assert_array_equal(model.reconstruct(x), model.reconstruct(y))


def test_dyad_gradients_match_finite_differences():
    from _oracles import numeric_grad, rel_error
    cfg = DyadConfig(hidden_size=3, latent_size=2, kl_weight=0.3)
    model = DyadModel(cfg, IDENTITY_NORM, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 5, 7))
    noise = rng.standard_normal((2, 2))

    def loss():
        mu, logvar, _ = model.encode(x)
        z = mu + np.exp(0.5 * logvar) * noise
        y, _ = model.decode(z, x)
        err = y - x[:, :, model._resp]
        return float(np.mean(err ** 2)) + cfg.kl_weight * \
            float(-0.5 * np.sum(1 + logvar - mu ** 2 - np.exp(logvar))) / 2

    model.params.zero_grad()
    model.loss_and_grads(x, noise)
    for name in model.params:
        assert rel_error(model.params.grad(name), numeric_grad(loss, model.params[name])) <= 1e-4


def test_dyad_exact_reconstruction_scores_zero():
    cfg = DyadConfig(hidden_size=4, latent_size=2)
    model = DyadModel(cfg, IDENTITY_NORM, np.random.default_rng(0))
    target = np.array([3.9, 3.95, 3.85, 30.0, 25.0])
    model.params["out.W"][...] = 0.0
    model.params["out.b"][...] = target
    series = np.zeros((128, 8))
    series[:, [AVG_VOLT, MAX_VOLT, MIN_VOLT, MAX_TEMP, MIN_TEMP]] = target
    series[:, 7] = np.arange(128.0)
    s = ChargingSnippet("V", 0, 0.0, series)
    sc = dyad_score(model, s)
    assert isinstance(sc, SnippetScore) and sc.score == 0.0
    assert dyad_score(model, s) == sc


def test_dyad_fault_snippets_score_higher(fault_fleet):
    normal = [v for v in fault_fleet if v.health_label == 0]
    model = dyad_train(normal[:4], DyadConfig(hidden_size=16, latent_size=8), seed=0)
    held_out = np.concatenate([model.score_snippets(list(v.snippets)) for v in normal[4:]])
    faulty = []
    for v in fault_fleet:
        if v.health_label:
            manifest = [s for s in v.snippets if s.snippet_index >= 0.7 * len(v.snippets)]
            faulty.append(model.score_snippets(manifest))
    assert np.concatenate(faulty).mean() > held_out.mean()


def test_ae_overfits_single_snippet(smoke_fleet):
    s = smoke_fleet[0].snippets[0]
    fleet = [Vehicle(s.vehicle_id, 0, tuple(ChargingSnippet(s.vehicle_id, i, 0.0, s.series)
                                            for i in range(64)))]
    cfg = AEConfig(hidden_sizes=(32,), dropout=0.0, epochs=300, batch_size=64, lr=1e-2)
    model = ae_train(fleet, cfg, seed=0)
    assert model.history[-1] < 1e-3


def test_ae_inference_deterministic(smoke_fleet):
    model = ae_train(smoke_fleet, AEConfig(epochs=2), seed=0)
    snips = list(smoke_fleet[1].snippets)
    np.testing.assert_array_equal(model.score_snippets(snips), model.score_snippets(snips))
    assert ae_score(model, snips[0]).score == model.score_snippets(snips[:1])[0]


def test_ae_zero_net_zero_input():
    model = AEModel(AEConfig(), IDENTITY_NORM, 128, np.random.default_rng(0))
    for k in model.params:
        if not k.endswith("gamma"):
            model.params[k][...] = 0.0
    series = np.zeros((128, 8))
    series[:, 7] = np.arange(128.0)
    assert ae_score(model, ChargingSnippet("V", 0, 0.0, series)).score == 0.0


def test_ae_gradients_match_finite_differences():
    from _oracles import numeric_grad, rel_error
    cfg = AEConfig(hidden_sizes=(3, 2), dropout=0.0)
    model = AEModel(cfg, IDENTITY_NORM, 128, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((4, 896)) * 0.1

    def loss():
        model.bn_stats = [type(b)(b.mean.size) for b in model.bn_stats]
        y, _ = model.forward(x, training=True)
        return float(np.mean((y - x) ** 2))

    y, cache = model.forward(x, training=True)
    model.params.zero_grad()
    model.backward(2 * (y - x) / y.size, cache)
    for name in ("h0.b", "h1.W", "bn0.gamma", "bn1.beta", "out.b"):
        assert rel_error(model.params.grad(name), numeric_grad(loss, model.params[name])) <= 1e-4


def test_variance_score_examples():
    const = Vehicle("V", 0, (ChargingSnippet("V", 0, 0.0, np.ones((128, 8)) *
                                             np.r_[np.ones(7), 0][None] +
                                             np.c_[np.zeros((128, 7)), np.arange(128.0)]),))
    assert variance_score(const) == 0.0
    series = np.zeros((128, 8))
    series[:, AVG_VOLT] = np.where(np.arange(128) % 2, 1.0, -1.0)
    series[:, 7] = np.arange(128.0)
    assert variance_score(Vehicle("V", 0, (ChargingSnippet("V", 0, 0.0, series),))) == 1.0
    with pytest.raises(ValueError):
        variance_score(Vehicle("V", 0))


def test_variance_soc_invariant_under_time_shift(smoke_fleet):
    shifted = anonymize(smoke_fleet, amplitude=0.0, time_shift=1234.5)
    for a, b in zip(smoke_fleet, shifted):
        assert variance_score(a, SOC) == variance_score(b, SOC)


def test_snippet_score_csv_roundtrip(tmp_path, smoke_fleet):
    snips = list(smoke_fleet[0].snippets[:4])
    scores = snippet_scores(snips, [0.1, 0.2, 1e-9, 3.0])
    write_scores(tmp_path / "s.csv", scores)
    assert read_scores(tmp_path / "s.csv") == scores
    with pytest.raises(ValueError):
        SnippetScore("V", 0, float("nan"))
    with pytest.raises(ValueError):
        SnippetScore("V", 0, -1.0)
