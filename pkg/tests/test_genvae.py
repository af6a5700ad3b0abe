import numpy as np
import pytest

from gazeconv.errors import ConfigurationError, LengthError, ShapeError
from gazeconv.genvae import (VaeTrainConfig, build_vae, center_scanpath, delta_sections, generate_scanpath,
                             vae_decode, vae_encode, vae_loss, vae_train)
from gazeconv.tensor import Tensor
from gazeconv.toy import fixation_saccade_sequence
from helpers import assert_grad_close, numeric_gradient


def test_shapes(rng):
    model = build_vae(rng)
    mean, log_var = vae_encode(model, Tensor(rng.normal(size=(3, 64))))
    assert mean.values.shape == log_var.values.shape == (1, 16)
    assert vae_decode(model, mean).values.shape == (3, 64)
    with pytest.raises(ShapeError):
        vae_encode(model, Tensor(np.zeros((3, 30))))
    with pytest.raises(ShapeError):
        vae_decode(model, Tensor(np.zeros((2, 4))))


def test_decode_is_deterministic(rng):
    model = build_vae(rng)
    z = Tensor(rng.normal(size=(1, 8)))
    np.testing.assert_array_equal(vae_decode(model, z).values, vae_decode(model, z).values)


def test_loss_gradient_with_frozen_noise(rng):
    model = build_vae(rng, encoder_widths=(4, 4), decoder_widths=(4, 4))
    x = rng.normal(scale=0.1, size=(3, 16))
    noise = rng.normal(size=(1, 4))
    for layer in model.layers:
        layer.zero_grad()
    vae_loss(model, Tensor(x), rng, 0.5, noise=noise)[0].backward()

    def value():
        return vae_loss(model, Tensor(x), rng, 0.5, noise=noise)[0].item()

    for layer in (model.encoder_layers[0], model.head, model.decoder_layers[-1]):
        analytic = layer.weight_grad.copy()
        assert_grad_close(analytic, numeric_gradient(value, layer.weight), rtol=1e-4, atol=1e-9)


def test_config_defaults_and_trace():
    cfg = VaeTrainConfig()
    assert (cfg.weight_decay, cfg.momentum, cfg.optimizer) == (1e-6, 0.9, "sgd_momentum")
    s = cfg.schedule()
    assert s.lr_at(100) == 1e-4 and s.lr_at(101) == 1e-3 and s.lr_at(1001) == pytest.approx(1e-4)


def test_delta_sections(rng):
    seq = fixation_saccade_sequence(rng, 130)
    sections = delta_sections([seq], 32)
    assert len(sections) == 4 and all(s.values.shape == (3, 32) for s in sections)
    with pytest.raises(ConfigurationError):
        delta_sections([seq], 30)


def test_generation_properties(rng):
    model = build_vae(rng)
    with pytest.raises(ConfigurationError):
        generate_scanpath(model, rng, 64)
    corpus = delta_sections([fixation_saccade_sequence(rng, 200)], 32)
    model, history = vae_train(model, corpus, VaeTrainConfig(max_epochs=3, warmup_epochs=1), rng)
    assert len(history) == 3 and {"loss", "recon_loss", "kl_loss"} <= set(history[0])
    seq = generate_scanpath(model, rng, 64, start=(500.0, 400.0, 10.0))
    assert len(seq) == 64
    assert (seq.x[0], seq.y[0], seq.t[0]) == (500.0, 400.0, 10.0)
    assert np.all(np.diff(seq.t) >= 1.0)
    with pytest.raises(LengthError):
        generate_scanpath(model, rng, 30)


def test_generation_is_seeded(rng):
    model = build_vae(rng)
    model.trained = True
    a = generate_scanpath(model, np.random.default_rng(3), 32)
    b = generate_scanpath(model, np.random.default_rng(3), 32)
    np.testing.assert_array_equal(a.x, b.x)


def test_center_scanpath(rng):
    seq = fixation_saccade_sequence(rng, 50)
    c = center_scanpath(seq, (1000, 800))
    assert c.x.mean() == pytest.approx(500) and c.y.mean() == pytest.approx(400)
    np.testing.assert_allclose(np.diff(c.x), np.diff(seq.x), atol=1e-9)
