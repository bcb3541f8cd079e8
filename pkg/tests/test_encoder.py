"""Noise encoder shape, bound, and gradient checks."""

import numpy as np
import numpy.testing as npt
import pytest

from quigan.encoder import EncoderConfig, NoiseEncoder, sample_latent


def make(d=4, seed=0, **kw):
    return NoiseEncoder(EncoderConfig(latent_dim=d, **kw), np.random.default_rng(seed))


def test_output_shapes_and_bounds():
    enc = make(d=6)
    a = sample_latent(np.random.default_rng(1), 32, 6)
    out = enc(a)
    assert out.z.shape == (32, 6)
    assert out.alpha.shape == (32,) and out.beta.shape == (32,)
    assert np.all(np.abs(out.z.data) <= np.pi)
    assert np.all(out.alpha.data >= 1e-3)
    assert np.all(np.isfinite(out.beta.data))


def test_initialization_scheme():
    enc = make(d=4)
    sizes = [(4, 32), (32, 32), (32, 6)]
    for w, b, (n_in, n_out) in zip(enc.weights, enc.biases, sizes):
        assert w.shape == (n_in, n_out)
        limit = np.sqrt(6.0 / (n_in + n_out))
        assert np.all(np.abs(w.data) <= limit)
        assert np.all(b.data == 0.0)
    assert len(enc.parameters()) == 6
    assert set(enc.named_parameters()) == {
        "encoder.w0", "encoder.b0", "encoder.w1", "encoder.b1", "encoder.w2", "encoder.b2",
    }


def test_init_is_deterministic_given_seed():
    w_a = make(seed=42).weights[0].data
    w_b = make(seed=42).weights[0].data
    assert np.array_equal(w_a, w_b)


def test_unconstrained_alpha_is_raw_head():
    cfg_open = EncoderConfig(latent_dim=3, constrain_alpha=False)
    enc = NoiseEncoder(cfg_open, np.random.default_rng(5))
    a = sample_latent(np.random.default_rng(6), 16, 3)

    h = np.tanh(a @ enc.weights[0].data + enc.biases[0].data)
    h = np.tanh(h @ enc.weights[1].data + enc.biases[1].data)
    head = h @ enc.weights[2].data + enc.biases[2].data
    out = enc(a)
    npt.assert_allclose(out.alpha.data, head[:, 3], atol=1e-12)
    npt.assert_allclose(out.beta.data, head[:, 4], atol=1e-12)
    npt.assert_allclose(out.z.data, np.pi * np.tanh(head[:, :3]), atol=1e-12)


def test_gradients_reach_every_parameter():
    enc = make(d=3, seed=9)
    a = sample_latent(np.random.default_rng(10), 8, 3)
    out = enc(a)
    loss = (out.z * out.z).sum() + (out.alpha + out.beta * 2.0).sum()
    loss.backward()
    for name, p in enc.named_parameters().items():
        assert p.grad is not None, name
        assert np.any(p.grad.data != 0.0), name


def test_gradient_matches_finite_differences():
    enc = make(d=2, seed=3, hidden=(5,))
    a = sample_latent(np.random.default_rng(4), 4, 2)

    def loss_value():
        out = enc(a)
        return (out.z.sum() + out.alpha.sum() * 0.5 - out.beta.mean())

    loss_value().backward()
    w = enc.weights[0]
    analytic = w.grad.data.copy()

    eps = 1e-6
    fd = np.zeros_like(w.data)
    for i in range(w.data.shape[0]):
        for j in range(w.data.shape[1]):
            orig = w.data[i, j]
            w.data[i, j] = orig + eps
            hi = loss_value().item()
            w.data[i, j] = orig - eps
            lo = loss_value().item()
            w.data[i, j] = orig
            fd[i, j] = (hi - lo) / (2 * eps)
    npt.assert_allclose(analytic, fd, atol=1e-8, rtol=1e-5)


def test_latent_sampling_contract():
    rng = np.random.default_rng(77)
    a = sample_latent(rng, 500, 8)
    assert a.shape == (500, 8)
    assert np.all(a > -1.0) and np.all(a < 1.0)
    b1 = sample_latent(np.random.default_rng(3), 10, 4)
    b2 = sample_latent(np.random.default_rng(3), 10, 4)
    assert np.array_equal(b1, b2)


def test_input_validation():
    enc = make(d=4)
    with pytest.raises(ValueError):
        enc(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        enc(np.zeros(4))
    with pytest.raises(ValueError):
        enc(np.full((2, 4), np.nan))
    with pytest.raises(ValueError):
        EncoderConfig(latent_dim=0)
    with pytest.raises(ValueError):
        EncoderConfig(latent_dim=2, alpha_min=0.0)
