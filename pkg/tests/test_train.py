import numpy as np
import pytest

from octaudio.datasets import synthetic_tone_dataset
from octaudio.errors import ConfigError, DivergenceError, ShapeError
from octaudio.mdct import MdctTensor
from octaudio.nn import autodiff as ad
from octaudio.nn.model import (
    ModelConfig,
    discriminator,
    discriminator_param_shapes,
    init_params,
)
from octaudio.nn.train import (
    Adam,
    TrainConfig,
    quantization_noise_sigma,
    train,
    wgan_gp_losses,
)


def sum_critic(x):
    return ad.sum_along(x, axis=(1, 2, 3))


def test_linear_critic_penalty_closed_form():
    # for D(x) = sum(x), grad norm is sqrt(#elements) exactly
    rng = np.random.default_rng(0)
    real = rng.standard_normal((3, 4, 4, 2))
    fake = rng.standard_normal((3, 4, 4, 2))
    loss_d, loss_g, stats = wgan_gp_losses(
        real, ad.constant(fake), sum_critic, gp_lambda=10.0,
        drift_epsilon=0.0, rng=np.random.default_rng(1),
    )
    n_elements = 4 * 4 * 2
    expected_penalty = (np.sqrt(n_elements) - 1.0) ** 2
    assert stats["penalty"] == pytest.approx(expected_penalty, rel=1e-12)
    expected_d = fake.sum(axis=(1, 2, 3)).mean() - real.sum(axis=(1, 2, 3)).mean()
    assert float(loss_d.data) == pytest.approx(
        expected_d + 10.0 * expected_penalty, rel=1e-12
    )
    assert float(loss_g.data) == pytest.approx(
        -fake.sum(axis=(1, 2, 3)).mean(), rel=1e-12
    )


def test_drift_term_zero_for_zero_critic():
    def zero_critic(x):
        return ad.scale(ad.sum_along(x, axis=(1, 2, 3)), 0.0)

    rng = np.random.default_rng(2)
    real = rng.standard_normal((2, 2, 4, 1))
    loss_d, _, stats = wgan_gp_losses(
        real, ad.constant(real.copy()), zero_critic, gp_lambda=0.0,
        drift_epsilon=5.0, rng=np.random.default_rng(3),
    )
    # D == 0 everywhere: only the (0-1)^2 gradient penalty term could remain,
    # and it is disabled; drift over D(real)^2 is exactly zero
    assert float(loss_d.data) == pytest.approx(0.0, abs=1e-15)


def test_wgan_shapes_must_match():
    with pytest.raises(ShapeError):
        wgan_gp_losses(
            np.zeros((2, 4, 4, 1)), ad.constant(np.zeros((2, 4, 2, 1))),
            sum_critic, 10.0, 0.0, np.random.default_rng(0),
        )


def test_gradient_penalty_parameter_gradient_matches_fd():
    # second-order path: d loss_D / d theta where loss_D includes the
    # gradient penalty of a small nonlinear critic
    cfg = ModelConfig(latent_dim=4, num_blocks=1, seed_blocks=2, seed_bands=2,
                      channels=(3, 2), output_channels=1)
    rng = np.random.default_rng(5)
    d_params = init_params(discriminator_param_shapes(cfg), rng)
    real = rng.standard_normal((2, 8, 4, 1))
    fake = rng.standard_normal((2, 8, 4, 1))

    def critic(x):
        return discriminator(x, d_params, cfg)

    def loss():
        return wgan_gp_losses(
            real, ad.constant(fake), critic, gp_lambda=10.0,
            drift_epsilon=0.001, rng=np.random.default_rng(7),
        )[0]

    names = sorted(d_params)
    leaves = [d_params[k] for k in names]
    analytic = ad.grad(loss(), leaves)
    h = 1e-6
    for leaf, got in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        gflat = got.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss().data)
            flat[i] = orig - h
            down = float(loss().data)
            flat[i] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(gflat[i]), 1e-3)
            assert abs(fd - gflat[i]) / denom <= 1e-3


def test_adam_moves_toward_minimum():
    params = {"w": ad.parameter(np.array([4.0]))}
    opt = Adam(params, lr=0.1, beta1=0.5, beta2=0.9)
    for _ in range(200):
        grads = {"w": 2.0 * params["w"].data}
        opt.step(params, grads)
    assert abs(params["w"].data[0]) < 0.05


def test_noise_sigma_shape_and_scale():
    rng = np.random.default_rng(8)
    from octaudio.psycho import bark_partition

    batch = rng.standard_normal((3, 4, 16, 1)) * 0.2
    partition = bark_partition(2048, 16)
    sigma = quantization_noise_sigma(batch, 2048, partition, 0.3, 96.0)
    assert sigma.shape == batch.shape
    assert np.all(sigma > 0)
    doubled = quantization_noise_sigma(2 * batch, 2048, partition, 0.3, 96.0)
    np.testing.assert_allclose(doubled, 2 * sigma, rtol=1e-9)


def toy_setup(iterations=2, noise=0.0, seed=1):
    cfg = ModelConfig(latent_dim=6, num_blocks=1, seed_blocks=2, seed_bands=4,
                      channels=(4, 3), output_channels=1)
    rng = np.random.default_rng(0)
    data = synthetic_tone_dataset(rng, 4, 2048, 8, 8)
    tcfg = TrainConfig(batch_size=2, iterations=iterations, rng_seed=seed,
                       n_critic=2, noise_scale=noise)
    return data, cfg, tcfg


def test_train_smoke_changes_parameters(tmp_path):
    data, cfg, tcfg = toy_setup(iterations=2, noise=1.0)
    result = train(data, cfg, tcfg, tmp_path / "run")
    assert (tmp_path / "run" / "losses.csv").exists()
    assert (tmp_path / "run" / "checkpoint.bin").exists()
    from octaudio.nn.model import load_checkpoint

    params, cfg2, iteration, extra = load_checkpoint(result.checkpoint_path)
    assert iteration == 2
    assert extra["sample_rate_hz"] == 2048
    fresh = init_params(discriminator_param_shapes(cfg), np.random.default_rng(0))
    # at least the critic weights moved away from any fresh init scale
    moved = any(
        not np.allclose(params[k].data, 0.0) and k.endswith(".b")
        for k in params if k.startswith("d.")
    )
    assert moved


def test_train_deterministic_outputs(tmp_path):
    data, cfg, tcfg = toy_setup(iterations=3, noise=1.0, seed=9)
    a = train(data, cfg, tcfg, tmp_path / "a")
    data2, cfg2, tcfg2 = toy_setup(iterations=3, noise=1.0, seed=9)
    b = train(data2, cfg2, tcfg2, tmp_path / "b")
    assert (tmp_path / "a" / "losses.csv").read_bytes() == \
           (tmp_path / "b" / "losses.csv").read_bytes()
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == \
           (tmp_path / "b" / "checkpoint.bin").read_bytes()


def test_train_rejects_empty_and_mismatched_dataset(tmp_path):
    data, cfg, tcfg = toy_setup()
    with pytest.raises(ConfigError):
        train([], cfg, tcfg, tmp_path / "x")
    bad = [MdctTensor(np.zeros((4, 8, 1)), 2048)]
    with pytest.raises(ShapeError):
        train(bad, cfg, tcfg, tmp_path / "y")


def test_freeze_blocks_keeps_block_parameters_fixed(tmp_path):
    data, cfg, _ = toy_setup()
    tcfg = TrainConfig(batch_size=2, iterations=2, rng_seed=3, n_critic=1,
                       noise_scale=0.0, freeze_blocks=(1,))
    result = train(data, cfg, tcfg, tmp_path / "frozen")
    from octaudio.nn.model import load_checkpoint

    params, _, _, _ = load_checkpoint(result.checkpoint_path)
    rng = np.random.default_rng(3)
    from octaudio.nn.model import generator_param_shapes

    fresh_g = init_params(generator_param_shapes(cfg), rng)
    fresh_d = init_params(discriminator_param_shapes(cfg), rng)
    fresh = {**fresh_g, **fresh_d}
    for name in params:
        if "block1." in name:
            np.testing.assert_array_equal(params[name].data, fresh[name].data)
    assert any(
        not np.array_equal(params[k].data, fresh[k].data)
        for k in params if "block1." not in k
    )


def test_noise_applied_to_both_real_and_fake():
    rng = np.random.default_rng(4)
    real = rng.standard_normal((2, 4, 4, 1))
    fake = rng.standard_normal((2, 4, 4, 1))
    seen = []

    def noise_fn(batch, noise_rng):
        seen.append(batch.copy())
        return np.full_like(batch, 0.5)

    loss_d, _, stats = wgan_gp_losses(
        real, ad.constant(fake), sum_critic, gp_lambda=0.0,
        drift_epsilon=0.0, rng=np.random.default_rng(5), noise_fn=noise_fn,
    )
    assert len(seen) == 2
    np.testing.assert_array_equal(seen[0], real)
    np.testing.assert_array_equal(seen[1], fake)
    # a constant offset on both sides cancels in the linear difference
    expected = fake.sum(axis=(1, 2, 3)).mean() - real.sum(axis=(1, 2, 3)).mean()
    assert float(loss_d.data) == pytest.approx(expected, rel=1e-12)


def test_divergence_error_carries_iteration(tmp_path):
    data, cfg, tcfg = toy_setup(iterations=1)
    data = [MdctTensor(t.amplitudes * np.nan, 2048) for t in data]
    with pytest.raises(DivergenceError) as exc:
        train(data, cfg, tcfg, tmp_path / "d")
    assert exc.value.iteration == 1
