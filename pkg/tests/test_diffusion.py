import numpy as np
import pytest

from peplatent.errors import SamplingDivergenceError, ShapeError
from peplatent.models.denoiser import NormStats, PocketMask
from peplatent.services.denoiser import init_model
from peplatent.services.diffusion import (
    forward_chain,
    generate,
    posterior_mean,
    q_sample,
    q_step,
    reverse_step,
)
from peplatent.services.schedule import build_schedule


@pytest.fixture(scope="module")
def sched():
    return build_schedule(1000, 0.008)


def test_q_sample_at_t_matches_formula(sched, rng):
    x0 = rng.standard_normal((4, 3))
    eps = rng.standard_normal((4, 3))
    ab = sched.alpha_bar_at(250)
    assert np.allclose(q_sample(x0, 250, eps, sched), np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps)


def test_q_sample_shape_mismatch(sched):
    with pytest.raises(ShapeError):
        q_sample(np.zeros((2, 3)), 5, np.zeros((3, 2)), sched)


@pytest.mark.parametrize("t", [1, 500, 1000])
def test_chain_matches_marginal(sched, t):
    """Stepping the chain t times has the same mean and variance as the closed-form marginal"""
    n = 10_000
    x0 = np.array([1.5, -0.7])
    rng = np.random.default_rng(t)
    xs = np.tile(x0, (n, 1))
    for step in range(1, t + 1):
        xs = q_step(xs, step, rng.standard_normal(xs.shape), sched)
    ab = sched.alpha_bar_at(t)
    mean, var = np.sqrt(ab) * x0, 1 - ab
    se = np.sqrt(var / n)
    assert np.all(np.abs(xs.mean(axis=0) - mean) < 3 * se)
    assert np.all(np.abs(xs.var(axis=0) / var - 1) < 0.05)


def test_forward_chain_single_sample_is_finite(sched, rng):
    x = forward_chain(np.ones((3, 2)), 40, sched, rng)
    assert x.shape == (3, 2)
    assert np.all(np.isfinite(x))


def test_oracle_denoiser_recovers_x0_at_t1(sched, rng):
    x0 = rng.standard_normal((5, 4))
    eps = rng.standard_normal((5, 4))
    x1 = q_sample(x0, 1, eps, sched)
    recovered = reverse_step(x1, eps, 1, sched, noise=rng.standard_normal(x0.shape))
    assert np.allclose(recovered, x0, atol=1e-5)


def test_posterior_mean_inverts_one_step(sched, rng):
    x_prev = rng.standard_normal((3, 3))
    eps = rng.standard_normal((3, 3))
    t = 17
    alpha = sched.alpha_at(t)
    x_t = np.sqrt(alpha) * x_prev + np.sqrt(1 - alpha) * eps
    # with the single-step noise scaled into the marginal convention the mean is x_prev
    eps_marginal = eps * np.sqrt(1 - alpha) * np.sqrt(1 - sched.alpha_bar_at(t)) / (1 - alpha)
    assert np.allclose(posterior_mean(x_t, eps_marginal, t, sched), x_prev)


def test_reverse_step_is_deterministic_at_t1(sched, rng):
    x = rng.standard_normal((2, 2))
    eps = rng.standard_normal((2, 2))
    a = reverse_step(x, eps, 1, sched, rng.standard_normal((2, 2)))
    b = reverse_step(x, eps, 1, sched, rng.standard_normal((2, 2)))
    assert np.array_equal(a, b)


def test_generate_is_seeded(tiny_config, rng):
    model = init_model(tiny_config)
    sched = build_schedule(tiny_config.T)
    z = rng.standard_normal((6, 8)).astype(np.float32)
    mask = PocketMask.from_indices([1, 2], 6)
    a = generate(model, z, mask, 5, sched, seed=3)
    b = generate(model, z, mask, 5, sched, seed=3)
    c = generate(model, z, mask, 5, sched, seed=4)
    assert a.shape == (5, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_generate_denormalizes(tiny_config, rng):
    model = init_model(tiny_config)
    sched = build_schedule(tiny_config.T)
    z = rng.standard_normal((6, 8)).astype(np.float32)
    base = generate(model, z, None, 4, sched, seed=1, predictor=lambda x, t: np.zeros_like(x))
    model.norm_stats = NormStats(mean=np.full(8, 10.0, dtype=np.float32), std=np.full(8, 2.0, dtype=np.float32))
    shifted = generate(model, z, None, 4, sched, seed=1, predictor=lambda x, t: np.zeros_like(x))
    assert np.allclose(shifted, base * 2.0 + 10.0, atol=1e-4)


def test_generate_raises_on_divergence(tiny_config, rng):
    model = init_model(tiny_config)
    sched = build_schedule(tiny_config.T)
    z = rng.standard_normal((6, 8)).astype(np.float32)
    with pytest.raises(SamplingDivergenceError):
        generate(model, z, None, 3, sched, seed=0, predictor=lambda x, t: np.full_like(x, np.nan))


def test_oracle_denoiser_recovers_x0_through_many_steps(tiny_config, rng):
    """A predictor returning the exact noise of x_t relative to a planted x0 walks the chain back to x0"""
    model = init_model(tiny_config)
    sched = build_schedule(50)
    x0 = rng.standard_normal((5, tiny_config.d_emb)).astype(np.float32)

    def oracle(x_t, t):
        a, b = np.sqrt(sched.alpha_bar_at(t)), np.sqrt(1.0 - sched.alpha_bar_at(t))
        return (x_t.astype(np.float64) - a * x0) / b

    z = rng.standard_normal((6, tiny_config.d_emb)).astype(np.float32)
    recovered = generate(model, z, None, 5, sched, seed=11, predictor=oracle)
    assert np.max(np.abs(recovered - x0)) < 1e-3


def test_forward_chain_uses_q_step(sched):
    """forward_chain draws its step noise in order from the generator it is given"""
    x0 = np.ones((2, 3))
    expected = x0
    noise_rng = np.random.default_rng(8)
    for step in range(1, 6):
        expected = q_step(expected, step, noise_rng.standard_normal(x0.shape), sched)
    assert np.allclose(forward_chain(x0, 5, sched, np.random.default_rng(8)), expected)
