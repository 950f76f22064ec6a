from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from latticewalk.noise import (
    NoiseSpec,
    SyntheticNoiseModel,
    draw_minibatch,
    minibatch_from_keys,
    minibatch_keys,
    sample_alpha_stable,
    sample_gaussian_vector,
    sample_noise,
    sample_synthetic_noise,
)

N_DRAWS = 1_000_000


def test_gaussian_vector_moments(rng):
    x = sample_gaussian_vector(rng, 3, N_DRAWS)
    assert x.shape == (N_DRAWS, 3)
    assert np.all(np.abs(x.mean(0)) < 4 / np.sqrt(N_DRAWS))
    np.testing.assert_allclose(x.var(0), 1.0, atol=0.01)
    cov = np.cov(x, rowvar=False)
    assert np.abs(cov[np.triu_indices(3, 1)]).max() < 0.01


def test_gaussian_vector_rejects_bad_dim(rng):
    with pytest.raises(ValueError):
        sample_gaussian_vector(rng, 0)


def test_stable_alpha_two_is_gaussian_with_double_variance(rng):
    x = sample_alpha_stable(rng, NoiseSpec("alpha_stable", 2.0, 1.0), 1, N_DRAWS)[:, 0]
    assert x.var() == pytest.approx(2.0, abs=0.02)
    # third and fourth moments of N(0, 2): 0 and 3 * 2**2
    se3 = np.sqrt(15 * 8 / N_DRAWS)
    assert abs((x**3).mean()) < 4 * se3
    assert (x**4).mean() == pytest.approx(12.0, rel=0.02)


def test_stable_alpha_one_has_cauchy_quartiles(rng):
    x = sample_alpha_stable(rng, NoiseSpec("alpha_stable", 1.0, 1.0), 1, N_DRAWS)[:, 0]
    q1, q3 = np.quantile(x, [0.25, 0.75])
    assert q1 == pytest.approx(-1.0, abs=0.02)
    assert q3 == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 1.9])
def test_stable_median_is_zero(rng, alpha):
    x = sample_alpha_stable(rng, NoiseSpec("alpha_stable", alpha, 2.0), 1, 200_000)[:, 0]
    # binomial SE of the empirical CDF at 0
    assert abs((x < 0).mean() - 0.5) < 4 * 0.5 / np.sqrt(x.size)


def test_stable_matches_scipy_levy_stable(rng):
    spec = NoiseSpec("alpha_stable", 1.5, 1.0)
    x = sample_alpha_stable(rng, spec, 1, 200_000)[:, 0]
    qs = [0.1, 0.25, 0.75, 0.9]
    expected = stats.levy_stable.ppf(qs, 1.5, 0.0)
    np.testing.assert_allclose(np.quantile(x, qs), expected, atol=0.03)


def test_stable_scale_is_linear(rng):
    a = sample_alpha_stable(np.random.default_rng(1), NoiseSpec("alpha_stable", 1.3, 1.0), 2, 10)
    b = sample_alpha_stable(np.random.default_rng(1), NoiseSpec("alpha_stable", 1.3, 5.0), 2, 10)
    np.testing.assert_allclose(b, 5 * a)


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=2.5), dict(scale=0.0), dict(family="laplace")])
def test_noise_spec_validation(kwargs):
    with pytest.raises(ValueError):
        NoiseSpec(**{"family": "alpha_stable", **kwargs})


def test_stable_sampler_requires_stable_family(rng):
    with pytest.raises(ValueError):
        sample_alpha_stable(rng, NoiseSpec("gaussian"), 1)


def test_gaussian_noise_family_uses_scale(rng):
    x = sample_noise(rng, NoiseSpec("gaussian", scale=3.0), 1, 200_000)
    assert x.std() == pytest.approx(3.0, rel=0.01)


def test_full_batch_is_full_index_set(rng):
    state = rng.bit_generator.state
    np.testing.assert_array_equal(np.sort(draw_minibatch(rng, 7, 7)), np.arange(7))
    assert rng.bit_generator.state == state


@given(st.integers(1, 60), st.data())
def test_minibatch_indices_distinct_and_in_range(n, data):
    b = data.draw(st.integers(1, n))
    seed = data.draw(st.integers(0, 2**32 - 1))
    idx = draw_minibatch(np.random.default_rng(seed), n, b, size=5)
    assert idx.shape == (5, b)
    for row in idx:
        assert len(set(row.tolist())) == b
        assert row.min() >= 0 and row.max() < n


def test_minibatch_subsets_uniform(rng):
    draws = 600_000
    idx = np.sort(draw_minibatch(rng, 4, 2, size=draws), axis=1)
    for pair in combinations(range(4), 2):
        freq = np.all(idx == pair, axis=1).mean()
        assert freq == pytest.approx(1 / 6, abs=0.005)


@pytest.mark.parametrize("n,b", [(6, 4), (9, 5), (10, 3)])
def test_minibatch_uniform_on_both_key_paths(rng, n, b):
    draws = 200_000
    idx = draw_minibatch(rng, n, b, size=draws)
    counts = np.bincount(idx.ravel(), minlength=n) / draws
    # every index is included with probability B / N
    np.testing.assert_allclose(counts, b / n, atol=4 * np.sqrt(b / n * (1 - b / n) / draws))


def test_minibatch_rejects_oversized_batch(rng):
    with pytest.raises(ValueError):
        draw_minibatch(rng, 3, 4)


def test_keys_split_into_rows_independently(rng):
    keys = minibatch_keys(rng, 50, 8, size=(3, 4))
    together = minibatch_from_keys(keys, 50, 8)
    for i in range(3):
        for j in range(4):
            np.testing.assert_array_equal(together[i, j], minibatch_from_keys(keys[i, j], 50, 8))


def test_zero_noise_factor_gives_zero(rng):
    model = SyntheticNoiseModel(np.zeros((3, 3)))
    assert not sample_synthetic_noise(rng, model, 100).any()


def test_synthetic_noise_covariance(rng):
    factor = np.array([[1.0, 0.0], [0.5, 0.8]])
    model = SyntheticNoiseModel(factor)
    z = sample_synthetic_noise(rng, model, N_DRAWS)
    np.testing.assert_allclose(np.cov(z, rowvar=False), model.covariance, atol=0.01)
    sd = np.sqrt(np.diag(model.covariance))
    assert np.all(np.abs(z.mean(0)) < 4 * sd / np.sqrt(N_DRAWS))


def test_identity_factor_gives_identity_covariance(rng):
    z = sample_synthetic_noise(rng, SyntheticNoiseModel(np.eye(3)), N_DRAWS)
    np.testing.assert_allclose(np.cov(z, rowvar=False), np.eye(3), atol=0.01)


def test_stable_noise_model_has_no_covariance():
    with pytest.raises(ValueError):
        SyntheticNoiseModel(np.eye(2), NoiseSpec("alpha_stable", 1.5)).covariance
