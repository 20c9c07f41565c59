import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pmcmc.probability import (Bernoulli, Beta, Binomial, Flat, InverseGamma, Normal, ParticleCollapse,
                               Uniform, binomial_logpmf, log_sum_exp, normalize_weights, rng_stream)

finite = st.floats(-50, 50, allow_nan=False)


def test_normal_uses_variance(rng):
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(Normal(1.0, 4.0).logpdf(x), stats.norm(1.0, 2.0).logpdf(x), atol=1e-12)


def test_inverse_gamma_shape_scale():
    x = np.array([0.01, 0.5, 2.0, 9.0])
    np.testing.assert_allclose(InverseGamma(2.5, 0.05).logpdf(x), stats.invgamma(2.5, scale=0.05).logpdf(x),
                               atol=1e-10)
    assert np.all(InverseGamma(1, 1).logpdf(np.array([-1.0, 0.0])) == -np.inf)


def test_beta_uniform_binomial_against_scipy():
    x = np.array([0.1, 0.5, 0.87])
    np.testing.assert_allclose(Beta(8, 2).logpdf(x), stats.beta(8, 2).logpdf(x), atol=1e-10)
    assert Uniform(-1, 1).logpdf(np.array([1.5]))[0] == -np.inf
    np.testing.assert_allclose(Uniform(-1, 1).logpdf(np.array([0.3])), [math.log(0.5)])
    k = np.arange(11)
    np.testing.assert_allclose(Binomial(10, 0.3).logpdf(k), stats.binom(10, 0.3).logpmf(k), atol=1e-10)
    np.testing.assert_allclose(binomial_logpmf(k, 10, 0.3), stats.binom(10, 0.3).logpmf(k), atol=1e-10)
    np.testing.assert_allclose(Bernoulli(0.2).logpdf(np.array([0, 1])), np.log([0.8, 0.2]))
    assert np.all(Flat().logpdf(np.array([3.0, -7.0])) == 0.0)


def test_samplers_match_moments(rng):
    x = InverseGamma(5.0, 2.0).sample(rng, 200_000)
    assert abs(x.mean() - 0.5) < 4 * x.std() / math.sqrt(x.size)
    b = Beta(8, 2).sample(rng, 200_000)
    assert abs(b.mean() - 0.8) < 4 * b.std() / math.sqrt(b.size)


def test_no_nan_outside_support():
    for d, x in [(InverseGamma(2, 5), -1.0), (Beta(8, 2), 1.5), (Uniform(0, 1), -0.1), (Normal(0, 1), np.inf)]:
        v = d.logpdf(np.array([x]))
        assert not np.isnan(v).any() and v[0] == -np.inf


@given(st.lists(finite, min_size=1, max_size=30), st.floats(-100, 100))
def test_log_sum_exp_shift_and_permutation(v, c):
    v = np.array(v)
    assert abs(log_sum_exp(v + c) - (log_sum_exp(v) + c)) < 1e-13 * max(1.0, abs(log_sum_exp(v) + c))
    assert abs(log_sum_exp(v[::-1]) - log_sum_exp(v)) < 1e-12


def test_log_sum_exp_edge_cases():
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        log_sum_exp([])


@given(st.lists(st.one_of(finite, st.just(-np.inf)), min_size=1, max_size=40).filter(lambda v: max(v) > -np.inf))
def test_normalize_weights_sums_to_one(v):
    p, inc = normalize_weights(np.array(v))
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p >= 0)
    assert inc == pytest.approx(log_sum_exp(v) - math.log(len(v)), abs=1e-12)


def test_normalize_collapse_raises():
    with pytest.raises(ParticleCollapse):
        normalize_weights(np.full(5, -np.inf))


@settings(max_examples=20)
@given(st.integers(0, 2**64 - 1), st.integers(0, 5000))
def test_rng_streams_reproducible(seed, stream):
    a = rng_stream(seed, stream).random(5)
    b = rng_stream(seed, stream).random(5)
    assert np.array_equal(a, b)


def test_rng_streams_distinct():
    assert not np.array_equal(rng_stream(1, 0).random(4), rng_stream(1, 1).random(4))
    with pytest.raises(ValueError):
        rng_stream(-1)
