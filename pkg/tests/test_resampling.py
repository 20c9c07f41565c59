import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmcmc.resampling import RESAMPLERS, inverse_cdf, resample_multinomial

WEIGHT_VECTORS = [
    np.full(5, 0.2),
    np.array([0.7, 0.1, 0.1, 0.05, 0.05]),
    np.array([0.0, 0.5, 0.0, 0.5]),
    np.array([0.999, 0.001]),
    np.random.default_rng(3).dirichlet(np.ones(20)),
]


def offspring_suite(resampler, weights, N, reps, rng, n_se=4.0):
    """True when every mean offspring count is within ``n_se`` SE of N w_k."""
    counts = np.empty((reps, weights.size))
    for r in range(reps):
        counts[r] = np.bincount(resampler(weights, N, rng), minlength=weights.size)
    mean = counts.mean(0)
    se = counts.std(0, ddof=1) / np.sqrt(reps)
    target = N * weights / weights.sum()
    zero_se = se == 0
    ok = np.where(zero_se, np.abs(mean - target) < 1e-12, np.abs(mean - target) <= n_se * np.where(zero_se, 1, se))
    return bool(ok.all())


@pytest.mark.parametrize("name", sorted(RESAMPLERS))
@pytest.mark.parametrize("k", range(len(WEIGHT_VECTORS)))
def test_offspring_unbiased(name, k, rng):
    w = WEIGHT_VECTORS[k]
    assert offspring_suite(RESAMPLERS[name], w, 10, 10_000, rng)


def test_zero_weights_never_selected(rng):
    w = np.array([0.0, 1.0, 0.0])
    for name, f in RESAMPLERS.items():
        assert np.all(f(w, 100, rng) == 1), name


def test_inverse_cdf_strict_inequality():
    w = np.array([0.25, 0.25, 0.5])
    assert inverse_cdf(w, np.array([0.0, 0.25, 0.4999, 0.5, 0.999999]).tolist()).tolist() == [0, 1, 1, 2, 2]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30).filter(lambda v: sum(v) > 0), st.integers(1, 50))
def test_indices_in_range(w, N):
    rng = np.random.default_rng(0)
    w = np.array(w)
    for f in RESAMPLERS.values():
        a = f(w, N, rng)
        assert a.shape == (N,) and a.min() >= 0 and a.max() < w.size
        assert np.all(w[a] > 0)


def test_multinomial_is_iid_per_index(rng):
    w = np.array([0.1, 0.6, 0.3])
    draws = np.array([resample_multinomial(w, 3, rng) for _ in range(20000)])
    for i in range(3):
        freq = np.bincount(draws[:, i], minlength=3) / draws.shape[0]
        assert np.all(np.abs(freq - w) < 4 * np.sqrt(w * (1 - w) / draws.shape[0]))
