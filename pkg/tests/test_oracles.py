import math

import numpy as np
import pytest
from scipy import stats

from pmcmc.oracles import (DiscreteHMMSpec, LinearGaussianSpec, ffbs_sample, hmm_enumerate_posterior,
                           hmm_ffbs_sample, hmm_forward_loglik, hmm_smoothing_marginals, kalman_loglik,
                           kalman_smoother)


def naive_loglik(spec, y):
    """Joint Gaussian of y built from the state recursion (independent oracle)."""
    T, k = len(y), spec.k
    # x = A w stacked, w = (x1 - m0, eta_2..eta_T)
    mean = np.empty((T, k))
    mean[0] = spec.m0
    for t in range(1, T):
        mean[t] = spec.F[t - 1] @ mean[t - 1]
    blocks = [[np.zeros((k, k)) for _ in range(T)] for _ in range(T)]
    for s in range(T):
        blocks[s][s] = np.eye(k)
        for t in range(s + 1, T):
            blocks[t][s] = spec.F[t - 1] @ blocks[t - 1][s]
    A = np.block(blocks)
    Wcov = np.zeros((T * k, T * k))
    Wcov[:k, :k] = spec.P0
    for t in range(1, T):
        Wcov[t * k:(t + 1) * k, t * k:(t + 1) * k] = spec.Q[t - 1]
    Sx = A @ Wcov @ A.T
    H = np.kron(np.eye(T), spec.H.reshape(1, k))
    Sy = H @ Sx @ H.T + spec.R * np.eye(T)
    off = np.zeros(T) if spec.offset is None else spec.offset
    return stats.multivariate_normal(H @ mean.ravel() + off, Sy).logpdf(y)


def random_spec(rng, T, k=2):
    F = rng.normal(size=(T - 1, k, k)) * 0.5 + np.eye(k)
    G = rng.normal(size=(T - 1, k, k))
    Q = G @ np.swapaxes(G, 1, 2) * 0.3
    P = rng.normal(size=(k, k))
    return LinearGaussianSpec(F=F, Q=Q, H=rng.normal(size=k), R=0.4, m0=rng.normal(size=k), P0=P @ P.T + np.eye(k),
                              offset=rng.normal(size=T))


def test_kalman_trivial_case():
    spec = LinearGaussianSpec(F=np.zeros((0, 1, 1)), Q=np.zeros((0, 1, 1)), H=[1.0], R=1.0, m0=[0.0], P0=[[0.0]])
    assert kalman_loglik(spec, [0.7]) == pytest.approx(stats.norm.logpdf(0.7), abs=1e-14)


def test_kalman_random_walk_bivariate():
    spec = LinearGaussianSpec(F=[[[1.0]]], Q=[[[0.5]]], H=[1.0], R=0.2, m0=[0.1], P0=[[1.0]])
    y = np.array([0.3, -0.4])
    cov = np.array([[1.0 + 0.2, 1.0], [1.0, 1.5 + 0.2]])
    assert abs(kalman_loglik(spec, y) - stats.multivariate_normal([0.1, 0.1], cov).logpdf(y)) < 1e-10


@pytest.mark.parametrize("T", [1, 2, 3, 5])
def test_kalman_matches_naive_joint(T, rng):
    spec = random_spec(rng, T)
    y = rng.normal(size=T)
    assert abs(kalman_loglik(spec, y) - naive_loglik(spec, y)) < 1e-9


def test_ffbs_zero_noise_is_deterministic(rng):
    T = 4
    spec = LinearGaussianSpec(F=np.tile(np.eye(1), (T - 1, 1, 1)) * 0.9, Q=np.zeros((T - 1, 1, 1)), H=[1.0], R=1.0,
                              m0=[0.5], P0=[[0.0]])
    y = rng.normal(size=T)
    x = ffbs_sample(spec, y, rng)
    sm, _ = kalman_smoother(spec, y)
    np.testing.assert_allclose(x, sm, atol=1e-12)


def test_ffbs_moments_match_smoother(rng):
    spec = random_spec(rng, 6)
    y = rng.normal(size=6)
    sm, sP = kalman_smoother(spec, y)
    draws = np.array([ffbs_sample(spec, y, rng) for _ in range(20000)])
    se = np.sqrt(np.einsum("tii->ti", sP) / draws.shape[0])
    assert np.all(np.abs(draws.mean(0) - sm) < 4 * se)
    var = draws.var(0)
    np.testing.assert_allclose(var, np.einsum("tii->ti", sP), rtol=0.06)


def test_ffbs_uninformative_data_gives_prior(rng):
    T = 3
    spec = LinearGaussianSpec(F=np.full((T - 1, 1, 1), 1.0), Q=np.full((T - 1, 1, 1), 1.0), H=[1.0], R=1e8,
                              m0=[2.0], P0=[[1.0]])
    y = np.zeros(T)
    draws = np.array([ffbs_sample(spec, y, rng)[:, 0] for _ in range(20000)])
    var_prior = np.array([1.0, 2.0, 3.0])
    assert np.all(np.abs(draws.mean(0) - 2.0) < 4 * np.sqrt(var_prior / draws.shape[0]))
    np.testing.assert_allclose(draws.var(0), var_prior, rtol=0.05)


def test_hmm_single_state():
    spec = DiscreteHMMSpec([1.0], [[1.0]], [[0.3, 0.7]], [1, 0, 1])
    assert hmm_forward_loglik(spec) == pytest.approx(2 * math.log(0.7) + math.log(0.3), abs=1e-14)
    paths, p = hmm_enumerate_posterior(spec)
    assert p.tolist() == [1.0]


def test_hmm_forward_equals_enumeration():
    spec = DiscreteHMMSpec([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], [[0.9, 0.1], [0.25, 0.75]], [0, 1, 1])
    lp_total = 0.0
    paths, _ = hmm_enumerate_posterior(spec)
    joint = []
    for s in paths:
        p = spec.initial[s[0]] * spec.emission[s[0], 0]
        for t in (1, 2):
            p *= spec.transition[s[t - 1], s[t]] * spec.emission[s[t], spec.obs[t]]
        joint.append(p)
    lp_total = math.log(sum(joint))
    assert abs(hmm_forward_loglik(spec) - lp_total) < 1e-12
    marg = hmm_smoothing_marginals(spec)
    post = np.array(joint) / sum(joint)
    for t in range(3):
        assert marg[t, 1] == pytest.approx(post[paths[:, t] == 1].sum(), abs=1e-12)


def test_hmm_uniform_posterior():
    spec = DiscreteHMMSpec([0.5, 0.5], np.full((2, 2), 0.5), np.full((2, 2), 0.5), [0, 1, 0, 0])
    _, p = hmm_enumerate_posterior(spec)
    np.testing.assert_allclose(p, 1 / 16, atol=1e-15)


def test_hmm_enumeration_limit():
    spec = DiscreteHMMSpec([0.5, 0.5], np.full((2, 2), 0.5), np.full((2, 2), 0.5), [0] * 21)
    with pytest.raises(ValueError):
        hmm_enumerate_posterior(spec)


def test_hmm_ffbs_matches_enumeration(rng):
    spec = DiscreteHMMSpec([0.6, 0.4], [[0.7, 0.3], [0.2, 0.8]], [[0.9, 0.1], [0.25, 0.75]], [0, 1, 1])
    paths, p = hmm_enumerate_posterior(spec)
    codes = np.array([hmm_ffbs_sample(spec, rng) @ [4, 2, 1] for _ in range(40000)])
    freq = np.bincount(codes, minlength=8) / codes.size
    assert 0.5 * np.abs(freq - p).sum() < 0.01
