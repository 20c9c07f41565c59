"""The compiled bootstrap sweeps agree with the numpy reference path."""
import copy
import math

import numpy as np
import pytest

from pmcmc import rng_stream, run_csmc, run_smc, sample_ancestral, sample_backward
from pmcmc.models import (BinregConfig, DiscreteHMMModel, SplineConfig, SVConfig, build_binreg, build_spline, build_sv,
                          simulate_binreg, simulate_spline, simulate_sv)


class Replay:
    """Stands in for a generator, returning pre-drawn values."""

    def __init__(self, normal=None, uniform=None):
        self._normal, self._uniform = normal, uniform

    def standard_normal(self, shape=None):
        return np.asarray(self._normal).reshape(shape)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return loc + scale * self.standard_normal(size)

    def random(self, shape=None):
        return np.asarray(self._uniform).reshape(shape)


def sv_model(T=40):
    cfg = SVConfig(T=T, m=3)
    data, _, theta = simulate_sv(cfg, rng_stream(21, 0))
    return build_sv(cfg, data), theta


def binreg_model(scenario, T=40):
    cfg = BinregConfig(T=T, m=2, scenario=scenario)
    data, _, theta = simulate_binreg(cfg, rng_stream(22, 0))
    return build_binreg(cfg, data), theta


def spline_model(x1_mode, T=40):
    cfg = SplineConfig(T=T, m=2, x1_mode=x1_mode)
    data, _, theta = simulate_spline(cfg, rng_stream(23, 0))
    return build_spline(cfg, data), cfg.true_theta()


def hmm_model(T=40):
    rng = rng_stream(24, 0)
    A = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.25, 0.25, 0.5]])
    E = np.array([[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]])
    return DiscreteHMMModel(rng.integers(0, 2, T), [0.2, 0.5, 0.3], A, E), {}


def draw_states(model, rng, N):
    if model.name == "hmm":
        return rng.integers(0, 3, (N, 1)).astype(float)
    return rng.normal(size=(N, model.state_dim))


MODELS = {"sv": sv_model, "hmm": hmm_model, "spline": lambda: spline_model("parameter"),
          "spline_diffuse": lambda: spline_model("diffuse"), "binreg_a": lambda: binreg_model("a"), "binreg_b": lambda: binreg_model("b")}


def numpy_twin(model):
    slow = copy.copy(model)
    slow.kernel = None
    return slow


@pytest.mark.parametrize("name", sorted(MODELS))
def test_kernels_match_model_methods(name, rng):
    model, theta = MODELS[name]()
    k = model.kernel
    par, data = model.kernel_args(theta)
    N = 16
    d = model.state_dim
    e = rng.standard_normal((N, k.n_normal))
    v = rng.random((N, k.n_uniform))
    xp = draw_states(model, rng, N)
    out = np.empty(d)
    fake = Replay(normal=e, uniform=v)
    ref = model.transition_sample(theta, xp, 5, fake)
    for i in range(N):
        k.prop(par, data, xp[i], 5, e[i], v[i], out)
        np.testing.assert_allclose(out, ref[i], rtol=1e-12, atol=1e-12)
    for t in (0, 7, model.T - 1):
        ref = model.observation_logpdf(theta, xp, t)
        got = [k.logg(par, data, xp[i], t) for i in range(N)]
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)
    if k.logf is not None:
        x = draw_states(model, rng, N)
        ref = model.transition_logpdf(theta, xp, x, 3)
        got = [k.logf(par, data, xp[i], x[i], 3) for i in range(N)]
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)
    x0 = model.initial_sample(theta, N, Replay(normal=e, uniform=v[:, 0] if v.shape[1] else None))
    for i in range(N):
        k.init(par, data, e[i], v[i], out)
        np.testing.assert_allclose(out, x0[i], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_likelihood_estimates_agree_in_distribution(name):
    model, theta = MODELS[name]()
    slow = numpy_twin(model)
    rng = rng_stream(5, 7)
    a = np.array([run_smc(model, theta, 30, rng).log_likelihood() for _ in range(400)])
    b = np.array([run_smc(slow, theta, 30, rng).log_likelihood() for _ in range(400)])
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 4 * se
    iqr = lambda x: np.subtract(*np.percentile(x, [75, 25]))
    assert 0.7 < iqr(a) / iqr(b) < 1.4


@pytest.mark.parametrize("name", ["sv", "hmm", "binreg_b", "spline", "spline_diffuse"])
def test_backward_slots_identical_given_same_uniforms(name):
    model, theta = MODELS[name]()
    slow = numpy_twin(model)
    ps = run_smc(model, theta, 25, rng_stream(1, 1))
    for s in range(20):
        fast = sample_backward(ps, model, theta, rng_stream(s, 2))
        ref = sample_backward(ps, slow, theta, rng_stream(s, 2))
        assert np.array_equal(fast.slots, ref.slots)


@pytest.mark.parametrize("name", sorted(MODELS))
@pytest.mark.parametrize("fast", [True, False])
def test_csmc_retention_both_paths(name, fast, rng):
    model, theta = MODELS[name]()
    m = model if fast else numpy_twin(model)
    traj = sample_ancestral(run_smc(m, theta, 9, rng), rng)
    for _ in range(5):
        ps = run_csmc(m, theta, 9, traj, rng)
        assert np.array_equal(ps.particles[np.arange(m.T), traj.slots], traj.states)
        assert np.array_equal(ps.ancestors[np.arange(m.T - 1), traj.slots[1:]], traj.slots[:-1])
        traj = sample_ancestral(ps, rng)


def test_falls_back_when_kernel_cannot_handle_theta(rng):
    model, theta = MODELS["sv"]()
    bad = dict(theta, phi=np.array([1.0]))
    assert model.kernel_args(bad) is None
    with pytest.raises(ValueError, match="stationary"):
        run_smc(model, bad, 5, rng)


def test_fast_collapse_flagged(rng):
    model, theta = binreg_model("a", T=10)
    model.y[4] = np.nan
    ps = run_smc(model, theta, 10, rng)
    assert ps.collapsed and ps.collapse_step == 4
