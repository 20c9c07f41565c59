import numpy as np
import pytest

from pmcmc import ParticleSystem, joint_logpdf, rng_stream, run_smc
from pmcmc.models import SVConfig, build_sv, simulate_sv, two_state_hmm
from pmcmc.oracles import hmm_smoothing_marginals
from pmcmc.probability import ParticleCollapse
from pmcmc.trajectory import BackwardCollapse, sample_ancestral, sample_backward, trace_lineage


def fixed_system(T=3, N=4, seed=0):
    r = np.random.default_rng(seed)
    w = r.dirichlet(np.ones(N), size=T)
    return ParticleSystem(r.normal(size=(T, N, 1)), r.integers(0, N, size=(T - 1, N)), np.log(w), w,
                          np.zeros(T))


class ConstantTransition:
    """Transition density constant in its arguments."""

    name = "const"
    transition_evaluable = True

    def transition_logpdf(self, theta, x_prev, x, t):
        return np.zeros(x_prev.shape[0])


class NoTransition:
    name = "opaque"
    transition_evaluable = False


def test_single_particle(rng):
    ps = fixed_system(N=1)
    for traj in (sample_ancestral(ps, rng), sample_backward(ps, ConstantTransition(), {}, rng)):
        assert traj.slots.tolist() == [0, 0, 0]
        assert np.array_equal(traj.states, ps.particles[:, 0])


def test_degenerate_final_weights(rng):
    ps = fixed_system(N=3)
    ps.norm_weights[-1] = [0.0, 0.0, 1.0]
    with np.errstate(divide="ignore"):
        ps.log_weights[-1] = np.log(ps.norm_weights[-1])
    for _ in range(50):
        assert sample_ancestral(ps, rng).slots[-1] == 2
        assert sample_backward(ps, ConstantTransition(), {}, rng).slots[-1] == 2


def test_final_index_frequencies(rng):
    ps = fixed_system(N=4, T=3, seed=1)
    n = 100_000
    J = np.array([sample_ancestral(ps, rng).slots[-1] for _ in range(n)])
    w = ps.norm_weights[-1]
    freq = np.bincount(J, minlength=4) / n
    assert np.all(np.abs(freq - w) < 3 * np.sqrt(w * (1 - w) / n) + 1e-3)


def test_lineage_consistency(rng):
    ps = fixed_system(T=6, N=5, seed=2)
    for _ in range(200):
        tr = sample_ancestral(ps, rng)
        for t in range(1, 6):
            assert tr.slots[t - 1] == ps.ancestors[t - 1, tr.slots[t]]
        assert np.array_equal(trace_lineage(ps, tr.slots[-1]), tr.slots)
        assert np.array_equal(tr.states, ps.particles[np.arange(6), tr.slots])


def test_backward_constant_f_reduces_to_independent_draws(rng):
    ps = fixed_system(T=3, N=4, seed=5)
    n = 100_000
    S = np.array([sample_backward(ps, ConstantTransition(), {}, rng).slots for _ in range(n)])
    for t in range(3):
        w = ps.norm_weights[t]
        freq = np.bincount(S[:, t], minlength=4) / n
        assert np.all(np.abs(freq - w) <= 3 * np.sqrt(w * (1 - w) / n) + 1e-3)


def test_backward_smoothing_marginals():
    model = two_state_hmm([0, 1, 1, 0], switch=0.2, flip=0.25, initial=(0.7, 0.3))
    rng = rng_stream(17, 4)
    n = 100_000
    hits = np.zeros(4)
    for _ in range(n):
        ps = run_smc(model, {}, 200, rng)
        hits += sample_backward(ps, model, {}, rng).states[:, 0]
    marg = hmm_smoothing_marginals(model.spec({}))
    assert np.all(np.abs(hits / n - marg[:, 1]) < 0.02)


def test_backward_first_step_matches_ancestral(rng):
    ps = fixed_system(T=4, N=3, seed=8)
    n = 40_000
    a = np.bincount([sample_ancestral(ps, rng).slots[-1] for _ in range(n)], minlength=3) / n
    b = np.bincount([sample_backward(ps, ConstantTransition(), {}, rng).slots[-1] for _ in range(n)], minlength=3) / n
    assert np.all(np.abs(a - b) < 0.015)


def test_paths_have_finite_joint_density(rng):
    cfg = SVConfig(T=25, m=1)
    data, _, theta = simulate_sv(cfg, rng_stream(3))
    model = build_sv(cfg, data)
    ps = run_smc(model, theta, 30, rng)
    for tr in (sample_ancestral(ps, rng), sample_backward(ps, model, theta, rng)):
        assert np.isfinite(joint_logpdf(model, theta, tr.states))


def test_errors(rng):
    ps = fixed_system()
    with pytest.raises(TypeError):
        sample_backward(ps, NoTransition(), {}, rng)

    class Impossible(ConstantTransition):
        def transition_logpdf(self, theta, x_prev, x, t):
            return np.full(x_prev.shape[0], -np.inf)

    with pytest.raises(BackwardCollapse, match="backward kernel collapse"):
        sample_backward(ps, Impossible(), {}, rng)
    ps.collapsed = True
    with pytest.raises(ParticleCollapse):
        sample_ancestral(ps, rng)
