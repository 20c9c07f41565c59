import math

import numpy as np
import pytest

from pmcmc import ParticleSystem, log_likelihood, rng_stream, run_csmc, run_smc
from pmcmc.models import (BinregConfig, SplineConfig, SVConfig, build_binreg, build_spline, build_sv,
                          simulate_binreg, simulate_spline, simulate_sv, two_state_hmm)
from pmcmc.smc import PathOutsideSupport, max_weight
from pmcmc.trajectory import Trajectory, sample_ancestral


@pytest.fixture(scope="module")
def sv():
    cfg = SVConfig(T=30, m=2)
    data, x, theta = simulate_sv(cfg, rng_stream(11, 0))
    return build_sv(cfg, data), theta


def test_system_shapes_and_invariants(sv, rng):
    model, theta = sv
    ps = run_smc(model, theta, 25, rng)
    assert ps.particles.shape == (30, 25, 1) and ps.ancestors.shape == (29, 25)
    np.testing.assert_allclose(ps.norm_weights.sum(1), 1.0, atol=1e-10)
    assert ps.ancestors.min() >= 0 and ps.ancestors.max() < 25
    assert ps.log_likelihood() == pytest.approx(ps.log_z_increments.sum())


def test_single_particle_likelihood_is_path_observation_density(sv, rng):
    model, theta = sv
    ps = run_smc(model, theta, 1, rng)
    x = ps.particles[:, 0, :]
    expected = sum(float(model.observation_logpdf(theta, x[t:t + 1], t)[0]) for t in range(model.T))
    assert ps.log_likelihood() == pytest.approx(expected, abs=1e-10)


def test_log_likelihood_trivial():
    def sys_with(inc):
        T = len(inc)
        return ParticleSystem(np.zeros((T, 1, 1)), np.zeros((T - 1, 1), int), np.zeros((T, 1)), np.ones((T, 1)),
                              np.asarray(inc, float))
    assert log_likelihood(sys_with([0.0, 0.0])) == 0.0
    assert log_likelihood(sys_with([math.log(2), math.log(3)])) == pytest.approx(math.log(6), abs=1e-14)


def test_likelihood_recomputed_from_raw_weights(sv, rng):
    model, theta = sv
    ps = run_smc(model, theta, 40, rng)
    lw = ps.log_weights
    m = lw.max(1, keepdims=True)
    recomputed = float(np.sum(m[:, 0] + np.log(np.exp(lw - m).mean(1))))
    assert abs(ps.log_likelihood() - recomputed) < 1e-10
    # and the raw weights are the observation densities of the stored particles
    for t in (0, 7, 29):
        np.testing.assert_array_equal(lw[t], model.observation_logpdf(theta, ps.particles[t], t))


def unbiasedness_z(model, theta, exact, N, reps, rng):
    r = np.exp(np.array([run_smc(model, theta, N, rng).log_likelihood() for _ in range(reps)]) - exact)
    return (r.mean() - 1.0) / (r.std(ddof=1) / math.sqrt(reps))


def test_unbiased_spline(rng):
    cfg = SplineConfig(T=20, m=2, true_sigma2=1.0, true_tau2=1.0, true_x1=(0.0, 0.0))
    data, _, theta = simulate_spline(cfg, rng_stream(5, 0))
    model = build_spline(cfg, data)
    assert abs(unbiasedness_z(model, theta, model.exact_loglik(theta), 100, 500, rng)) < 3


def test_unbiased_hmm_n50(rng):
    model = two_state_hmm([0, 1, 1, 0, 1], switch=0.2, flip=0.25)
    assert abs(unbiasedness_z(model, {}, model.exact_loglik({}), 50, 500, rng)) < 3


def test_sd_of_log_z_decreases_with_n(sv):
    model, theta = sv
    rng = rng_stream(3, 3)
    sds = [np.std([run_smc(model, theta, N, rng).log_likelihood() for _ in range(100)]) for N in (10, 50, 250)]
    assert sds[0] > sds[1] > sds[2]


def test_stratified_option(sv, rng):
    model, theta = sv
    ps = run_smc(model, theta, 30, rng, resampler="stratified")
    assert np.isfinite(ps.log_likelihood())


def test_collapse_is_flagged_not_raised(rng):
    cfg = BinregConfig(T=5)
    data, _, theta = simulate_binreg(cfg, rng_stream(2))
    data.y[3] = data.n[3] + 2
    model = build_binreg(cfg, data)
    ps = run_smc(model, theta, 20, rng)
    assert ps.collapsed and ps.collapse_step == 3 and ps.log_likelihood() == -math.inf


def test_bounded_weight_premise(rng):
    cfg = BinregConfig(T=60)
    data, _, theta = simulate_binreg(cfg, rng_stream(4))
    model = build_binreg(cfg, data)
    for _ in range(20):
        assert max_weight(run_smc(model, theta, 50, rng)) <= 1.0


def test_bounded_weight_report_sv(sv, rng):
    model, theta = sv
    w = max_weight(run_smc(model, theta, 50, rng))
    assert np.isfinite(w) and w > 0


# -- conditional SMC -----------------------------------------------------------------------


def frozen_from(model, theta, N, rng):
    return sample_ancestral(run_smc(model, theta, N, rng), rng)


@pytest.mark.parametrize("N", [1, 2, 8, 33])
def test_csmc_retains_frozen_path_bit_exact(sv, rng, N):
    model, theta = sv
    for _ in range(5):
        traj = frozen_from(model, theta, N, rng)
        ps = run_csmc(model, theta, N, traj, rng)
        b = traj.slots
        assert np.array_equal(ps.particles[np.arange(model.T), b], traj.states)
        assert np.array_equal(ps.ancestors[np.arange(model.T - 1), b[1:]], b[:-1])


def test_csmc_single_particle_reproduces_path(sv, rng):
    model, theta = sv
    traj = frozen_from(model, theta, 1, rng)
    ps = run_csmc(model, theta, 1, traj, rng)
    assert np.array_equal(ps.particles[:, 0], traj.states)
    np.testing.assert_array_equal(ps.log_weights[:, 0],
                                  [model.observation_logpdf(theta, traj.states[t:t + 1], t)[0] for t in range(model.T)])


def test_csmc_rejects_path_outside_support(sv, rng):
    model, theta = sv
    traj = frozen_from(model, theta, 4, rng)
    bad = dict(theta, phi=np.array([1.2]))
    with pytest.raises(PathOutsideSupport, match="conditioned path outside support"):
        run_csmc(model, bad, 4, traj, rng)


def test_csmc_slot_range_checked(sv, rng):
    model, theta = sv
    traj = Trajectory(np.zeros((model.T, 1)), np.full(model.T, 5), "ancestral")
    with pytest.raises(ValueError):
        run_csmc(model, theta, 3, traj, rng)


def test_csmc_never_collapses_on_binomial(rng):
    cfg = BinregConfig(T=40)
    data, _, theta = simulate_binreg(cfg, rng_stream(9))
    model = build_binreg(cfg, data)
    traj = frozen_from(model, theta, 30, rng)
    for _ in range(20):
        ps = run_csmc(model, theta, 30, traj, rng)
        assert not ps.collapsed and np.isfinite(ps.log_likelihood())
        traj = sample_ancestral(ps, rng)


def test_reproducible_sweeps(sv):
    model, theta = sv
    a = run_smc(model, theta, 20, rng_stream(8, 2))
    b = run_smc(model, theta, 20, rng_stream(8, 2))
    assert np.array_equal(a.particles, b.particles) and np.array_equal(a.ancestors, b.ancestors)


def test_dump_csv(sv, rng, tmp_path):
    model, theta = sv
    ps = run_smc(model, theta, 3, rng)
    ps.to_csv(tmp_path / "ps.csv")
    lines = (tmp_path / "ps.csv").read_text().splitlines()
    assert lines[0] == "t,i,a,logw,x0" and len(lines) == 1 + 30 * 3
