"""Sequential Monte Carlo and conditional SMC with full particle history."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import fastpath
from .model import StateSpaceModel, joint_logpdf, log_weight
from .probability import ParticleCollapse
from .resampling import RESAMPLERS

__all__ = [
    "ParticleSystem",
    "PathOutsideSupport",
    "run_smc",
    "run_csmc",
    "log_likelihood",
    "max_weight",
]


class PathOutsideSupport(ValueError):
    """The conditioning path has zero density under the current parameters."""


@dataclass
class ParticleSystem:
    """All particles, ancestors and weights of one SMC sweep.

    ``ancestors[t - 1, i]`` is the index at step ``t - 1`` of the parent of
    particle ``i`` at step ``t``. ``log_z_increments[t]`` is
    ``log(N^-1 sum_i w_t^i)``.
    """

    particles: np.ndarray  # (T, N, d)
    ancestors: np.ndarray  # (T - 1, N)
    log_weights: np.ndarray  # (T, N)
    norm_weights: np.ndarray  # (T, N)
    log_z_increments: np.ndarray  # (T,)
    collapsed: bool = False
    collapse_step: int | None = None

    @property
    def T(self) -> int:
        return self.particles.shape[0]

    @property
    def N(self) -> int:
        return self.particles.shape[1]

    def log_likelihood(self) -> float:
        if self.collapsed:
            return -math.inf
        return float(np.sum(self.log_z_increments))

    def to_csv(self, path) -> None:
        """Write one row per (t, i): ``t, i, a, logw, x0..x{d-1}``."""
        T, N, d = self.particles.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["t", "i", "a", "logw"] + [f"x{k}" for k in range(d)])
            for t in range(T):
                for i in range(N):
                    a = "" if t == 0 else int(self.ancestors[t - 1, i])
                    w.writerow([t, i, a, repr(float(self.log_weights[t, i]))] + [repr(float(v)) for v in self.particles[t, i]])


def log_likelihood(ps: ParticleSystem) -> float:
    return ps.log_likelihood()


def max_weight(ps: ParticleSystem) -> float:
    """Largest realised raw weight ``max_t max_i w_t^i`` (bounded-weight check)."""
    return float(np.exp(np.max(ps.log_weights)))


def _empty(T, N, d):
    return (
        np.zeros((T, N, d)),
        np.zeros((max(T - 1, 0), N), dtype=np.int64),
        np.full((T, N), -np.inf),
        np.zeros((T, N)),
        np.full(T, -np.inf),
    )


def _normalise(lw):
    m = lw.max()
    if m == -np.inf:
        raise ParticleCollapse("particle-system collapse")
    p = np.exp(lw - m)
    s = p.sum()
    return p / s, m + math.log(s / lw.shape[0])


def _multinomial_from_uniforms(w, u):
    cdf = w.cumsum()
    idx = cdf.searchsorted(u * cdf[-1], side="right")
    return np.minimum(idx, w.shape[0] - 1, out=idx)


def _weights(model, theta, t, xp, x):
    if not model.bootstrap:
        return log_weight(model, theta, t, xp, x)
    lw = model.observation_logpdf(theta, x, t)
    # NaN never survives as a weight; outside support means -inf
    if np.isnan(lw.max()):
        lw = np.where(np.isnan(lw), -np.inf, lw)
    return lw


def _propagate(model, theta, xp, t, N, rng):
    if model.bootstrap:
        return model.transition_sample(theta, xp, t, rng)
    return model.proposal_sample(theta, xp, t, N, rng)


def _compiled(model, theta):
    """Kernel arguments when the compiled bootstrap sweep applies, else None."""
    if model.kernel is None or not model.bootstrap:
        return None
    return model.kernel_args(theta)


def run_smc(model: StateSpaceModel, theta, N: int, rng, resampler: str = "multinomial") -> ParticleSystem:
    """Run the particle filter (bootstrap unless the model sets a proposal).

    A collapse (all weights zero at some step) does not raise: the returned
    system is flagged and reports log-likelihood ``-inf``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    multinomial = resampler == "multinomial"
    resample = RESAMPLERS[resampler]
    T, d = model.T, model.state_dim
    X, A, LW, W, inc = _empty(T, N, d)
    args = _compiled(model, theta) if multinomial else None
    if args is not None:
        status, step = fastpath.sweep(model.kernel, *args, N, rng, X, A, LW, W, inc)
        if status == fastpath.COLLAPSED:
            return ParticleSystem(X, A, LW, W, inc, collapsed=True, collapse_step=step)
        return ParticleSystem(X, A, LW, W, inc)
    U = rng.random((T - 1, N)) if multinomial and T > 1 else None
    x = model.proposal_sample(theta, None, 0, N, rng).reshape(N, d)
    xp = None
    for t in range(T):
        if t > 0:
            if multinomial:
                anc = _multinomial_from_uniforms(W[t - 1], U[t - 1])
            else:
                anc = resample(W[t - 1], N, rng)
            A[t - 1] = anc
            xp = X[t - 1][anc]
            x = _propagate(model, theta, xp, t, N, rng)
        X[t] = x
        lw = _weights(model, theta, t, xp, X[t])
        LW[t] = lw
        m = lw.max()
        if m == -np.inf:
            return ParticleSystem(X, A, LW, W, inc, collapsed=True, collapse_step=t)
        p = np.exp(lw - m)
        s = p.sum()
        np.divide(p, s, out=W[t])
        inc[t] = m + math.log(s / N)
    return ParticleSystem(X, A, LW, W, inc)


def run_csmc(model: StateSpaceModel, theta, N: int, frozen, rng) -> ParticleSystem:
    """Conditional SMC retaining ``frozen.states`` at slots ``frozen.slots``.

    The retained particle at step ``t`` sits in slot ``b_t`` and its ancestor
    is fixed to ``b_{t-1}``; all other ancestors are redrawn multinomially and
    all other particles from the proposal.
    """
    T, d = model.T, model.state_dim
    path = np.asarray(frozen.states, dtype=float).reshape(T, d)
    b = np.asarray(frozen.slots, dtype=np.int64)
    if b.shape != (T,) or np.any(b < 0) or np.any(b >= N):
        raise ValueError("frozen slot indices must lie in [0, N)")
    if not np.isfinite(joint_logpdf(model, theta, path)):
        raise PathOutsideSupport("conditioned path outside support")
    X, A, LW, W, inc = _empty(T, N, d)
    args = _compiled(model, theta)
    if args is not None:
        status, step = fastpath.sweep(model.kernel, *args, N, rng, X, A, LW, W, inc, frozen=(path, b))
        if status != fastpath.OK:
            raise PathOutsideSupport(f"conditioned path has zero weight at step {step}")
        return ParticleSystem(X, A, LW, W, inc)
    U = rng.random((T - 1, N)) if T > 1 else None
    x = model.proposal_sample(theta, None, 0, N, rng).reshape(N, d)
    x[b[0]] = path[0]
    xp = None
    for t in range(T):
        if t > 0:
            anc = _multinomial_from_uniforms(W[t - 1], U[t - 1])
            anc[b[t]] = b[t - 1]
            A[t - 1] = anc
            xp = X[t - 1][anc]
            x = _propagate(model, theta, xp, t, N, rng)
            x[b[t]] = path[t]
        X[t] = x
        lw = _weights(model, theta, t, xp, X[t])
        if lw[b[t]] == -np.inf:
            raise PathOutsideSupport(f"conditioned path has zero weight at step {t}")
        LW[t] = lw
        m = lw.max()
        p = np.exp(lw - m)
        s = p.sum()
        np.divide(p, s, out=W[t])
        inc[t] = m + math.log(s / N)
    return ParticleSystem(X, A, LW, W, inc)
