"""Exact inference for linear-Gaussian and finite-state models.

These serve two purposes: they are the reference answers for the particle
methods' correctness tests, and they power the ideal (non-particle) sampler.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "LinearGaussianSpec",
    "kalman_filter",
    "kalman_loglik",
    "kalman_smoother",
    "ffbs_sample",
    "DiscreteHMMSpec",
    "hmm_forward_loglik",
    "hmm_smoothing_marginals",
    "hmm_enumerate_posterior",
    "hmm_ffbs_sample",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LinearGaussianSpec:
    """``x_1 ~ N(m0, P0)``, ``x_t = F_t x_{t-1} + N(0, Q_t)``,
    ``y_t = offset_t + H x_t + N(0, R)``.

    ``F`` and ``Q`` have shape ``(T - 1, k, k)``; entry ``t - 1`` drives the
    move into step ``t``. Observations are scalar.
    """

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: float
    m0: np.ndarray
    P0: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        self.m0 = np.asarray(self.m0, dtype=float).ravel()
        k = self.m0.size
        self.P0 = np.asarray(self.P0, dtype=float).reshape(k, k)
        self.H = np.asarray(self.H, dtype=float).reshape(k)
        self.F = np.asarray(self.F, dtype=float).reshape(-1, k, k)
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1, k, k)
        if self.F.shape != self.Q.shape:
            raise ValueError("F and Q must have matching shapes")
        if not self.R >= 0:
            raise ValueError("observation variance must be non-negative")

    @property
    def k(self) -> int:
        return self.m0.size


def _offset(spec, T):
    return np.zeros(T) if spec.offset is None else np.asarray(spec.offset, dtype=float).reshape(T)


@njit(cache=True)
def _filter_core(F, Q, H, R, m0, P0, yc, ms, Ps):
    T = yc.shape[0]
    m, P = m0.copy(), P0.copy()
    ll = 0.0
    for t in range(T):
        if t > 0:
            m = F[t - 1] @ m
            P = F[t - 1] @ P @ F[t - 1].T + Q[t - 1]
        PH = P @ H
        s = H @ PH + R
        if not s > 0:
            return ll, t
        e = yc[t] - H @ m
        ll += -0.5 * (1.8378770664093453 + np.log(s) + e * e / s)
        K = PH / s
        m = m + K * e
        P = P - np.outer(K, PH)
        P = 0.5 * (P + P.T)
        ms[t] = m
        Ps[t] = P
    return ll, -1


def kalman_filter(spec: LinearGaussianSpec, y):
    """Forward pass. Returns ``(loglik, filtered_means, filtered_covs)``."""
    y = np.asarray(y, dtype=float).ravel()
    T, k = y.size, spec.k
    if spec.F.shape[0] != T - 1:
        raise ValueError(f"spec has {spec.F.shape[0] + 1} steps, data has {T}")
    ms = np.empty((T, k))
    Ps = np.empty((T, k, k))
    ll, bad = _filter_core(np.ascontiguousarray(spec.F), np.ascontiguousarray(spec.Q), spec.H,
                           float(spec.R), spec.m0, spec.P0, y - _offset(spec, T), ms, Ps)
    if bad >= 0:
        raise np.linalg.LinAlgError(f"singular innovation variance at step {bad}")
    return ll, ms, Ps


def kalman_loglik(spec: LinearGaussianSpec, y) -> float:
    return kalman_filter(spec, y)[0]


@njit(cache=True)
def _backward_gain(P, F, Q):
    Pp = F @ P @ F.T + Q
    # pinv handles the singular predicted covariance of a known initial state
    return P @ F.T @ np.linalg.pinv(Pp), Pp


def kalman_smoother(spec: LinearGaussianSpec, y):
    """Rauch-Tung-Striebel smoother. Returns smoothed ``(means, covs)``."""
    _, ms, Ps = kalman_filter(spec, y)
    T = ms.shape[0]
    sm, sP = ms.copy(), Ps.copy()
    for t in range(T - 2, -1, -1):
        F, Q = spec.F[t], spec.Q[t]
        G, Pp = _backward_gain(Ps[t], F, Q)
        sm[t] = ms[t] + G @ (sm[t + 1] - F @ ms[t])
        sP[t] = Ps[t] + G @ (sP[t + 1] - Pp) @ G.T
    return sm, sP


@njit(cache=True)
def _sqrt_psd(cov):
    # symmetric square root; tolerates the singular covariances of exact moves
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return vecs * np.sqrt(np.maximum(vals, 0.0))


@njit(cache=True)
def _ffbs_core(F, Q, ms, Ps, z, x):
    T = ms.shape[0]
    x[T - 1] = ms[T - 1] + _sqrt_psd(Ps[T - 1]) @ z[T - 1]
    for t in range(T - 2, -1, -1):
        G, _ = _backward_gain(Ps[t], F[t], Q[t])
        mean = ms[t] + G @ (x[t + 1] - F[t] @ ms[t])
        cov = Ps[t] - G @ F[t] @ Ps[t]
        x[t] = mean + _sqrt_psd(cov) @ z[t]


def ffbs_sample(spec: LinearGaussianSpec, y, rng) -> np.ndarray:
    """Exact draw of ``x_{1:T}`` from ``p(x | y)`` by forward filtering,
    backward sampling. Returns an array of shape ``(T, k)``."""
    _, ms, Ps = kalman_filter(spec, y)
    T, k = ms.shape
    z = rng.standard_normal((T, k))
    x = np.empty((T, k))
    _ffbs_core(np.ascontiguousarray(spec.F), np.ascontiguousarray(spec.Q), ms, Ps, z, x)
    return x


# -- finite-state hidden Markov models --------------------------------------------


@dataclass
class DiscreteHMMSpec:
    initial: np.ndarray  # (S,)
    transition: np.ndarray  # (S, S), rows = from-state
    emission: np.ndarray  # (S, K)
    obs: np.ndarray  # (T,) ints in [0, K)

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.emission = np.asarray(self.emission, dtype=float)
        self.obs = np.asarray(self.obs, dtype=np.int64).ravel()
        for name, mat in (("initial", self.initial[None]), ("transition", self.transition), ("emission", self.emission)):
            if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(f"{name} rows must be stochastic")

    @property
    def S(self) -> int:
        return self.initial.size

    @property
    def T(self) -> int:
        return self.obs.size


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def _lse(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _forward(spec):
    lA, lE = _log(spec.transition), _log(spec.emission)
    la = np.empty((spec.T, spec.S))
    la[0] = _log(spec.initial) + lE[:, spec.obs[0]]
    for t in range(1, spec.T):
        la[t] = _lse(la[t - 1][:, None] + lA, axis=0) + lE[:, spec.obs[t]]
    return la


def hmm_forward_loglik(spec: DiscreteHMMSpec) -> float:
    return float(_lse(_forward(spec)[-1], axis=0))


def hmm_smoothing_marginals(spec: DiscreteHMMSpec) -> np.ndarray:
    """``P(x_t = s | y_{1:T})`` as a ``(T, S)`` array."""
    la = _forward(spec)
    lA, lE = _log(spec.transition), _log(spec.emission)
    lb = np.zeros_like(la)
    for t in range(spec.T - 2, -1, -1):
        lb[t] = _lse(lA + (lE[:, spec.obs[t + 1]] + lb[t + 1])[None, :], axis=1)
    lp = la + lb
    lp -= _lse(lp, axis=1)[:, None]
    return np.exp(lp)


def hmm_enumerate_posterior(spec: DiscreteHMMSpec, max_paths: int = 10**6):
    """Brute-force posterior over all ``S**T`` paths.

    Returns ``(paths, probs)`` where ``paths`` is ``(S**T, T)`` in
    lexicographic order and ``probs`` the posterior probabilities.
    """
    S, T = spec.S, spec.T
    if S**T > max_paths:
        raise ValueError(f"enumeration size {S**T} exceeds {max_paths}")
    paths = np.array(list(itertools.product(range(S), repeat=T)), dtype=np.int64).reshape(-1, T)
    lp = _log(spec.initial)[paths[:, 0]] + _log(spec.emission)[paths[:, 0], spec.obs[0]]
    for t in range(1, T):
        lp = lp + _log(spec.transition)[paths[:, t - 1], paths[:, t]] + _log(spec.emission)[paths[:, t], spec.obs[t]]
    m = lp.max()
    p = np.exp(lp - m)
    return paths, p / p.sum()


def hmm_ffbs_sample(spec: DiscreteHMMSpec, rng) -> np.ndarray:
    """Exact posterior path draw for a finite HMM."""
    la = _forward(spec)
    lA = _log(spec.transition)
    x = np.empty(spec.T, dtype=np.int64)

    def pick(lw):
        p = np.exp(lw - lw.max())
        return int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))

    x[-1] = pick(la[-1])
    for t in range(spec.T - 2, -1, -1):
        x[t] = pick(la[t] + lA[:, x[t + 1]])
    return x
