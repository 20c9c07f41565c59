"""Compiled bootstrap sweeps for models that supply per-particle kernels.

A model opts in by setting ``kernel`` to a :class:`Kernel` of numba
functions acting on one particle,

    init(par, data, e, v, out)            draw x_1 into ``out``
    prop(par, data, xp, t, e, v, out)     draw x_t given x_{t-1} = xp
    logg(par, data, x, t) -> float        log g(y_t | x_t)
    logf(par, data, xp, x, t) -> float    log f(x_t | xp)  (optional)

and by implementing ``kernel_args(theta) -> (par, data)`` (or ``None`` when
the compiled path cannot handle ``theta``; the numpy path is used then).
``e`` and ``v`` hold the particle's standard-normal and uniform noise for
the step; all noise of a sweep is drawn in bulk from the chain's generator,
so runs stay reproducible from the seed.

The sweeps implement exactly the same algorithms as the numpy versions in
:mod:`pmcmc.smc` and :mod:`pmcmc.trajectory` (multinomial resampling, the
retained path at its slots in conditional SMC, backward weights
``w_t f(x_{t+1} | x_t)``); only the order in which random numbers are
consumed differs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

__all__ = ["Kernel", "sweep", "backward_slots"]

OK, COLLAPSED, FROZEN_ZERO = 0, 1, 2


@dataclass(frozen=True)
class Kernel:
    init: object
    prop: object
    logg: object
    logf: object = None
    n_normal: int = 1
    n_uniform: int = 0


@njit(cache=True)
def _pick(cdf, u):
    a = np.searchsorted(cdf, u * cdf[-1], side="right")
    return min(a, cdf.shape[0] - 1)


@njit(cache=True)
def _normalise_row(LW, W, inc, t):
    N = LW.shape[1]
    m = -np.inf
    for i in range(N):
        if np.isnan(LW[t, i]):
            LW[t, i] = -np.inf
        if LW[t, i] > m:
            m = LW[t, i]
    if m == -np.inf:
        return False
    s = 0.0
    for i in range(N):
        W[t, i] = np.exp(LW[t, i] - m)
        s += W[t, i]
    for i in range(N):
        W[t, i] /= s
    inc[t] = m + np.log(s / N)
    return True


@njit(cache=True)
def _sweep(init, prop, logg, par, data, U, E, V, X, A, LW, W, inc, cond, b, path):
    T, N = LW.shape
    for i in range(N):
        if cond and i == b[0]:
            X[0, i, :] = path[0]
        else:
            init(par, data, E[0, i], V[0, i], X[0, i])
    for t in range(T):
        if t > 0:
            cdf = np.cumsum(W[t - 1])
            for i in range(N):
                A[t - 1, i] = _pick(cdf, U[t - 1, i])
            if cond:
                A[t - 1, b[t]] = b[t - 1]
            for i in range(N):
                if cond and i == b[t]:
                    X[t, i, :] = path[t]
                else:
                    prop(par, data, X[t - 1, A[t - 1, i]], t, E[t, i], V[t, i], X[t, i])
        for i in range(N):
            LW[t, i] = logg(par, data, X[t, i], t)
        if cond and not LW[t, b[t]] > -np.inf:
            return FROZEN_ZERO, t
        if not _normalise_row(LW, W, inc, t):
            return COLLAPSED, t
    return OK, T


@lru_cache(maxsize=None)
def _bound(kernel: Kernel):
    """Sweeps with the kernel functions frozen in, which avoids retyping the
    function arguments on every call. The wrappers cannot be cached on disk,
    so they are compiled once per process."""
    init, prop, logg, logf = kernel.init, kernel.prop, kernel.logg, kernel.logf

    @njit
    def fwd(par, data, U, E, V, X, A, LW, W, inc, cond, b, path):
        return _sweep(init, prop, logg, par, data, U, E, V, X, A, LW, W, inc, cond, b, path)

    bwd = None
    if logf is not None:
        @njit
        def bwd(par, data, X, LW, W_last, u, slots):
            return _backward(logf, par, data, X, LW, W_last, u, slots)
    return fwd, bwd


def sweep(kernel: Kernel, par, data, N, rng, X, A, LW, W, inc, frozen=None):
    """Fill the particle arrays in place. Returns ``(status, step)``."""
    T = LW.shape[0]
    U = rng.random((max(T - 1, 0), N))
    E = rng.standard_normal((T, N, kernel.n_normal))
    V = rng.random((T, N, kernel.n_uniform))
    if frozen is None:
        b = np.zeros(T, dtype=np.int64)
        path = np.zeros((T, X.shape[2]))
        cond = False
    else:
        path, b = frozen
        cond = True
    return _bound(kernel)[0](par, data, U, E, V, X, A, LW, W, inc, cond, b, path)


@njit(cache=True)
def _backward(logf, par, data, X, LW, W_last, u, slots):
    T, N = LW.shape
    slots[T - 1] = _pick(np.cumsum(W_last), u[T - 1])
    lw = np.empty(N)
    for t in range(T - 2, -1, -1):
        nxt = X[t + 1, slots[t + 1]]
        m = -np.inf
        for i in range(N):
            v = LW[t, i] + logf(par, data, X[t, i], nxt, t + 1)
            if np.isnan(v):
                v = -np.inf
            lw[i] = v
            if v > m:
                m = v
        if m == -np.inf:
            return t
        for i in range(N):
            lw[i] = np.exp(lw[i] - m)
        slots[t] = _pick(np.cumsum(lw), u[t])
    return -1


def backward_slots(kernel: Kernel, par, data, ps, rng):
    """Backward-simulation slots; returns ``(slots, collapse_step or -1)``."""
    T = ps.T
    u = rng.random(T)
    slots = np.empty(T, dtype=np.int64)
    bad = _bound(kernel)[1](par, data, ps.particles, ps.log_weights, ps.norm_weights[-1], u, slots)
    return slots, bad
