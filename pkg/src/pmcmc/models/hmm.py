"""Finite-state hidden Markov models wrapped as state-space models.

States are integer labels stored as floats in an ``(N, 1)`` array. Used as
exactly solvable test beds: the samplers' output is compared with brute
force enumeration of the posterior.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..fastpath import Kernel
from ..model import Observations, Parameter, StateSpaceModel
from ..oracles import DiscreteHMMSpec, hmm_ffbs_sample, hmm_forward_loglik


# compiled kernels; par = (S, cumsum p0, cumsum rows of A, log A), data[t] = log E[:, y_t]
@njit(cache=True)
def _k_pick(par, lo, S, u):
    k = 0
    while k < S - 1 and u * par[lo + S - 1] >= par[lo + k]:
        k += 1
    return k


@njit(cache=True)
def _k_init(par, data, e, v, out):
    out[0] = _k_pick(par, 1, int(par[0]), v[0])


@njit(cache=True)
def _k_prop(par, data, xp, t, e, v, out):
    S = int(par[0])
    out[0] = _k_pick(par, 1 + S + int(xp[0]) * S, S, v[0])


@njit(cache=True)
def _k_logg(par, data, x, t):
    return data[t, int(x[0])]


@njit(cache=True)
def _k_logf(par, data, xp, x, t):
    S = int(par[0])
    return par[1 + S + S * S + int(xp[0]) * S + int(x[0])]


HMM_KERNEL = Kernel(_k_init, _k_prop, _k_logg, _k_logf, n_normal=0, n_uniform=1)


@dataclass(frozen=True)
class GridPrior:
    """Discrete prior on a finite set of values."""

    values: tuple
    probs: tuple | None = None

    def __post_init__(self):
        p = np.full(len(self.values), 1.0 / len(self.values)) if self.probs is None else np.asarray(self.probs, float)
        if p.shape != (len(self.values),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("grid prior probabilities must be a distribution over the values")
        object.__setattr__(self, "probs", tuple(p))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_lookup", {float(v): float(np.log(q)) for v, q in zip(self.values, p)})

    def index(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        hit = x[..., None] == vals
        return np.where(hit.any(-1), hit.argmax(-1), -1)

    def logpdf_scalar(self, x) -> float:
        return self._lookup.get(float(x), -np.inf)

    def logpdf(self, x):
        if np.ndim(x) == 0 or np.size(x) == 1:
            lp = self._lookup.get(float(np.ravel(x)[0]), -np.inf)
            return np.array([lp]) if np.ndim(x) <= 1 else np.full(np.shape(x), lp)
        idx = self.index(x)
        with np.errstate(divide="ignore"):
            lp = np.log(np.asarray(self.probs))
        return np.where(idx >= 0, lp[np.maximum(idx, 0)], -np.inf)

    def sample(self, rng, size=None):
        return rng.choice(np.asarray(self.values, float), size=size, p=np.asarray(self.probs))


class DiscreteHMMModel(StateSpaceModel):
    """HMM whose matrices may depend on parameters.

    ``initial``, ``transition`` and ``emission`` are arrays or callables of
    ``theta`` returning arrays.
    """

    name = "hmm"
    state_dim = 1
    kernel = HMM_KERNEL

    def __init__(self, obs, initial, transition, emission, parameters=None):
        obs = np.asarray(obs, dtype=np.int64).ravel()
        super().__init__(Observations(y=obs.astype(float)))
        self.obs = obs
        self._steps = np.arange(obs.size)
        self._initial, self._transition, self._emission = initial, transition, emission
        self.parameters = dict(parameters or {})
        self._cache = {}
        for name, par in self.parameters.items():
            if isinstance(par.prior, GridPrior):
                self.exact_conditionals[(name,)] = _GridConditional(self, name)

    @staticmethod
    def _eval(obj, theta):
        return np.asarray(obj(theta) if callable(obj) else obj, dtype=float)

    def _tables(self, theta):
        """Probability tables, their logs and cumulative rows, cached per theta."""
        key = tuple(v for p in self.parameters for v in np.ravel(theta[p]).tolist())
        tab = self._cache.get(key)
        if tab is None:
            p0 = self._eval(self._initial, theta)
            A = self._eval(self._transition, theta)
            E = self._eval(self._emission, theta)
            with np.errstate(divide="ignore"):
                tab = (np.cumsum(p0), np.cumsum(A, axis=1), np.log(p0), np.log(A), np.log(E)[:, self.obs])
            par = np.concatenate([[p0.size], tab[0], tab[1].ravel(), tab[3].ravel()])
            tab = tab + ((par, np.ascontiguousarray(tab[4].T)),)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = tab
        return tab

    def kernel_args(self, theta):
        return self._tables(theta)[5]

    def spec(self, theta) -> DiscreteHMMSpec:
        return DiscreteHMMSpec(
            self._eval(self._initial, theta),
            self._eval(self._transition, theta),
            self._eval(self._emission, theta),
            self.obs,
        )

    def initial_sample(self, theta, N, rng):
        c = self._tables(theta)[0]
        return np.searchsorted(c, rng.random(N) * c[-1], side="right").astype(float).reshape(N, 1)

    def initial_logpdf(self, theta, x):
        return self._tables(theta)[2][x[:, 0].astype(np.int64)]

    def transition_sample(self, theta, x_prev, t, rng):
        c = self._tables(theta)[1][x_prev[:, 0].astype(np.int64)]
        u = rng.random(x_prev.shape[0]) * c[:, -1]
        return (u[:, None] >= c).sum(axis=1).astype(float).reshape(-1, 1)

    def transition_logpdf(self, theta, x_prev, x, t):
        return self._tables(theta)[3][x_prev[:, 0].astype(np.int64), x[:, 0].astype(np.int64)]

    def observation_logpdf(self, theta, x, t):
        return self._tables(theta)[4][x[:, 0].astype(np.int64), t]

    def path_logpdf(self, theta, path):
        s = np.asarray(path).reshape(self.T).astype(np.int64)
        _, _, lp0, lA, lE, _ = self._tables(theta)
        return float(lp0[s[0]] + lA[s[:-1], s[1:]].sum() + lE[s, self._steps].sum())

    def exact_loglik(self, theta):
        return hmm_forward_loglik(self.spec(theta))

    def exact_path(self, theta, rng):
        return hmm_ffbs_sample(self.spec(theta), rng).astype(float).reshape(self.T, 1)


class _GridConditional:
    """Exact full conditional of a grid-valued scalar parameter given a path."""

    def __init__(self, model, name):
        self.model, self.name = model, name

    def __call__(self, theta, path, rng):
        prior = self.model.parameters[self.name].prior
        vals = np.asarray(prior.values, dtype=float)
        with np.errstate(divide="ignore"):
            lp = np.log(np.asarray(prior.probs))
        th = dict(theta)
        for k, v in enumerate(vals):
            if lp[k] > -np.inf:
                th[self.name] = np.array([v])
                lp[k] += self.model.path_logpdf(th, path)
        p = np.exp(lp - lp.max())
        k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        return {self.name: np.array([vals[k]])}


def two_state_hmm(obs, switch=0.2, flip=0.25, initial=(0.5, 0.5), switch_grid=None, flip_grid=None):
    """Symmetric two-state HMM with binary observations.

    ``switch`` is the probability of changing state, ``flip`` the probability
    that the observation differs from the state. Passing a grid turns the
    corresponding quantity into a grid-prior parameter.
    """
    params = {}
    if switch_grid is not None:
        params["switch"] = Parameter("switch", 1, GridPrior(tuple(switch_grid)))
    if flip_grid is not None:
        params["flip"] = Parameter("flip", 1, GridPrior(tuple(flip_grid)))

    def trans(theta):
        a = theta["switch"][0] if "switch" in params else switch
        return np.array([[1 - a, a], [a, 1 - a]])

    def emit(theta):
        e = theta["flip"][0] if "flip" in params else flip
        return np.array([[1 - e, e], [e, 1 - e]])

    return DiscreteHMMModel(obs, np.asarray(initial, float), trans, emit, params)
