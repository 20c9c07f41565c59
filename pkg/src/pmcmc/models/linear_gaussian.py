"""Linear-Gaussian state-space models with exact inference hooks."""
from __future__ import annotations

import math

import numpy as np

from ..model import Observations, StateSpaceModel
from ..oracles import LinearGaussianSpec, ffbs_sample, kalman_loglik

_LOG_2PI = math.log(2.0 * math.pi)


class _GaussianKernel:
    """Precomputed factors of one transition covariance ``Q``.

    A zero covariance is a deterministic move: the density is taken with
    respect to a point mass, so it is 0 on the mean and ``-inf`` elsewhere.
    """

    def __init__(self, Q):
        Q = np.asarray(Q, dtype=float)
        self.k = Q.shape[0]
        self.zero = not np.any(Q)
        if self.zero:
            self.chol = np.zeros_like(Q)
            self.prec = None
            self.logdet = 0.0
        else:
            self.chol = np.linalg.cholesky(Q)
            inv_chol = np.linalg.inv(self.chol)
            self.prec = inv_chol.T @ inv_chol
            self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def logpdf(self, resid, scale2=1.0):
        """Log density of residuals ``resid`` (n, k) under ``N(0, scale2 * Q)``."""
        if self.zero:
            return np.where(np.all(resid == 0.0, axis=-1), 0.0, -np.inf)
        q = np.sum((resid @ self.prec) * resid, axis=-1)
        return -0.5 * (self.k * (_LOG_2PI + math.log(scale2)) + self.logdet + q / scale2)


class LinearGaussianModel(StateSpaceModel):
    """Fixed-parameter linear-Gaussian model built from a spec.

    Used as an exact-likelihood test bed; ``theta`` is ignored.
    """

    name = "linear_gaussian"

    def __init__(self, spec: LinearGaussianSpec, y):
        y = np.asarray(y, dtype=float).ravel()
        super().__init__(Observations(y=y))
        if spec.F.shape[0] != self.T - 1:
            raise ValueError("spec length does not match observations")
        self.spec = spec
        self.state_dim = spec.k
        self.y = y
        self.offset = np.zeros(self.T) if spec.offset is None else np.asarray(spec.offset, float)
        self._init = _GaussianKernel(spec.P0)
        self._kern = [_GaussianKernel(Q) for Q in spec.Q]

    def initial_sample(self, theta, N, rng):
        return self.spec.m0 + rng.standard_normal((N, self.state_dim)) @ self._init.chol.T

    def initial_logpdf(self, theta, x):
        return self._init.logpdf(x - self.spec.m0)

    def transition_sample(self, theta, x_prev, t, rng):
        F = self.spec.F[t - 1]
        return x_prev @ F.T + rng.standard_normal(x_prev.shape) @ self._kern[t - 1].chol.T

    def transition_logpdf(self, theta, x_prev, x, t):
        return self._kern[t - 1].logpdf(x - x_prev @ self.spec.F[t - 1].T)

    def observation_logpdf(self, theta, x, t):
        R = self.spec.R
        e = self.y[t] - self.offset[t] - x @ self.spec.H
        return -0.5 * (_LOG_2PI + math.log(R) + e * e / R)

    def exact_loglik(self, theta):
        return kalman_loglik(self.spec, self.y)

    def exact_path(self, theta, rng):
        return ffbs_sample(self.spec, self.y, rng)
