"""Stochastic volatility with regressors in the mean.

    y_t = beta' z_t + exp(x_t / 2) eps_t,     eps_t ~ N(0, 1)
    x_{t+1} = mu + phi (x_t - mu) + eta_t,    eta_t ~ N(0, tau^2)
    x_1 ~ N(mu, tau^2 / (1 - phi^2))
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from numba import njit

from ..fastpath import Kernel
from ..model import Observations, Parameter, StateSpaceModel
from ..probability import Flat, InverseGamma, Normal, Uniform

_LOG_2PI = math.log(2.0 * math.pi)


# compiled per-particle kernels; par = (mu, phi, tau, stationary sd), data[:, 0] = y - beta'z
@njit(cache=True)
def _k_init(par, data, e, v, out):
    out[0] = par[0] + par[3] * e[0]


@njit(cache=True)
def _k_prop(par, data, xp, t, e, v, out):
    out[0] = par[0] + par[1] * (xp[0] - par[0]) + par[2] * e[0]


@njit(cache=True)
def _k_logg(par, data, x, t):
    r = data[t, 0]
    return -0.5 * (1.8378770664093453 + x[0] + r * r * np.exp(-x[0]))


@njit(cache=True)
def _k_logf(par, data, xp, x, t):
    e = (x[0] - par[0] - par[1] * (xp[0] - par[0])) / par[2]
    return -0.5 * (1.8378770664093453 + e * e) - np.log(par[2])


SV_KERNEL = Kernel(_k_init, _k_prop, _k_logg, _k_logf)


@dataclass
class SVConfig:
    T: int = 500
    m: int = 50
    mu_prior: tuple = (0.0, 100.0)
    tau_prior: tuple = (2.5, 0.05)
    true_mu: float = -0.2
    true_phi: float = 0.98
    true_tau: float = 0.15
    true_beta: list | None = None  # defaults to ones(m)
    z_sd: float = 0.5

    def __post_init__(self):
        if self.m < 0 or self.T < 1:
            raise ValueError("SVConfig needs T >= 1 and m >= 0")
        if not abs(self.true_phi) < 1:
            raise ValueError("|phi| < 1 required for a stationary simulation")

    def true_theta(self) -> dict:
        theta = {
            "mu": np.array([self.true_mu]),
            "phi": np.array([self.true_phi]),
            "tau": np.array([self.true_tau]),
        }
        if self.m:
            beta = np.ones(self.m) if self.true_beta is None else np.asarray(self.true_beta, float)
            theta["beta"] = beta.reshape(self.m)
        return theta


class SVModel(StateSpaceModel):
    name = "sv"
    state_dim = 1
    kernel = SV_KERNEL

    def __init__(self, cfg: SVConfig, data: Observations):
        super().__init__(data)
        self.cfg = cfg
        if data.m != cfg.m:
            raise ValueError(f"data has {data.m} covariate columns, config expects {cfg.m}")
        self.y = data.y.reshape(-1)
        self.Z = data.z if cfg.m else np.zeros((self.T, 0))
        self.parameters = {
            "mu": Parameter("mu", 1, Normal(*cfg.mu_prior)),
            "phi": Parameter("phi", 1, Uniform(-1.0, 1.0)),
            "tau": Parameter("tau", 1, InverseGamma(*cfg.tau_prior), "log"),
        }
        if cfg.m:
            self.parameters["beta"] = Parameter("beta", cfg.m, Flat())
            self.exact_conditionals[("beta",)] = self.sample_beta

    def _mean(self, theta):
        if "beta" in theta:
            return self.Z @ theta["beta"]
        return np.zeros(self.T)

    def _stationary_var(self, theta):
        phi, tau = theta["phi"][0], theta["tau"][0]
        if not abs(phi) < 1:
            return math.nan
        return tau * tau / (1.0 - phi * phi)

    def kernel_args(self, theta):
        v = self._stationary_var(theta)
        tau = theta["tau"][0]
        if not (v > 0 and tau > 0):
            return None
        par = np.array([theta["mu"][0], theta["phi"][0], tau, math.sqrt(v)])
        return par, (self.y - self._mean(theta)).reshape(self.T, 1)

    def initial_sample(self, theta, N, rng):
        v = self._stationary_var(theta)
        if not v >= 0:
            raise ValueError("|phi| >= 1: no stationary initial distribution")
        return (theta["mu"][0] + math.sqrt(v) * rng.standard_normal(N)).reshape(N, 1)

    def initial_logpdf(self, theta, x):
        v = self._stationary_var(theta)
        x = x[:, 0]
        if not v > 0:
            return np.full(x.shape, -np.inf)
        return -0.5 * (_LOG_2PI + math.log(v) + (x - theta["mu"][0]) ** 2 / v)

    def transition_sample(self, theta, x_prev, t, rng):
        mu, phi, tau = theta["mu"][0], theta["phi"][0], theta["tau"][0]
        return mu + phi * (x_prev - mu) + tau * rng.standard_normal(x_prev.shape)

    def transition_logpdf(self, theta, x_prev, x, t):
        mu, phi, tau = theta["mu"][0], theta["phi"][0], theta["tau"][0]
        if not tau > 0:
            return np.full(np.broadcast(x_prev[:, 0], x[:, 0]).shape, -np.inf)
        e = x[:, 0] - mu - phi * (x_prev[:, 0] - mu)
        return -0.5 * (_LOG_2PI + 2.0 * math.log(tau) + e * e / (tau * tau))

    def observation_logpdf(self, theta, x, t):
        xt = x[:, 0]
        mean = self.Z[t] @ theta["beta"] if "beta" in theta else 0.0
        r = self.y[t] - mean
        return -0.5 * (_LOG_2PI + xt + r * r * np.exp(-xt))

    def path_logpdf(self, theta, path):
        x = np.asarray(path, dtype=float).reshape(self.T)
        lp = float(self.initial_logpdf(theta, x[:1, None])[0])
        if lp == -np.inf:
            return lp
        if self.T > 1:
            lp += float(np.sum(self.transition_logpdf(theta, x[:-1, None], x[1:, None], 1)))
        r = self.y - self._mean(theta)
        lp += float(np.sum(-0.5 * (_LOG_2PI + x + r * r * np.exp(-x))))
        return lp

    def sample_beta(self, theta, path, rng):
        """beta | x, y under a flat prior: weighted least squares Gaussian."""
        mean, cov_chol = self.beta_conditional(path)
        return {"beta": mean + cov_chol @ rng.standard_normal(mean.size)}

    def beta_conditional(self, path):
        """Mean and Cholesky factor of the covariance of ``beta | x, y``."""
        w = np.exp(-np.asarray(path, dtype=float).reshape(self.T))
        Zw = self.Z * w[:, None]
        prec = self.Z.T @ Zw
        L = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, Zw.T @ self.y)
        # prec = L L'  =>  cov = L^-T L^-1, so L^-T is a square root of cov
        cov_chol = np.linalg.solve(L.T, np.eye(L.shape[0]))
        return mean, cov_chol

    def manifest(self):
        out = super().manifest()
        out.update(m=self.cfg.m, priors={"mu": "N(0,100) [mean, variance]", "phi": "U(-1,1)",
                                         "tau": "IG(2.5,0.05) shape-scale", "beta": "flat"})
        return out


def simulate_sv(cfg: SVConfig, rng):
    """Forward simulation. Returns ``(Observations, states, theta)``."""
    theta = cfg.true_theta()
    T, m = cfg.T, cfg.m
    z = cfg.z_sd * rng.standard_normal((T, m)) if m else None
    mu, phi, tau = cfg.true_mu, cfg.true_phi, cfg.true_tau
    x = np.empty(T)
    x[0] = mu + tau / math.sqrt(1.0 - phi * phi) * rng.standard_normal()
    eta = tau * rng.standard_normal(T)
    for t in range(1, T):
        x[t] = mu + phi * (x[t - 1] - mu) + eta[t]
    mean = z @ theta["beta"] if m else 0.0
    y = mean + np.exp(x / 2.0) * rng.standard_normal(T)
    return Observations(y=y, z=z), x.reshape(T, 1), theta


def build_sv(cfg: SVConfig, data: Observations) -> SVModel:
    return SVModel(cfg, data)
