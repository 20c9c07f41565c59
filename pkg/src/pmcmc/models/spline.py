"""Semiparametric regression with a cubic smoothing-spline prior.

    y_t = beta' z_t + g(s_t) + e_t,           e_t ~ N(0, sigma^2)
    X_t = (g(s_t), g'(s_t)),   X_{t+1} = F(d_t) X_t + eta_t,   eta_t ~ N(0, tau^2 U(d_t))

with ``d_t = s_{t+1} - s_t``. The initial state ``x1`` is either a model
parameter (the state then starts at that point) or, with ``x1_mode =
"diffuse"``, a state with a wide ``N(0, kappa I)`` prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..fastpath import Kernel
from ..model import Observations, Parameter, StateSpaceModel
from ..oracles import LinearGaussianSpec, ffbs_sample, kalman_loglik
from ..probability import Flat, InverseGamma, Normal
from .linear_gaussian import _GaussianKernel

_LOG_2PI = math.log(2.0 * math.pi)
_H = np.array([1.0, 0.0])

REFERENCE_BETA = [-0.1199, -0.0867, 0.0613, -0.0279, -0.0168, -0.0481, 0.6110, 0.1115]


# compiled kernels; par = (tau, sigma2, diffuse?, x1[0], x1[1], sqrt(kappa)).
# data row t = (r_t, F, chol U, prec U [00, 01, 11], log det U, zero?) with the
# transition blocks describing the move into step t
@njit(cache=True)
def _k_init(par, data, e, v, out):
    if par[2] == 0.0:
        out[0] = par[3]
        out[1] = par[4]
    else:
        out[0] = par[5] * e[0]
        out[1] = par[5] * e[1]


@njit(cache=True)
def _k_prop(par, data, xp, t, e, v, out):
    d = data[t]
    out[0] = d[1] * xp[0] + d[2] * xp[1] + par[0] * d[5] * e[0]
    out[1] = d[3] * xp[0] + d[4] * xp[1] + par[0] * (d[6] * e[0] + d[7] * e[1])


@njit(cache=True)
def _k_logg(par, data, x, t):
    e = data[t, 0] - x[0]
    return -0.5 * (1.8378770664093453 + np.log(par[1]) + e * e / par[1])


@njit(cache=True)
def _k_logf(par, data, xp, x, t):
    d = data[t]
    r0 = x[0] - d[1] * xp[0] - d[2] * xp[1]
    r1 = x[1] - d[3] * xp[0] - d[4] * xp[1]
    if d[12] != 0.0:
        return 0.0 if r0 == 0.0 and r1 == 0.0 else -np.inf
    tau2 = par[0] * par[0]
    q = d[8] * r0 * r0 + 2.0 * d[9] * r0 * r1 + d[10] * r1 * r1
    return -0.5 * (2.0 * (1.8378770664093453 + np.log(tau2)) + d[11] + q / tau2)


SPLINE_KERNEL = Kernel(_k_init, _k_prop, _k_logg, _k_logf, n_normal=2)


def spline_F(delta: float) -> np.ndarray:
    return np.array([[1.0, delta], [0.0, 1.0]])


def spline_U(delta: float) -> np.ndarray:
    return np.array([[delta**3 / 3.0, delta**2 / 2.0], [delta**2 / 2.0, delta]])


@dataclass
class SplineConfig:
    T: int = 92
    m: int = 8
    sigma2_prior: tuple = (1.0, 1.0)
    tau2_prior: tuple = (1.0, 1.0)
    kappa: float = 1e7
    x1_mode: str = "parameter"
    true_sigma2: float = 0.7033**2
    true_tau2: float = 1.9328**2
    true_beta: list = field(default_factory=lambda: list(REFERENCE_BETA))
    true_x1: tuple = (13.1341, 0.4487)

    def __post_init__(self):
        if self.x1_mode not in ("parameter", "diffuse"):
            raise ValueError("x1_mode must be 'parameter' or 'diffuse'")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")

    def true_theta(self) -> dict:
        theta = {"sigma2": np.array([self.true_sigma2]), "tau2": np.array([self.true_tau2])}
        if self.m:
            theta["beta"] = np.resize(np.asarray(self.true_beta, float), self.m)
        if self.x1_mode == "parameter":
            theta["x1"] = np.asarray(self.true_x1, float)
        return theta


class SplineModel(StateSpaceModel):
    name = "spline"
    state_dim = 2
    kernel = SPLINE_KERNEL

    def __init__(self, cfg: SplineConfig, data: Observations):
        super().__init__(data)
        if data.s is None:
            raise ValueError("spline model needs knot column 's'")
        s = data.s
        if np.any(np.diff(s) < 0):
            raise ValueError("knots s must be in ascending order (sort the data by s)")
        if data.m != cfg.m:
            raise ValueError(f"data has {data.m} covariate columns, config expects {cfg.m}")
        self.cfg = cfg
        smax = np.max(np.abs(s))
        self.s = s / smax if smax > 0 else s.copy()
        self.delta = np.diff(self.s)
        self.y = data.y.reshape(-1)
        self.Z = data.z if cfg.m else np.zeros((self.T, 0))
        self.F = np.array([spline_F(d) for d in self.delta]).reshape(-1, 2, 2)
        self.U = np.array([spline_U(d) for d in self.delta]).reshape(-1, 2, 2)
        self._kern = [_GaussianKernel(U) for U in self.U]
        self._nonzero = np.array([not k.zero for k in self._kern], dtype=bool)
        self._prec = np.array([k.prec if not k.zero else np.zeros((2, 2)) for k in self._kern]).reshape(-1, 2, 2)
        self._logdet = np.array([k.logdet for k in self._kern])
        self._diffuse = _GaussianKernel(cfg.kappa * np.eye(2))

        self.parameters = {
            "sigma2": Parameter("sigma2", 1, InverseGamma(*cfg.sigma2_prior), "log"),
            "tau2": Parameter("tau2", 1, InverseGamma(*cfg.tau2_prior), "log"),
        }
        if cfg.m:
            self.parameters["beta"] = Parameter("beta", cfg.m, Flat())
            ZtZ = self.Z.T @ self.Z
            self._ZtZ_chol = np.linalg.cholesky(ZtZ)
            self.exact_conditionals[("beta",)] = self.sample_beta
        if cfg.x1_mode == "parameter":
            self.parameters["x1"] = Parameter("x1", 2, Normal(0.0, cfg.kappa))
        self.exact_conditionals[("sigma2",)] = self.sample_sigma2
        self.exact_conditionals[("tau2",)] = self.sample_tau2
        tab = np.zeros((self.T, 13))
        for t in range(1, self.T):
            k = self._kern[t - 1]
            tab[t, 1:5] = self.F[t - 1].ravel()
            tab[t, 5:8] = k.chol[0, 0], k.chol[1, 0], k.chol[1, 1]
            if k.zero:
                tab[t, 12] = 1.0
            else:
                tab[t, 8:11] = k.prec[0, 0], k.prec[0, 1], k.prec[1, 1]
                tab[t, 11] = k.logdet
        self._ktab = tab

    def kernel_args(self, theta):
        s2, tau2 = theta["sigma2"][0], theta["tau2"][0]
        if not (s2 > 0 and tau2 > 0):
            return None
        diffuse = self.cfg.x1_mode == "diffuse"
        x1 = np.zeros(2) if diffuse else theta["x1"]
        par = np.array([math.sqrt(tau2), s2, float(diffuse), x1[0], x1[1], math.sqrt(self.cfg.kappa)])
        data = self._ktab.copy()
        data[:, 0] = self.y - self._mean(theta)
        return par, data

    # densities ----------------------------------------------------------------
    def _mean(self, theta):
        return self.Z @ theta["beta"] if "beta" in theta else np.zeros(self.T)

    def initial_sample(self, theta, N, rng):
        if self.cfg.x1_mode == "parameter":
            return np.tile(theta["x1"], (N, 1))
        return math.sqrt(self.cfg.kappa) * rng.standard_normal((N, 2))

    def initial_logpdf(self, theta, x):
        if self.cfg.x1_mode == "parameter":
            return np.where(np.all(x == theta["x1"], axis=-1), 0.0, -np.inf)
        return self._diffuse.logpdf(x)

    def transition_sample(self, theta, x_prev, t, rng):
        tau = math.sqrt(theta["tau2"][0])
        return x_prev @ self.F[t - 1].T + tau * (rng.standard_normal(x_prev.shape) @ self._kern[t - 1].chol.T)

    def transition_logpdf(self, theta, x_prev, x, t):
        return self._kern[t - 1].logpdf(x - x_prev @ self.F[t - 1].T, theta["tau2"][0])

    def observation_logpdf(self, theta, x, t):
        s2 = theta["sigma2"][0]
        mean = self.Z[t] @ theta["beta"] if "beta" in theta else 0.0
        e = self.y[t] - mean - x[:, 0]
        return -0.5 * (_LOG_2PI + math.log(s2) + e * e / s2)

    def _transition_quad(self, path):
        r = path[1:] - np.einsum("tij,tj->ti", self.F, path[:-1])
        q = np.einsum("ti,tij,tj->t", r, self._prec, r)
        exact = np.all(r == 0.0, axis=1)
        return r, q, exact

    def path_logpdf(self, theta, path):
        path = np.asarray(path, dtype=float).reshape(self.T, 2)
        lp = float(self.initial_logpdf(theta, path[:1])[0])
        if lp == -np.inf:
            return lp
        if self.T > 1:
            _, q, exact = self._transition_quad(path)
            if np.any(~self._nonzero & ~exact):
                return -np.inf
            tau2 = theta["tau2"][0]
            nz = self._nonzero
            lp += float(np.sum(-0.5 * (2 * (_LOG_2PI + math.log(tau2)) + self._logdet[nz] + q[nz] / tau2)))
        s2 = theta["sigma2"][0]
        e = self.y - self._mean(theta) - path[:, 0]
        lp += float(np.sum(-0.5 * (_LOG_2PI + math.log(s2) + e * e / s2)))
        return lp

    # exact conditionals ---------------------------------------------------------
    def sample_sigma2(self, theta, path, rng):
        a, b = self.cfg.sigma2_prior
        e = self.y - self._mean(theta) - np.asarray(path)[:, 0]
        return {"sigma2": np.array([(b + 0.5 * e @ e) / rng.gamma(a + 0.5 * self.T)])}

    def sample_tau2(self, theta, path, rng):
        a, b = self.cfg.tau2_prior
        _, q, _ = self._transition_quad(np.asarray(path, dtype=float))
        k = 2 * int(np.sum(self._nonzero))
        return {"tau2": np.array([(b + 0.5 * np.sum(q[self._nonzero])) / rng.gamma(a + 0.5 * k)])}

    def beta_conditional(self, theta, path):
        """Mean and covariance square root of ``beta | x, sigma2, y``."""
        r = self.y - np.asarray(path)[:, 0]
        L = self._ZtZ_chol
        mean = np.linalg.solve(L.T, np.linalg.solve(L, self.Z.T @ r))
        root = math.sqrt(theta["sigma2"][0]) * np.linalg.solve(L.T, np.eye(L.shape[0]))
        return mean, root

    def sample_beta(self, theta, path, rng):
        mean, root = self.beta_conditional(theta, path)
        return {"beta": mean + root @ rng.standard_normal(mean.size)}

    # exact inference -------------------------------------------------------------
    def lg_spec(self, theta) -> LinearGaussianSpec:
        if self.cfg.x1_mode == "parameter":
            m0, P0 = theta["x1"], np.zeros((2, 2))
        else:
            m0, P0 = np.zeros(2), self.cfg.kappa * np.eye(2)
        return LinearGaussianSpec(
            F=self.F, Q=theta["tau2"][0] * self.U, H=_H, R=float(theta["sigma2"][0]),
            m0=m0, P0=P0, offset=self._mean(theta),
        )

    def exact_loglik(self, theta):
        return kalman_loglik(self.lg_spec(theta), self.y)

    def exact_path(self, theta, rng):
        return ffbs_sample(self.lg_spec(theta), self.y, rng)

    def derived(self, draws):
        out = {}
        if "sigma2" in draws:
            out["sigma"] = np.sqrt(draws["sigma2"])
        if "tau2" in draws:
            out["tau"] = np.sqrt(draws["tau2"])
        return out

    def manifest(self):
        out = super().manifest()
        out.update(m=self.cfg.m, kappa=self.cfg.kappa, x1_mode=self.cfg.x1_mode,
                   priors={"sigma2": "IG(1,1) shape-scale", "tau2": "IG(1,1) shape-scale",
                           "beta": "flat", "x1": f"N(0, {self.cfg.kappa} I)"})
        return out


def simulate_spline(cfg: SplineConfig, rng):
    """Simulate knots, covariates and responses. Returns ``(Observations, states, theta)``."""
    theta = cfg.true_theta()
    T, m = cfg.T, cfg.m
    s = np.sort(rng.uniform(0.0, 1.0, T))
    s = s / s.max()
    z = rng.standard_normal((T, m)) if m else None
    x = np.empty((T, 2))
    x[0] = np.asarray(cfg.true_x1, float)
    tau = math.sqrt(cfg.true_tau2)
    for t in range(1, T):
        d = s[t] - s[t - 1]
        L = np.linalg.cholesky(spline_U(d)) if d > 0 else np.zeros((2, 2))
        x[t] = spline_F(d) @ x[t - 1] + tau * (L @ rng.standard_normal(2))
    mean = z @ theta["beta"] if m else 0.0
    y = mean + x[:, 0] + math.sqrt(cfg.true_sigma2) * rng.standard_normal(T)
    return Observations(y=y, z=z, s=s), x, theta


def build_spline(cfg: SplineConfig, data: Observations) -> SplineModel:
    return SplineModel(cfg, data)
