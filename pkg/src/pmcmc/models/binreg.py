"""Binomial time-series regression (logit link) with shifts in the intercept.

    y_t ~ Bin(n_t, p_t),   logit p_t = x_t + beta' z_t
    x_{t+1} = x_t + k_{t+1} eta_{t+1},   eta ~ N(0, tau^2)

Scenario ``"a"``: ``k in {0, 1}`` with ``P(k = 1) = omega`` (piecewise
constant intercept). The transition then has an atom at ``x_{t+1} = x_t``;
its density is taken with respect to the atom plus Lebesgue measure, which
is enough for the bootstrap filter and for conditioning on a path, but not
for backward simulation.

Scenario ``"b"``: ``k in {1, 100}`` with ``P(k = 100) = omega``, i.e. the
noise standard deviation is inflated a hundredfold on a jump.

With ``markov_k=True`` the indicators form a two-state Markov chain: the
state becomes ``(x_t, k_t)``, ``omega`` is the jump probability after a
non-jump and ``omega_jump`` the probability after a jump.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from numba import njit

from ..fastpath import Kernel
from ..model import Observations, Parameter, StateSpaceModel
from ..probability import Beta, Flat, InverseGamma, Normal

_LOG_2PI = math.log(2.0 * math.pi)
_JUMP_SCALE = 100.0


# compiled kernels for independent k_t; par = (tau, omega, scenario b?, x1 mean, x1 sd),
# data columns = (y, n, log binomial coefficient, beta'z)
@njit(cache=True)
def _k_init(par, data, e, v, out):
    out[0] = par[3] + par[4] * e[0]


@njit(cache=True)
def _k_prop(par, data, xp, t, e, v, out):
    jump = v[0] < par[1]
    eps = par[0] * e[0]
    if par[2] == 0.0:
        out[0] = xp[0] + eps if jump else xp[0]
    else:
        out[0] = xp[0] + (_JUMP_SCALE * eps if jump else eps)


@njit(cache=True)
def _k_logg(par, data, x, t):
    eta = x[0] + data[t, 3]
    soft = max(eta, 0.0) + np.log1p(np.exp(-abs(eta)))
    return data[t, 2] + data[t, 0] * eta - data[t, 1] * soft


@njit(cache=True)
def _k_logf(par, data, xp, x, t):
    # scenario (b) only: two-component normal mixture on the increment
    dx = x[0] - xp[0]
    v0 = par[0] * par[0]
    v1 = _JUMP_SCALE * _JUMP_SCALE * v0
    l0 = np.log1p(-par[1]) - 0.5 * (1.8378770664093453 + np.log(v0) + dx * dx / v0)
    l1 = np.log(par[1]) - 0.5 * (1.8378770664093453 + np.log(v1) + dx * dx / v1)
    m = max(l0, l1)
    if m == -np.inf:
        return m
    return m + np.log(np.exp(l0 - m) + np.exp(l1 - m))


BINREG_KERNEL = Kernel(_k_init, _k_prop, _k_logg, _k_logf, n_normal=1, n_uniform=1)
BINREG_KERNEL_A = Kernel(_k_init, _k_prop, _k_logg, None, n_normal=1, n_uniform=1)


def default_beta(m: int) -> list:
    if m == 2:
        return [-1.5, 1.0]
    return [-1.5 if j % 2 == 0 else 0.0 for j in range(m)]


@dataclass
class BinregConfig:
    T: int = 300
    m: int = 2
    scenario: str = "a"
    tau2_prior: tuple = (2.0, 5.0)
    omega_prior: tuple = (8.0, 2.0)
    x1_prior: tuple = (0.0, 10.0)
    true_tau2: float = 5.0
    true_omega: float = 0.87
    true_beta: list | None = None
    true_x1: float = 0.0
    trials: tuple = (10, 0.5)
    markov_k: bool = False
    true_omega_jump: float = 0.87

    def __post_init__(self):
        if self.scenario not in ("a", "b"):
            raise ValueError("scenario must be 'a' or 'b'")
        if not 0.0 <= self.true_omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")

    def true_theta(self) -> dict:
        beta = default_beta(self.m) if self.true_beta is None else self.true_beta
        theta = {"tau2": np.array([self.true_tau2]), "omega": np.array([self.true_omega])}
        if self.m:
            theta["beta"] = np.asarray(beta, float).reshape(self.m)
        if self.markov_k:
            theta["omega_jump"] = np.array([self.true_omega_jump])
        return theta


def binomial_logit_logpmf(y, n, eta):
    """log Bin(y | n, expit(eta)), stable for large |eta|."""
    logc = gammaln(n + 1.0) - gammaln(y + 1.0) - gammaln(n - y + 1.0)
    return logc + y * eta - n * np.logaddexp(0.0, eta)


class BinregModel(StateSpaceModel):
    name = "binreg"

    def __init__(self, cfg: BinregConfig, data: Observations):
        super().__init__(data)
        if data.n is None:
            raise ValueError("binomial model needs trial counts 'n'")
        if np.any(data.n < 1):
            raise ValueError("trial counts n_t must be >= 1")
        if data.m != cfg.m:
            raise ValueError(f"data has {data.m} covariate columns, config expects {cfg.m}")
        self.cfg = cfg
        self.y = data.y.reshape(-1)
        self.n = data.n
        self.Z = data.z if cfg.m else np.zeros((self.T, 0))
        self._logc = gammaln(self.n + 1.0) - gammaln(self.y + 1.0) - gammaln(self.n - self.y + 1.0)
        self.state_dim = 2 if cfg.markov_k else 1
        # atom at "no move" in scenario (a): no common dominating density for f
        self.transition_evaluable = cfg.scenario == "b"
        self._x1 = Normal(*cfg.x1_prior)
        self.parameters = {
            "tau2": Parameter("tau2", 1, InverseGamma(*cfg.tau2_prior), "log"),
            "omega": Parameter("omega", 1, Beta(*cfg.omega_prior), "logit"),
        }
        if cfg.markov_k:
            self.parameters["omega_jump"] = Parameter("omega_jump", 1, Beta(*cfg.omega_prior), "logit")
        if cfg.m:
            self.parameters["beta"] = Parameter("beta", cfg.m, Flat())
        if cfg.scenario == "a" and not cfg.markov_k:
            self.exact_conditionals[("tau2",)] = self.sample_tau2
            self.exact_conditionals[("omega",)] = self.sample_omega
        if not cfg.markov_k:
            self.kernel = BINREG_KERNEL if cfg.scenario == "b" else BINREG_KERNEL_A

    def kernel_args(self, theta):
        tau2, omega = theta["tau2"][0], theta["omega"][0]
        if not (tau2 > 0 and 0.0 <= omega <= 1.0):
            return None
        par = np.array([math.sqrt(tau2), omega, float(self.cfg.scenario == "b"),
                        self._x1.mean, math.sqrt(self._x1.var)])
        lin = self.Z @ theta["beta"] if "beta" in theta else np.zeros(self.T)
        return par, np.column_stack([self.y, self.n, self._logc, lin])

    # helpers ------------------------------------------------------------------
    def _jump_prob(self, theta, k_prev):
        if self.cfg.markov_k:
            return np.where(k_prev > 0.5, theta["omega_jump"][0], theta["omega"][0])
        return theta["omega"][0]

    def _step_logpdf(self, dx, p_jump, tau2):
        """Log density of the increment, marginal over the jump indicator."""
        with np.errstate(divide="ignore"):
            if self.cfg.scenario == "a":
                jump = np.log(p_jump) - 0.5 * (_LOG_2PI + math.log(tau2) + dx * dx / tau2)
                return np.where(dx == 0.0, np.log1p(-p_jump), jump)
            big = _JUMP_SCALE**2 * tau2
            l0 = np.log1p(-p_jump) - 0.5 * (_LOG_2PI + math.log(tau2) + dx * dx / tau2)
            l1 = np.log(p_jump) - 0.5 * (_LOG_2PI + math.log(big) + dx * dx / big)
            return np.logaddexp(l0, l1)

    # densities ----------------------------------------------------------------
    def initial_sample(self, theta, N, rng):
        x = self._x1.sample(rng, N)
        if self.cfg.markov_k:
            return np.column_stack([x, np.zeros(N)])
        return x.reshape(N, 1)

    def initial_logpdf(self, theta, x):
        lp = self._x1.logpdf(x[:, 0])
        if self.cfg.markov_k:
            lp = np.where(x[:, 1] == 0.0, lp, -np.inf)
        return lp

    def transition_sample(self, theta, x_prev, t, rng):
        N = x_prev.shape[0]
        tau = math.sqrt(theta["tau2"][0])
        k_prev = x_prev[:, 1] if self.cfg.markov_k else None
        jump = rng.random(N) < self._jump_prob(theta, k_prev)
        eps = tau * rng.standard_normal(N)
        if self.cfg.scenario == "a":
            step = np.where(jump, eps, 0.0)
        else:
            step = np.where(jump, _JUMP_SCALE * eps, eps)
        x = x_prev[:, 0] + step
        if self.cfg.markov_k:
            return np.column_stack([x, jump.astype(float)])
        return x.reshape(N, 1)

    def transition_logpdf(self, theta, x_prev, x, t):
        tau2 = theta["tau2"][0]
        dx = x[:, 0] - x_prev[:, 0]
        if not self.cfg.markov_k:
            return self._step_logpdf(dx, theta["omega"][0], tau2)
        p = self._jump_prob(theta, x_prev[:, 1])
        k = x[:, 1]
        with np.errstate(divide="ignore"):
            if self.cfg.scenario == "a":
                jump = np.log(p) - 0.5 * (_LOG_2PI + math.log(tau2) + dx * dx / tau2)
                return np.where(k > 0.5, jump, np.where(dx == 0.0, np.log1p(-p), -np.inf))
            var = np.where(k > 0.5, _JUMP_SCALE**2 * tau2, tau2)
            return np.where(k > 0.5, np.log(p), np.log1p(-p)) - 0.5 * (_LOG_2PI + np.log(var) + dx * dx / var)

    def _eta(self, theta, x0, t=None):
        if "beta" not in theta:
            return x0
        lin = self.Z @ theta["beta"] if t is None else self.Z[t] @ theta["beta"]
        return x0 + lin

    def observation_logpdf(self, theta, x, t):
        eta = self._eta(theta, x[:, 0], t)
        return self._logc[t] + self.y[t] * eta - self.n[t] * np.logaddexp(0.0, eta)

    def path_logpdf(self, theta, path):
        path = np.asarray(path, dtype=float).reshape(self.T, self.state_dim)
        lp = float(self.initial_logpdf(theta, path[:1])[0])
        if lp == -np.inf:
            return lp
        if self.T > 1:
            lp += float(np.sum(self.transition_logpdf(theta, path[:-1], path[1:], 1)))
        eta = self._eta(theta, path[:, 0])
        lp += float(np.sum(self._logc + self.y * eta - self.n * np.logaddexp(0.0, eta)))
        return lp

    # exact conditionals given a path (scenario a, independent k) --------------------
    def _jumps(self, path):
        dx = np.diff(np.asarray(path, dtype=float)[:, 0])
        return dx[dx != 0.0]

    def sample_tau2(self, theta, path, rng):
        a, b = self.cfg.tau2_prior
        d = self._jumps(path)
        return {"tau2": np.array([(b + 0.5 * d @ d) / rng.gamma(a + 0.5 * d.size)])}

    def sample_omega(self, theta, path, rng):
        a, b = self.cfg.omega_prior
        n1 = self._jumps(path).size
        n0 = self.T - 1 - n1
        return {"omega": np.array([rng.beta(a + n1, b + n0)])}

    def success_prob(self, theta, x0):
        return expit(self._eta(theta, x0))

    def manifest(self):
        out = super().manifest()
        out.update(m=self.cfg.m, scenario=self.cfg.scenario, markov_k=self.cfg.markov_k,
                   priors={"tau2": "IG(2,5) shape-scale", "omega": "Beta(8,2)",
                           "x1": "N(0,10) [mean, variance]", "beta": "flat"})
        return out


def simulate_binreg(cfg: BinregConfig, rng):
    """Simulate trials, covariates and counts. Returns ``(Observations, states, theta)``.

    Trial counts are drawn from ``Bin(trials)`` and redrawn while zero, so
    every ``n_t >= 1``.
    """
    theta = cfg.true_theta()
    T, m = cfg.T, cfg.m
    ntr, ptr = cfg.trials
    n = rng.binomial(ntr, ptr, T)
    while np.any(n < 1):
        bad = n < 1
        n[bad] = rng.binomial(ntr, ptr, int(bad.sum()))
    z = rng.standard_normal((T, m)) if m else None
    x = np.empty(T)
    k = np.zeros(T)
    x[0] = cfg.true_x1
    tau = math.sqrt(cfg.true_tau2)
    for t in range(1, T):
        p = cfg.true_omega_jump if (cfg.markov_k and k[t - 1] > 0.5) else cfg.true_omega
        jump = rng.random() < p
        eps = tau * rng.standard_normal()
        if cfg.scenario == "a":
            step = eps if jump else 0.0
        else:
            step = _JUMP_SCALE * eps if jump else eps
        k[t] = float(jump)
        x[t] = x[t - 1] + step
    eta = x + (z @ theta["beta"] if m else 0.0)
    y = rng.binomial(n, expit(eta))
    states = np.column_stack([x, k]) if cfg.markov_k else x.reshape(T, 1)
    return Observations(y=y.astype(float), z=z, n=n.astype(float)), states, theta


def build_binreg(cfg: BinregConfig, data: Observations) -> BinregModel:
    return BinregModel(cfg, data)
