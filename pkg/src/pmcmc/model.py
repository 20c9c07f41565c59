"""State-space model contract, parameters and observation data.

A model binds its observations at construction and exposes the initial,
transition and observation densities as methods vectorised over a leading
particle axis. States are stored as ``(N, state_dim)`` arrays; time indices
are zero-based, so ``transition_logpdf(theta, x_prev, x, t)`` is the density
of the state at step ``t`` given the one at ``t - 1`` (``t >= 1``).

Parameters travel as ``dict[str, ndarray]`` with one-dimensional float
arrays, one entry per named parameter.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit, logit

__all__ = [
    "Parameter",
    "Observations",
    "StateSpaceModel",
    "joint_logpdf",
    "log_weight",
    "TRANSFORMS",
]


# -- parameter transforms -----------------------------------------------------


class _Identity:
    name = "identity"

    @staticmethod
    def forward(x):
        return np.asarray(x, dtype=float)

    @staticmethod
    def inverse(u):
        return np.asarray(u, dtype=float)

    @staticmethod
    def log_jacobian(u):
        return 0.0


class _Log:
    name = "log"

    @staticmethod
    def forward(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)

    @staticmethod
    def inverse(u):
        return np.exp(u)

    @staticmethod
    def log_jacobian(u):
        return float(np.sum(u))


class _Logit:
    name = "logit"

    @staticmethod
    def forward(x):
        return logit(x)

    @staticmethod
    def inverse(u):
        return expit(u)

    @staticmethod
    def log_jacobian(u):
        return float(np.sum(log_expit(u) + log_expit(-np.asarray(u))))


TRANSFORMS = {"identity": _Identity, "log": _Log, "logit": _Logit}


@dataclass
class Parameter:
    """A named parameter (possibly vector valued) with prior and transform.

    ``prior`` is any object with an elementwise ``logpdf``; the block log
    prior is the sum over elements.
    """

    name: str
    size: int
    prior: object
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r} for {self.name}")

    def log_prior(self, value) -> float:
        if self.size == 1 and hasattr(self.prior, "logpdf_scalar"):
            return self.prior.logpdf_scalar(np.ravel(value)[0])
        return float(np.sum(self.prior.logpdf(np.asarray(value, dtype=float))))


# -- observations --------------------------------------------------------------


@dataclass
class Observations:
    """Observed series ``y`` with optional covariates, trial counts and knots."""

    y: np.ndarray
    z: np.ndarray | None = None
    n: np.ndarray | None = None
    s: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        T = self.y.shape[0]
        if T < 1:
            raise ValueError("observations need T >= 1")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float).reshape(T, -1)
        if self.n is not None:
            self.n = np.asarray(self.n, dtype=float).reshape(T)
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=float).reshape(T)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return 0 if self.z is None else self.z.shape[1]

    def columns(self) -> list[str]:
        cols = ["y"]
        if self.n is not None:
            cols.append("n")
        if self.s is not None:
            cols.append("s")
        cols += [f"z{j + 1}" for j in range(self.m)]
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(cols)
            for t in range(self.T):
                row = [self.y[t]]
                if self.n is not None:
                    row.append(int(self.n[t]))
                if self.s is not None:
                    row.append(self.s[t])
                if self.z is not None:
                    row += list(self.z[t])
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])

    @classmethod
    def from_csv(cls, path) -> "Observations":
        """Load one-row-per-time-step CSV with header ``y[,n][,s][,z1..zm]``."""
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty CSV")
        header = [h.strip() for h in rows[0]]
        if "y" not in header:
            raise ValueError(f"{path}: missing required column 'y'")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        if data.shape[0] == 0:
            raise ValueError(f"{path}: no data rows")
        col = {h: data[:, k] for k, h in enumerate(header)}
        zcols = sorted((h for h in header if h.startswith("z") and h[1:].isdigit()), key=lambda h: int(h[1:]))
        unknown = set(header) - {"y", "n", "s", *zcols}
        if unknown:
            raise ValueError(f"{path}: unknown columns {sorted(unknown)}")
        z = np.column_stack([col[h] for h in zcols]) if zcols else None
        return cls(y=col["y"], z=z, n=col.get("n"), s=col.get("s"))


# -- model base class ------------------------------------------------------------


class StateSpaceModel:
    """Base class for state-space models.

    Subclasses implement ``initial_sample``, ``initial_logpdf``,
    ``transition_sample``, ``transition_logpdf`` and ``observation_logpdf``,
    and fill ``parameters``. Log densities must return ``-inf`` (never NaN)
    outside their support.

    Two optional capability hooks are consumed by the samplers:

    * ``exact_conditionals``: maps a tuple of parameter names to a callable
      ``(theta, path, rng) -> dict`` drawing those parameters from their full
      conditional given a state path.
    * ``exact_loglik(theta)`` / ``exact_path(theta, rng)`` for models with
      exact inference (linear-Gaussian, finite HMM).
    """

    state_dim: int = 1
    #: False when f can be sampled but not evaluated pointwise
    transition_evaluable: bool = True
    name: str = "model"
    #: optional compiled per-particle kernels (see pmcmc.fastpath)
    kernel = None

    def __init__(self, data: Observations):
        self.data = data
        self.T = data.T
        self.parameters: dict[str, Parameter] = {}
        self.exact_conditionals: dict[tuple, object] = {}
        self._proposal = None

    # densities ----------------------------------------------------------------
    def initial_sample(self, theta, N, rng):
        raise NotImplementedError

    def initial_logpdf(self, theta, x):
        raise NotImplementedError

    def transition_sample(self, theta, x_prev, t, rng):
        raise NotImplementedError

    def transition_logpdf(self, theta, x_prev, x, t):
        raise NotImplementedError

    def observation_logpdf(self, theta, x, t):
        raise NotImplementedError

    # importance proposal ------------------------------------------------------------
    @property
    def bootstrap(self) -> bool:
        return self._proposal is None

    def with_proposal(self, proposal) -> "StateSpaceModel":
        """Copy of the model using ``proposal`` as importance density.

        ``proposal.sample(theta, x_prev, t, N, rng)`` and
        ``proposal.logpdf(theta, x_prev, x, t)`` receive ``x_prev=None`` at
        ``t = 0``.
        """
        other = copy.copy(self)
        other._proposal = proposal
        return other

    def proposal_sample(self, theta, x_prev, t, N, rng):
        if self._proposal is not None:
            return self._proposal.sample(theta, x_prev, t, N, rng)
        if t == 0:
            return self.initial_sample(theta, N, rng)
        return self.transition_sample(theta, x_prev, t, rng)

    def proposal_logpdf(self, theta, x_prev, x, t):
        if self._proposal is not None:
            return self._proposal.logpdf(theta, x_prev, x, t)
        if t == 0:
            return self.initial_logpdf(theta, x)
        return self.transition_logpdf(theta, x_prev, x, t)

    def kernel_args(self, theta):
        """``(par, data)`` arrays for the compiled kernels, or None."""
        return None

    # parameters -------------------------------------------------------------------
    def param_names(self) -> list[str]:
        return list(self.parameters)

    def log_prior(self, theta) -> float:
        total = 0.0
        for name, par in self.parameters.items():
            total += par.log_prior(theta[name])
            if total == -np.inf:
                return -np.inf
        return total

    def check_theta(self, theta) -> dict:
        out = {}
        for name, par in self.parameters.items():
            if name not in theta:
                raise KeyError(f"missing parameter {name!r}")
            v = np.atleast_1d(np.asarray(theta[name], dtype=float)).copy()
            if v.shape != (par.size,):
                raise ValueError(f"parameter {name!r} has shape {v.shape}, expected ({par.size},)")
            out[name] = v
        return out

    # paths --------------------------------------------------------------------
    def path_logpdf(self, theta, path) -> float:
        """``log p(x_{1:T}, y_{1:T} | theta)`` by direct accumulation over t.

        Subclasses may override with a vectorised version.
        """
        path = np.asarray(path, dtype=float).reshape(self.T, self.state_dim)
        total = float(self.initial_logpdf(theta, path[0:1])[0] + self.observation_logpdf(theta, path[0:1], 0)[0])
        for t in range(1, self.T):
            if total == -np.inf:
                return -np.inf
            total += float(self.transition_logpdf(theta, path[t - 1 : t], path[t : t + 1], t)[0])
            total += float(self.observation_logpdf(theta, path[t : t + 1], t)[0])
        return total

    def exact_loglik(self, theta) -> float:
        raise NotImplementedError(f"{self.name} has no exact likelihood")

    def exact_path(self, theta, rng):
        raise NotImplementedError(f"{self.name} has no exact state sampler")

    @property
    def has_exact_inference(self) -> bool:
        return type(self).exact_loglik is not StateSpaceModel.exact_loglik

    def derived(self, draws: dict) -> dict:
        """Extra reported quantities computed from parameter draws."""
        return {}

    def manifest(self) -> dict:
        return {"name": self.name, "T": self.T, "state_dim": self.state_dim}


def joint_logpdf(model: StateSpaceModel, theta, path) -> float:
    return float(model.path_logpdf(theta, path))


def log_weight(model: StateSpaceModel, theta, t, x_prev, x):
    """Importance log weights at step ``t`` for particles ``x`` (N, d).

    For the bootstrap configuration the transition and proposal cancel and
    the weight is the observation density alone.
    """
    lg = model.observation_logpdf(theta, x, t)
    if model.bootstrap:
        return lg
    if t == 0:
        lf = model.initial_logpdf(theta, x)
    else:
        lf = model.transition_logpdf(theta, x_prev, x, t)
    lm = model.proposal_logpdf(theta, x_prev, x, t)
    with np.errstate(invalid="ignore"):
        lw = lf + lg - lm
    return np.where(np.isnan(lw), -np.inf, lw)


def logsumexp_rows(a):
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(a - m), axis=-1, keepdims=True)))[..., 0]


_LOG_2PI = math.log(2.0 * math.pi)


def normal_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)
