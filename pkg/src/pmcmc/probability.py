"""Random streams, log-domain weight arithmetic and the standard distributions.

All randomness in the package flows through :class:`numpy.random.Generator`
objects built on the counter-based Philox bit generator, keyed by a
``(seed, stream_id)`` pair so that chains, arms and replicates get disjoint,
reproducible substreams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

__all__ = [
    "ParticleCollapse",
    "ParameterDomainError",
    "rng_stream",
    "log_sum_exp",
    "normalize_weights",
    "Normal",
    "Uniform",
    "InverseGamma",
    "Beta",
    "Binomial",
    "Bernoulli",
    "Flat",
    "draw",
    "log_pdf",
]

_LOG_2PI = math.log(2.0 * math.pi)


class ParticleCollapse(ArithmeticError):
    """All importance weights are zero (likelihood-zero region)."""


class ParameterDomainError(ValueError):
    """Distribution parameters outside their valid domain."""


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Return the generator for substream ``stream_id`` of ``seed``.

    Identical ``(seed, stream_id)`` pairs give bit-identical draw sequences;
    distinct stream ids are statistically independent Philox keys.
    """
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def log_sum_exp(values) -> float:
    """Stable ``log(sum(exp(values)))`` via max subtraction."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty weight vector")
    m = v.max()
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    return float(m + np.log(np.exp(v - m).sum()))


def normalize_weights(log_weights):
    """Normalise log weights.

    Returns
    -------
    probs : ndarray
        Normalised weights, summing to one.
    log_mean : float
        ``log(N^-1 sum_i w_i)``, the per-step likelihood increment.

    Raises
    ------
    ParticleCollapse
        If every weight is zero.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("empty weight vector")
    m = lw.max()
    if m == -np.inf:
        raise ParticleCollapse("particle-system collapse")
    if np.isnan(m):
        raise ValueError("NaN log weight")
    p = np.exp(lw - m)
    s = p.sum()
    p /= s
    return p, float(m + math.log(s) - math.log(lw.size))


# -- distributions -----------------------------------------------------------
#
# Normal takes a *variance*, matching the N(a, b) convention used for the
# example-model priors. InverseGamma is shape/scale: density proportional to
# x^(-a-1) exp(-b/x).


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not self.var > 0:
            raise ParameterDomainError(f"Normal variance must be > 0, got {self.var}")

    def sample(self, rng, size=None):
        return rng.normal(self.mean, math.sqrt(self.var), size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.var) + (x - self.mean) ** 2 / self.var)


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise ParameterDomainError("Uniform requires high > low")

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.low) & (x < self.high)
        return np.where(inside, -math.log(self.high - self.low), -np.inf)


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ParameterDomainError("InverseGamma requires shape > 0 and scale > 0")

    def sample(self, rng, size=None):
        return self.scale / rng.gamma(self.shape, 1.0, size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            val = a * math.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x
        return np.where(x > 0, val, -np.inf)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ParameterDomainError("Beta requires a > 0 and b > 0")

    def sample(self, rng, size=None):
        return rng.beta(self.a, self.b, size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (self.a - 1.0) * np.log(x) + (self.b - 1.0) * np.log1p(-x) - betaln(self.a, self.b)
        return np.where((x > 0) & (x < 1), val, -np.inf)


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 0 or not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError("Binomial requires n >= 0 and p in [0, 1]")

    def sample(self, rng, size=None):
        return rng.binomial(self.n, self.p, size)

    def logpdf(self, k):
        return binomial_logpmf(k, self.n, self.p)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError("Bernoulli requires p in [0, 1]")

    def sample(self, rng, size=None):
        return (rng.random(size) < self.p).astype(int)

    def logpdf(self, k):
        return binomial_logpmf(k, 1, self.p)


@dataclass(frozen=True)
class Flat:
    """Improper uniform prior on the real line (log density 0)."""

    def sample(self, rng, size=None):
        raise TypeError("cannot sample from an improper flat prior")

    def logpdf(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


def binomial_logpmf(k, n, p):
    """Binomial log pmf, vectorised over ``k``, ``n`` and ``p``."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    logc = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = logc + np.where(k > 0, k * np.log(p), 0.0) + np.where(n - k > 0, (n - k) * np.log1p(-p), 0.0)
    ok = (k >= 0) & (k <= n) & (k == np.floor(k))
    return np.where(ok, val, -np.inf)


def draw(dist, rng, size=None):
    return dist.sample(rng, size)


def log_pdf(dist, x):
    return dist.logpdf(x)
