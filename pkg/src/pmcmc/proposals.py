"""Adaptive random-walk proposal for parameter blocks.

The proposal is a two-component Gaussian mixture centred at the current
value: with probability ``mix`` it uses ``scale^2`` times the running
covariance of the chain history, otherwise the fixed ``(0.1^2 / d) I``
kernel. Until ``threshold`` history points have been recorded only the
fixed kernel is used. Both components are symmetric, so the proposal
density cancels from the Metropolis-Hastings ratio.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["AdaptiveRW", "rw_scale", "ADAPT_DEFAULTS"]

ADAPT_DEFAULTS = {
    "mix": 0.95,
    "fixed_sd": 0.1,
    "threshold": 100,
    "scale_particle": 2.56,
    "scale_ideal": 2.38,
}


def rw_scale(d: int, regime: str) -> float:
    """Covariance scale factor ``c / sqrt(d)``; ``regime`` is ``"particle"`` or ``"ideal"``."""
    if d < 1:
        raise ValueError("block dimension must be >= 1")
    if regime == "particle":
        c = ADAPT_DEFAULTS["scale_particle"]
    elif regime == "ideal":
        c = ADAPT_DEFAULTS["scale_ideal"]
    else:
        raise ValueError(f"unknown random-walk regime {regime!r}")
    return c / math.sqrt(d)


class AdaptiveRW:
    """State of one adaptive random-walk proposal.

    Parameters
    ----------
    d : int
        Block dimension.
    regime : {"particle", "ideal"}
        Selects the covariance scale ``2.56/sqrt(d)`` or ``2.38/sqrt(d)``.
    mix, fixed_sd, threshold
        Mixture weight of the adapted component, standard deviation
        constant of the fixed kernel (variance ``fixed_sd^2 / d``) and the
        number of history points needed before adapting.
    init_cov : array, optional
        Covariance used for the adapted component before enough history has
        accumulated. When given it replaces the fixed kernel in that phase.
    """

    def __init__(self, d, regime="particle", mix=None, fixed_sd=None, threshold=None, init_cov=None):
        self.d = int(d)
        self.regime = regime
        self.scale = rw_scale(self.d, regime)
        self.mix = ADAPT_DEFAULTS["mix"] if mix is None else float(mix)
        self.fixed_sd = ADAPT_DEFAULTS["fixed_sd"] if fixed_sd is None else float(fixed_sd)
        self.threshold = ADAPT_DEFAULTS["threshold"] if threshold is None else int(threshold)
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")
        self.fixed_var = self.fixed_sd**2 / self.d
        self.init_cov = None if init_cov is None else np.asarray(init_cov, float).reshape(self.d, self.d)
        self.n = 0
        self.mean = np.zeros(self.d)
        self._m2 = np.zeros((self.d, self.d))
        self.frozen = False
        self._chol = None
        self._chol_n = -1
        self.fallbacks = 0

    @property
    def cov(self) -> np.ndarray:
        """Running sample covariance of the history (zeros below two points)."""
        if self.n < 2:
            return np.zeros((self.d, self.d))
        return self._m2 / (self.n - 1)

    def update(self, x) -> None:
        """Add one history point (Welford update); no-op once frozen."""
        if self.frozen:
            return
        x = np.asarray(x, dtype=float).reshape(self.d)
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += np.outer(delta, x - self.mean)

    def freeze(self) -> None:
        self.frozen = True

    @property
    def adapted(self) -> bool:
        return self.n >= self.threshold

    def _adapted_chol(self):
        if self._chol_n == self.n:
            return self._chol
        cov = self.cov
        cov = 0.5 * (cov + cov.T)
        try:
            self._chol = self.scale * np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            self._chol = None
        self._chol_n = self.n
        return self._chol

    def propose(self, current, rng) -> np.ndarray:
        current = np.asarray(current, dtype=float).reshape(self.d)
        z = rng.standard_normal(self.d)
        pick = rng.random()
        if self.adapted:
            if pick < self.mix:
                L = self._adapted_chol()
                if L is not None:
                    return current + L @ z
                # not positive definite: fall back to the fixed kernel
                self.fallbacks += 1
        elif self.init_cov is not None and pick < self.mix:
            return current + self.scale * (np.linalg.cholesky(self.init_cov) @ z)
        return current + math.sqrt(self.fixed_var) * z

    def settings(self) -> dict:
        return {
            "d": self.d, "regime": self.regime, "scale": self.scale, "mix": self.mix,
            "fixed_var": self.fixed_var, "threshold": self.threshold,
        }
