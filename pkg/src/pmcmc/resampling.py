"""Unbiased resampling schemes.

Both schemes satisfy ``E[O_k] = N * w_k`` for the offspring count ``O_k`` of
particle ``k``. Multinomial draws are i.i.d. so ``P(A_i = k) = w_k`` holds
index by index as well, which is what conditional SMC relies on.
"""
import numpy as np

__all__ = ["resample_multinomial", "resample_stratified", "inverse_cdf", "RESAMPLERS"]


def inverse_cdf(weights, u):
    """Map uniforms ``u`` in [0, 1) to indices through the cumulative weights.

    Index ``k`` is returned when ``cdf[k-1] <= u < cdf[k]``, so zero-weight
    entries are never selected.
    """
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
    return np.minimum(idx, len(cdf) - 1)


def resample_multinomial(weights, N, rng):
    """Draw ``N`` ancestor indices i.i.d. from ``weights``."""
    return inverse_cdf(weights, rng.random(N))


def resample_stratified(weights, N, rng):
    """Stratified resampling: one uniform in each of the ``N`` strata."""
    u = (np.arange(N) + rng.random(N)) / N
    return inverse_cdf(weights, u)


RESAMPLERS = {
    "multinomial": resample_multinomial,
    "stratified": resample_stratified,
}
