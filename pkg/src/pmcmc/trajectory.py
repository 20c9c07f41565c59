"""Selecting one state path from a particle system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fastpath
from .probability import ParticleCollapse
from .resampling import inverse_cdf
from .smc import ParticleSystem

__all__ = ["Trajectory", "BackwardCollapse", "sample_ancestral", "sample_backward", "trace_lineage"]


class BackwardCollapse(ArithmeticError):
    """Every backward weight is zero at some step."""


@dataclass
class Trajectory:
    """A selected path ``states`` (T, d) and the slot index used at each step.

    ``mode`` is ``"ancestral"``, ``"backward"`` or ``"exact"`` (drawn by an
    exact smoother; ``slots`` is then ``None``).
    """

    states: np.ndarray
    slots: np.ndarray | None
    mode: str

    @property
    def T(self) -> int:
        return self.states.shape[0]


def trace_lineage(ps: ParticleSystem, j: int) -> np.ndarray:
    slots = np.empty(ps.T, dtype=np.int64)
    slots[-1] = j
    A = ps.ancestors
    for t in range(ps.T - 1, 0, -1):
        slots[t - 1] = A[t - 1, slots[t]]
    return slots


def _gather(ps, slots):
    return ps.particles[np.arange(ps.T), slots].copy()


def sample_ancestral(ps: ParticleSystem, rng) -> Trajectory:
    """Draw ``J`` from the final normalised weights and follow its ancestry."""
    if ps.collapsed:
        raise ParticleCollapse("cannot select a path from a collapsed particle system")
    j = int(inverse_cdf(ps.norm_weights[-1], rng.random()))
    slots = trace_lineage(ps, j)
    return Trajectory(_gather(ps, slots), slots, "ancestral")


def sample_backward(ps: ParticleSystem, model, theta, rng) -> Trajectory:
    """Backward simulation: ``J_t`` proportional to ``w_t f(x_{t+1} | x_t)``."""
    if ps.collapsed:
        raise ParticleCollapse("cannot select a path from a collapsed particle system")
    if not model.transition_evaluable:
        raise TypeError(f"{model.name}: transition density not evaluable; use ancestral tracing")
    T = ps.T
    kernel = getattr(model, "kernel", None)
    compiled = kernel is not None and kernel.logf is not None
    args = model.kernel_args(theta) if compiled else None
    if args is not None:
        slots, bad = fastpath.backward_slots(kernel, *args, ps, rng)
        if bad >= 0:
            raise BackwardCollapse(f"backward kernel collapse at step {bad}")
        return Trajectory(_gather(ps, slots), slots, "backward")
    slots = np.empty(T, dtype=np.int64)
    u = rng.random(T)
    slots[-1] = inverse_cdf(ps.norm_weights[-1], u[-1])
    X, LW = ps.particles, ps.log_weights
    for t in range(T - 2, -1, -1):
        nxt = X[t + 1, slots[t + 1]][None, :]
        lw = LW[t] + model.transition_logpdf(theta, X[t], nxt, t + 1)
        m = lw.max()
        if not m > -np.inf:
            raise BackwardCollapse(f"backward kernel collapse at step {t}")
        slots[t] = inverse_cdf(np.exp(lw - m), u[t])
    return Trajectory(_gather(ps, slots), slots, "backward")
