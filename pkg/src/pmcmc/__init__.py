"""Particle MCMC for state-space models.

PMMH blocks (states integrated out by a particle filter) and particle Gibbs
blocks (conditional on a retained path) combined in one sampler, with the
SMC engines, path selection, example models and exact oracles they need.
"""
__version__ = "0.1.0"

from .model import Observations, Parameter, StateSpaceModel, joint_logpdf, log_weight
from .probability import ParticleCollapse, log_sum_exp, normalize_weights, rng_stream
from .resampling import resample_multinomial, resample_stratified
from .samplers import Block, ChainRecord, SamplerConfig, Sampler, run_chain
from .smc import ParticleSystem, log_likelihood, run_csmc, run_smc
from .trajectory import Trajectory, sample_ancestral, sample_backward

__all__ = [
    "Observations", "Parameter", "StateSpaceModel", "joint_logpdf", "log_weight",
    "ParticleCollapse", "log_sum_exp", "normalize_weights", "rng_stream",
    "resample_multinomial", "resample_stratified",
    "Block", "ChainRecord", "SamplerConfig", "Sampler", "run_chain",
    "ParticleSystem", "log_likelihood", "run_csmc", "run_smc",
    "Trajectory", "sample_ancestral", "sample_backward",
]
