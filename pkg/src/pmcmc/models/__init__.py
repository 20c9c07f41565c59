"""Concrete state-space models."""
from .binreg import BinregConfig, BinregModel, build_binreg, simulate_binreg
from .hmm import DiscreteHMMModel, GridPrior, two_state_hmm
from .linear_gaussian import LinearGaussianModel
from .spline import SplineConfig, SplineModel, build_spline, simulate_spline, spline_F, spline_U
from .sv import SVConfig, SVModel, build_sv, simulate_sv

__all__ = [
    "BinregConfig", "BinregModel", "build_binreg", "simulate_binreg",
    "DiscreteHMMModel", "GridPrior", "two_state_hmm",
    "LinearGaussianModel",
    "SplineConfig", "SplineModel", "build_spline", "simulate_spline", "spline_F", "spline_U",
    "SVConfig", "SVModel", "build_sv", "simulate_sv",
]
