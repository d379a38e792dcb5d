"""Annealed complexity and two-point functionals of the bipartite spherical (p,q)-spin model."""
from .params import DomainError, ModelParams, OverlapPoint
from .mde import SpectralMeasure, spectral_density, support_edge
from .complexity import complexity_report, find_e0, log_potential, sigma, threshold_eth

__version__ = "0.1.0"

__all__ = [
    "DomainError", "ModelParams", "OverlapPoint", "SpectralMeasure", "spectral_density", "support_edge",
    "complexity_report", "find_e0", "log_potential", "sigma", "threshold_eth",
]
