"""Density aware evidential classification with numpy.

Evidential networks predict Dirichlet concentration parameters; at test time
the logits are scaled by a normalized Gaussian feature density so that
inputs far from the training data fall back to a uniform prediction.
"""
from . import checkpoint, data, density, dirichlet, metrics, network, predict, special
from ._backend import NAME as BACKEND
from .errors import ConfigError, DomainError, FormatError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "DomainError", "FormatError", "NumericalError",
    "checkpoint", "data", "density", "dirichlet", "metrics", "network", "predict", "special",
]
