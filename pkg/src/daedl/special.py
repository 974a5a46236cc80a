"""Digamma, trigamma and log-gamma for positive real arguments.

Recurrence shifts the argument above 6, where the asymptotic (Stirling /
Bernoulli) series is accurate to about 1e-12. Accuracy on [1e-3, 1e4] is
better than 1e-10 absolute.
"""
import numpy as np

from ._backend import kernels
from .errors import DomainError


def _check(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("special functions are defined here for finite x > 0 only")
    return arr


def _unwrap(x, out):
    return float(out) if np.ndim(x) == 0 else out


def digamma(x):
    """Logarithmic derivative of the gamma function."""
    return _unwrap(x, kernels.digamma(_check(x)))


def trigamma(x):
    """Derivative of :func:`digamma`."""
    return _unwrap(x, kernels.trigamma(_check(x)))


def lgamma(x):
    """Natural log of the gamma function."""
    return _unwrap(x, kernels.lgamma(_check(x)))
