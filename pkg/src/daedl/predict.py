"""Concentration parameters at training and prediction time, and uncertainty scores.

At prediction time the logits are multiplied by the normalized feature
density ``s`` in [0, 1] before the activation, so ``exp`` parameterized
models reduce to a softmax with per-sample temperature ``1 / s``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import _backend, density
from .dirichlet import PARAMETERIZATIONS, categorical_entropy
from .errors import DomainError

logger = logging.getLogger(__name__)


def _logits(z):
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("logits must be finite")
    return z


def _check_scale(s):
    s = np.asarray(s, dtype=np.float64)
    if np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError("density scale s must lie in [0, 1]")
    return s


def concentration(logits, parameterization="exp", s=1.0):
    """``h(logits * s)`` for the named parameterization; ``s`` broadcasts per row."""
    z = _logits(logits)
    s = _check_scale(s)
    if s.ndim == 1 and z.ndim == 2:
        s = s[:, None]
    t = z * s
    if parameterization == "exp":
        if np.any(t < np.log(_backend.ALPHA_MIN)) or np.any(t > np.log(_backend.ALPHA_MAX)):
            logger.debug("concentration clamped to [%g, %g]", _backend.ALPHA_MIN, _backend.ALPHA_MAX)
        return np.exp(np.clip(t, np.log(_backend.ALPHA_MIN), np.log(_backend.ALPHA_MAX)))
    if parameterization == "relu_plus_one":
        return 1.0 + np.maximum(t, 0.0)
    if parameterization == "softplus_plus_one":
        return 1.0 + np.logaddexp(0.0, t)
    raise DomainError(f"unknown parameterization {parameterization!r}; expected one of {list(PARAMETERIZATIONS)}")


def alpha_train(logits):
    return concentration(logits, "exp", 1.0)


def alpha_predict(logits, s):
    return concentration(logits, "exp", s)


def alpha_edl_conventional(logits, activation="relu"):
    """Conventional ``1 + h(z)`` concentration with ``h`` relu or softplus."""
    names = {"relu": "relu_plus_one", "softplus": "softplus_plus_one"}
    if activation not in names:
        raise DomainError("activation must be 'relu' or 'softplus'")
    return concentration(logits, names[activation], 1.0)


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def pseudo_counts(alpha, prior="zeros"):
    """Observation counts implied by ``alpha`` under a Dir(0) or Dir(1) prior."""
    a = np.asarray(alpha, dtype=np.float64)
    if prior == "zeros":
        return a.copy()
    if prior == "ones":
        if np.any(a < 1.0):
            raise DomainError("a Dir(1) prior implies negative pseudo-counts for alpha < 1")
        return a - 1.0
    raise DomainError("prior must be 'zeros' or 'ones'")


@dataclass(frozen=True)
class PredictionOutput:
    alpha: np.ndarray
    probs: np.ndarray
    aleatoric_conf: np.ndarray
    epistemic_conf: np.ndarray
    entropy: np.ndarray
    s: np.ndarray
    predicted_class: np.ndarray

    @property
    def variance(self):
        """Total Dirichlet variance ``sum_c p_c (1 - p_c) / (alpha_0 + 1)``."""
        p = self.probs
        return np.sum(p * (1.0 - p), axis=-1) / (self.epistemic_conf + 1.0)


def scores(alpha, s=1.0):
    """Build a :class:`PredictionOutput` from concentration parameters."""
    alpha = np.asarray(alpha, dtype=np.float64)
    alpha0 = alpha.sum(axis=-1)
    probs = alpha / alpha0[..., None]
    return PredictionOutput(
        alpha=alpha,
        probs=probs,
        aleatoric_conf=probs.max(axis=-1),
        epistemic_conf=alpha0,
        entropy=categorical_entropy(probs),
        s=np.broadcast_to(np.asarray(s, dtype=np.float64), alpha0.shape).copy(),
        # argmax returns the lowest index on ties
        predicted_class=np.argmax(probs, axis=-1),
    )


def density_scale(net, gda, x):
    z, _ = net.forward(x)
    return density.normalize(gda, density.log_density(gda, z))


def predict(net, gda, x):
    """Density-aware prediction for one input or a batch.

    With ``gda=None`` the density term is switched off (``s = 1``).
    """
    x = np.asarray(x, dtype=np.float64)
    z, logits = net.forward(x)
    if gda is None:
        s = np.ones(logits.shape[:-1])
    else:
        if gda.dim != z.shape[-1]:
            raise DomainError(f"GDA dimension {gda.dim} does not match feature dimension {z.shape[-1]}")
        s = np.asarray(density.normalize(gda, density.log_density(gda, z)))
    alpha = concentration(logits, net.parameterization, s)
    out = scores(alpha, s)
    if x.ndim == 1:
        return PredictionOutput(out.alpha, out.probs, float(out.aleatoric_conf),
                                float(out.epistemic_conf), float(out.entropy),
                                float(out.s), int(out.predicted_class))
    return out
