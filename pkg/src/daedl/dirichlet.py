"""Closed-form Dirichlet quantities and the evidential (EDL) training loss.

All functions take a concentration vector ``alpha`` whose last axis indexes
classes. The loss is the expected squared error under ``Dir(alpha)`` plus a
KL penalty pulling the non-target concentrations toward the flat Dirichlet.
"""
import logging

import numpy as np

from . import _backend
from ._backend import kernels
from .errors import DomainError
from .special import digamma, lgamma

logger = logging.getLogger(__name__)

PARAMETERIZATIONS = {
    "exp": _backend.PARAM_EXP,
    "relu_plus_one": _backend.PARAM_RELU,
    "softplus_plus_one": _backend.PARAM_SOFTPLUS,
}


def _alpha(alpha):
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim == 0 or a.shape[-1] < 2:
        raise DomainError("a concentration vector needs at least two classes")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise DomainError("concentration parameters must be finite and strictly positive")
    return a


def _onehot(y, n_classes):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != n_classes:
        raise DomainError(f"label has {y.shape[-1]} entries, expected {n_classes}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)):
        raise DomainError("label must be one-hot")
    return y


def precision(alpha):
    """Sum of the concentration parameters (alpha_0)."""
    return _alpha(alpha).sum(axis=-1)


def expected_probs(alpha):
    a = _alpha(alpha)
    return a / a.sum(axis=-1, keepdims=True)


def belief_uncertainty(evidence):
    """Subjective-logic belief masses and uncertainty mass for ``alpha = 1 + e``."""
    e = np.asarray(evidence, dtype=np.float64)
    if e.ndim == 0 or not np.all(np.isfinite(e)) or np.any(e < 0):
        raise DomainError("evidence must be finite and non-negative")
    n_classes = e.shape[-1]
    total = n_classes + e.sum(axis=-1, keepdims=True)
    return e / total, n_classes / total[..., 0]


def masked_alpha(alpha, y):
    """Replace the true-class concentration with 1."""
    a = _alpha(alpha)
    y = _onehot(y, a.shape[-1])
    return a * (1.0 - y) + y


def expected_mse(alpha, y):
    """``E ||y - pi||^2`` for ``pi ~ Dir(alpha)``, in closed form."""
    a = _alpha(alpha)
    y = _onehot(y, a.shape[-1])
    p = a / a.sum(axis=-1, keepdims=True)
    total = a.sum(axis=-1, keepdims=True)
    return np.sum((y - p) ** 2 + p * (1.0 - p) / (total + 1.0), axis=-1)


def kl_to_uniform(alpha):
    """KL divergence from ``Dir(alpha)`` to the flat ``Dir(1)`` (natural log)."""
    a = _alpha(alpha)
    if np.any(a < _backend.ALPHA_MIN):
        logger.debug("clamping concentration below %g before log-gamma", _backend.ALPHA_MIN)
        a = np.maximum(a, _backend.ALPHA_MIN)
    n_classes = a.shape[-1]
    total = a.sum(axis=-1, keepdims=True)
    kl = (lgamma(total)[..., 0] - np.sum(lgamma(a), axis=-1) - lgamma(float(n_classes))
          + np.sum((a - 1.0) * (digamma(a) - digamma(total)), axis=-1))
    return float(kl) if kl.ndim == 0 else kl


def edl_loss(alpha, y, lam):
    if lam < 0:
        raise DomainError("regularization weight must be non-negative")
    mse = expected_mse(alpha, y)
    if lam == 0:
        return mse
    return mse + lam * kl_to_uniform(masked_alpha(alpha, y))


def categorical_entropy(p):
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise DomainError("entropy needs a probability vector")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def batch_loss_and_grad(logits, labels, lam, scale=1.0, parameterization="exp"):
    """Per-sample loss and d loss / d logits for a batch of logits.

    ``labels`` are integer class indices. This is the training hot path and
    runs on the compiled kernel when available.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DomainError("logits must be a (batch, classes) matrix")
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits must be finite")
    if not 0.0 <= scale <= 1.0:
        raise DomainError("scale must lie in [0, 1]")
    if lam < 0:
        raise DomainError("regularization weight must be non-negative")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],) or labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise DomainError("labels must be class indices matching the logits")
    code = PARAMETERIZATIONS[parameterization]
    if code == _backend.PARAM_EXP:
        t = logits * scale
        if t.min() < np.log(_backend.ALPHA_MIN) or t.max() > np.log(_backend.ALPHA_MAX):
            logger.debug("concentration clamped to [%g, %g]", _backend.ALPHA_MIN, _backend.ALPHA_MAX)
    return kernels.edl_batch(logits, labels, float(lam), float(scale), code)


def loss_grad_wrt_logits(logits, y, lam, s=1.0, parameterization="exp"):
    """Gradient of ``edl_loss(h(z * s), y, lam)`` with respect to the logits ``z``.

    ``y`` is a one-hot vector; ``h`` is the parameterization (``exp`` by default).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise DomainError("logits must be a vector")
    y = _onehot(y, z.shape[0])
    _, grad = batch_loss_and_grad(z[None, :], [int(np.argmax(y))], lam, s, parameterization)
    return grad[0]
