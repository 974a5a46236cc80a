"""Gaussian discriminant analysis on feature vectors.

Fits one full-covariance Gaussian per class, weights them by class
frequency, and maps the mixture log-density onto [0, 1] using the range seen
on the training features.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

JITTER = 1e-6
JITTER_ESCALATIONS = 5
DIAGONAL_AUTO_DIM = 256
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GdaModel:
    weights: np.ndarray      # (C,)
    means: np.ndarray        # (C, H)
    cov_factors: np.ndarray  # (C, H, H) lower Cholesky factors
    log_dets: np.ndarray     # (C,)
    d_min: float
    d_max: float
    diagonal: bool = False

    @property
    def n_classes(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]


def _regularized_cholesky(cov, label, diagonal):
    h = cov.shape[0]
    scale = np.trace(cov) / h
    eps = JITTER
    for attempt in range(JITTER_ESCALATIONS + 1):
        reg = cov + eps * scale * np.eye(h)
        if diagonal:
            d = np.diag(reg)
            if np.all(d > 0):
                return np.diag(np.sqrt(d))
        else:
            try:
                return np.linalg.cholesky(reg)
            except np.linalg.LinAlgError:
                pass
        if attempt < JITTER_ESCALATIONS:
            logger.info("class %s: covariance not positive definite, jitter %g -> %g", label, eps, eps * 10)
        eps *= 10
    raise NumericalError(f"class {label}: covariance not positive definite after jitter escalation")


def _class_log_pdfs(means, factors, log_dets, z):
    """(N, C) matrix of per-class Gaussian log densities."""
    n, h = z.shape
    out = np.empty((n, len(means)))
    for c, (mu, L) in enumerate(zip(means, factors)):
        sol = solve_triangular(L, (z - mu).T, lower=True, check_finite=False)
        out[:, c] = -0.5 * (h * _LOG_2PI + log_dets[c] + np.sum(sol * sol, axis=0))
    return out


def fit(features, labels, n_classes=None, diagonal=None):
    """Fit per-class weights, means and covariances (``N_c - 1`` normalization).

    ``d_min``/``d_max`` are the extreme mixture log-densities over ``features``.
    """
    Z = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2 or y.shape != (len(Z),):
        raise DomainError("features must be (N, H) with one label per row")
    if not np.all(np.isfinite(Z)):
        raise DomainError("features must be finite")
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    if diagonal is None:
        diagonal = Z.shape[1] > DIAGONAL_AUTO_DIM
    counts = np.bincount(y, minlength=n_classes)
    for c, nc in enumerate(counts):
        if nc < 2:
            raise DomainError(f"class {c} has {nc} samples; at least 2 are needed")

    h = Z.shape[1]
    means = np.empty((n_classes, h))
    factors = np.empty((n_classes, h, h))
    for c in range(n_classes):
        Zc = Z[y == c]
        means[c] = Zc.mean(axis=0)
        centered = Zc - means[c]
        cov = centered.T @ centered / (len(Zc) - 1)
        if diagonal:
            cov = np.diag(np.diag(cov))
        factors[c] = _regularized_cholesky(cov, c, diagonal)
    log_dets = 2.0 * np.log(np.diagonal(factors, axis1=1, axis2=2)).sum(axis=1)
    weights = counts / counts.sum()

    train_logp = logsumexp(np.log(weights) + _class_log_pdfs(means, factors, log_dets, Z), axis=1)
    return GdaModel(weights, means, factors, log_dets,
                    float(train_logp.min()), float(train_logp.max()), bool(diagonal))


def log_density(model, z):
    """Mixture log-density for one feature vector (float) or a batch (array)."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.shape[1] != model.dim:
        raise DomainError(f"feature dimension {Z.shape[1]} does not match the model ({model.dim})")
    if not np.all(np.isfinite(Z)):
        raise DomainError("features must be finite")
    logp = logsumexp(np.log(model.weights)
                     + _class_log_pdfs(model.means, model.cov_factors, model.log_dets, Z), axis=1)
    return float(logp[0]) if single else logp


def normalize(model, log_p):
    """Clip((log_p - d_min) / (d_max - d_min)) into [0, 1]."""
    log_p = np.asarray(log_p, dtype=np.float64)
    span = model.d_max - model.d_min
    if span <= 0.0:
        logger.warning("degenerate training log-density range (d_min == d_max)")
        s = np.where(log_p >= model.d_max, 1.0, 0.0)
    else:
        s = np.clip((log_p - model.d_min) / span, 0.0, 1.0)
    return float(s) if s.ndim == 0 else s


def covariance(model, c):
    """Regularized covariance of class ``c`` reconstructed from its factor."""
    L = model.cov_factors[c]
    return L @ L.T
