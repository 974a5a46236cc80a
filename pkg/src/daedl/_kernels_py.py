"""Numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function. Used when the compiled
extension is unavailable or ``DAEDL_BACKEND=python`` is set.
"""
import math

import numpy as np

# shift arguments up to this value before using the asymptotic series
_ASYMPTOTIC_MIN = 6.0
_HALF_LOG_2PI = 0.91893853320467274178

PARAM_EXP = 0
PARAM_RELU = 1
PARAM_SOFTPLUS = 2

ALPHA_MIN = 1e-30
ALPHA_MAX = 1e300
_LOG_ALPHA_MIN = np.log(ALPHA_MIN)
_LOG_ALPHA_MAX = np.log(ALPHA_MAX)

# lgamma(n) = log((n - 1)!) for small integers; keeps lgamma(1) = lgamma(2) = 0 exact
EXACT_INT_MAX = 30
LOG_FACTORIAL = np.array([0.0] + [math.log(math.factorial(n - 1)) for n in range(1, EXACT_INT_MAX + 1)])


def _shift(x):
    x = np.array(x, dtype=np.float64, copy=True)
    return x, x < _ASYMPTOTIC_MIN


# x * x overflows to inf near ALPHA_MAX; the series terms then vanish correctly
@np.errstate(over="ignore")
def digamma(x):
    x, small = _shift(x)
    acc = np.zeros_like(x)
    while small.any():
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < _ASYMPTOTIC_MIN
    r = 1.0 / (x * x)
    series = r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (
        1.0 / 240 - r * (1.0 / 132 - r * (691.0 / 32760 - r * (
        1.0 / 12 - r * (3617.0 / 8160 - r * 43867.0 / 14364))))))))
    return acc + np.log(x) - 0.5 / x - series


@np.errstate(over="ignore")
def trigamma(x):
    x, small = _shift(x)
    acc = np.zeros_like(x)
    while small.any():
        acc[small] += 1.0 / (x[small] * x[small])
        x[small] += 1.0
        small = x < _ASYMPTOTIC_MIN
    inv = 1.0 / x
    r = inv * inv
    series = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6 - r * (1.0 / 30 - r * (
        1.0 / 42 - r * (1.0 / 30 - r * (5.0 / 66 - r * (691.0 / 2730 - r * (
        7.0 / 6 - r * (3617.0 / 510 - r * 43867.0 / 798))))))))))
    return acc + series


@np.errstate(over="ignore")
def lgamma(x):
    x, small = _shift(x)
    exact = (x >= 1) & (x <= EXACT_INT_MAX) & (x == np.floor(x))
    table = LOG_FACTORIAL[np.where(exact, x, 0).astype(np.int64)]
    prod = np.ones_like(x)
    while small.any():
        prod[small] *= x[small]
        x[small] += 1.0
        small = x < _ASYMPTOTIC_MIN
    inv = 1.0 / x
    r = inv * inv
    series = inv * (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r * (
        1.0 / 1680 - r * (1.0 / 1188 - r * (691.0 / 360360 - r * (
        1.0 / 156 - r * (3617.0 / 122400 - r * 43867.0 / 244188))))))))
    out = (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + series - np.log(prod)
    return np.where(exact, table, out)


def concentration(logits, scale, param):
    """Return (alpha, d alpha / d logits) for the given parameterization."""
    t = np.asarray(logits, dtype=np.float64) * scale
    if param == PARAM_EXP:
        clipped = np.clip(t, _LOG_ALPHA_MIN, _LOG_ALPHA_MAX)
        alpha = np.exp(clipped)
        dalpha = np.where(clipped == t, alpha * scale, 0.0)
    elif param == PARAM_RELU:
        alpha = 1.0 + np.maximum(t, 0.0)
        dalpha = np.where(t > 0.0, scale, 0.0)
    elif param == PARAM_SOFTPLUS:
        alpha = 1.0 + np.logaddexp(0.0, t)
        dalpha = scale / (1.0 + np.exp(-t))
    else:
        raise ValueError(f"unknown parameterization code {param}")
    return alpha, dalpha


@np.errstate(over="ignore")
def edl_batch(logits, labels, lam, scale, param):
    """Per-sample EDL loss and its gradient with respect to the logits.

    ``logits`` is (B, C), ``labels`` integer class indices of length B.
    Returns ``(loss, grad)`` with shapes (B,) and (B, C).
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    rows = np.arange(n)
    alpha, dalpha = concentration(logits, scale, param)

    total = alpha.sum(axis=1, keepdims=True)
    p = alpha / total
    q = np.sum(p * p, axis=1, keepdims=True)
    p_true = p[rows, labels][:, None]
    onehot = np.zeros_like(p)
    onehot[rows, labels] = 1.0

    denom = total + 1.0
    loss = (1.0 - 2.0 * p_true + q * total / denom + 1.0 / denom)[:, 0]
    dloss = (-2.0 * (onehot - p_true) / total
             + 2.0 * (p - q) / denom
             + (q - 1.0) / (denom * denom))

    if lam != 0.0:
        masked = alpha.copy()
        masked[rows, labels] = 1.0
        mtotal = masked.sum(axis=1, keepdims=True)
        kl = (lgamma(mtotal)[:, 0] - lgamma(masked).sum(axis=1) - lgamma(float(c))
              + np.sum((masked - 1.0) * (digamma(masked) - digamma(mtotal)), axis=1))
        dkl = (masked - 1.0) * trigamma(masked) - (mtotal - c) * trigamma(mtotal)
        dkl[rows, labels] = 0.0
        loss = loss + lam * kl
        dloss = dloss + lam * dkl

    return loss, dloss * dalpha
