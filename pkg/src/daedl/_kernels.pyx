# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: special functions and the fused EDL loss/gradient.

Semantics match ``_kernels_py`` exactly; see that module for the contract.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, log1p, floor

from ._kernels_py import EXACT_INT_MAX, LOG_FACTORIAL

cnp.import_array()

cdef double ASYMPTOTIC_MIN = 6.0
cdef double HALF_LOG_2PI = 0.91893853320467274178
cdef double ALPHA_MIN = 1e-30
cdef double ALPHA_MAX = 1e300
cdef double LOG_ALPHA_MIN = log(1e-30)
cdef double LOG_ALPHA_MAX = log(1e300)

PARAM_EXP = 0
PARAM_RELU = 1
PARAM_SOFTPLUS = 2

cdef double[::1] LOG_FACT = LOG_FACTORIAL.copy()
cdef double EXACT_MAX = EXACT_INT_MAX


cdef inline double c_digamma(double x) nogil:
    cdef double acc = 0.0, r, series
    while x < ASYMPTOTIC_MIN:
        acc -= 1.0 / x
        x += 1.0
    r = 1.0 / (x * x)
    series = r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (
        1.0 / 240 - r * (1.0 / 132 - r * (691.0 / 32760 - r * (
        1.0 / 12 - r * (3617.0 / 8160 - r * 43867.0 / 14364))))))))
    return acc + log(x) - 0.5 / x - series


cdef inline double c_trigamma(double x) nogil:
    cdef double acc = 0.0, inv, r, series
    while x < ASYMPTOTIC_MIN:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    r = inv * inv
    series = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6 - r * (1.0 / 30 - r * (
        1.0 / 42 - r * (1.0 / 30 - r * (5.0 / 66 - r * (691.0 / 2730 - r * (
        7.0 / 6 - r * (3617.0 / 510 - r * 43867.0 / 798))))))))))
    return acc + series


cdef inline double c_lgamma(double x) nogil:
    cdef double prod = 1.0, inv, r, series
    if x >= 1.0 and x <= EXACT_MAX and x == floor(x):
        return LOG_FACT[<Py_ssize_t>x]
    while x < ASYMPTOTIC_MIN:
        prod *= x
        x += 1.0
    inv = 1.0 / x
    r = inv * inv
    series = inv * (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r * (
        1.0 / 1680 - r * (1.0 / 1188 - r * (691.0 / 360360 - r * (
        1.0 / 156 - r * (3617.0 / 122400 - r * 43867.0 / 244188))))))))
    return (x - 0.5) * log(x) - x + HALF_LOG_2PI + series - log(prod)


cdef _map(func, x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.array(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    cdef int which = func
    with nogil:
        for i in range(n):
            if which == 0:
                out[i] = c_digamma(flat[i])
            elif which == 1:
                out[i] = c_trigamma(flat[i])
            else:
                out[i] = c_lgamma(flat[i])
    return out.reshape(np.shape(x))


def digamma(x):
    return _map(0, x)


def trigamma(x):
    return _map(1, x)


def lgamma(x):
    return _map(2, x)


cdef inline void c_concentration(double t, double scale, int param,
                                 double* alpha, double* dalpha) nogil:
    if param == 0:
        if t < LOG_ALPHA_MIN:
            alpha[0] = ALPHA_MIN
            dalpha[0] = 0.0
        elif t > LOG_ALPHA_MAX:
            alpha[0] = ALPHA_MAX
            dalpha[0] = 0.0
        else:
            alpha[0] = exp(t)
            dalpha[0] = alpha[0] * scale
    elif param == 1:
        if t > 0.0:
            alpha[0] = 1.0 + t
            dalpha[0] = scale
        else:
            alpha[0] = 1.0
            dalpha[0] = 0.0
    else:
        # 1 + softplus(t), matching np.logaddexp(0, t)
        if t > 0.0:
            alpha[0] = 1.0 + t + log1p(exp(-t))
        else:
            alpha[0] = 1.0 + log1p(exp(t))
        dalpha[0] = scale / (1.0 + exp(-t))


def concentration(logits, double scale, int param):
    if param < 0 or param > 2:
        raise ValueError(f"unknown parameterization code {param}")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.array(logits, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha = np.empty_like(flat)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dalpha = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            c_concentration(flat[i] * scale, scale, param, &alpha[i], &dalpha[i])
    shape = np.shape(logits)
    return alpha.reshape(shape), dalpha.reshape(shape)


def edl_batch(logits, labels, double lam, double scale, int param):
    if param < 0 or param > 2:
        raise ValueError(f"unknown parameterization code {param}")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] loss = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.empty((n, c))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_buf = np.empty(c)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] da_buf = np.empty(c)
    cdef double[::1] a = a_buf
    cdef double[::1] da = da_buf
    cdef Py_ssize_t i, k, t
    cdef double total, q, p_true, pk, denom, mse, mtotal, kl, psi_m, tri_m
    cdef double mk, onehot, dk, lgamma_c = c_lgamma(<double>c)

    with nogil:
        for i in range(n):
            t = y[i]
            total = 0.0
            for k in range(c):
                c_concentration(z[i, k] * scale, scale, param, &a[k], &da[k])
                total += a[k]
            q = 0.0
            for k in range(c):
                pk = a[k] / total
                q += pk * pk
            p_true = a[t] / total
            denom = total + 1.0
            mse = 1.0 - 2.0 * p_true + q * total / denom + 1.0 / denom

            kl = 0.0
            psi_m = 0.0
            tri_m = 0.0
            mtotal = 0.0
            if lam != 0.0:
                for k in range(c):
                    mtotal += 1.0 if k == t else a[k]
                psi_m = c_digamma(mtotal)
                tri_m = c_trigamma(mtotal)
                kl = c_lgamma(mtotal) - lgamma_c
                for k in range(c):
                    mk = 1.0 if k == t else a[k]
                    kl += -c_lgamma(mk) + (mk - 1.0) * (c_digamma(mk) - psi_m)
            loss[i] = mse + lam * kl

            for k in range(c):
                pk = a[k] / total
                onehot = 1.0 if k == t else 0.0
                dk = (-2.0 * (onehot - p_true) / total
                      + 2.0 * (pk - q) / denom
                      + (q - 1.0) / (denom * denom))
                # the true-class entry of the masked vector is pinned to 1
                if lam != 0.0 and k != t:
                    dk += lam * ((a[k] - 1.0) * c_trigamma(a[k]) - (mtotal - c) * tri_m)
                grad[i, k] = dk * da[k]
    return loss, grad
