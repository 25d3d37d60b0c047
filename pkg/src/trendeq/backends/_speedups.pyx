# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the numerical hot kernels.

Drop-in replacement for :mod:`trendeq.backends.pure`; selected automatically
at import when the extension was built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

from ..errors import IllConditionedKernel

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def se_gram(x, double gamma, double sf2):
    """Symmetric squared-exponential Gram matrix sf2*exp(-(xi-xj)^2/(2*gamma^2))."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, j
    cdef double inv = -0.5 / (gamma * gamma)
    cdef double d
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        o[i, i] = sf2
        for j in range(i + 1, n):
            d = xv[i] - xv[j]
            d = sf2 * exp(d * d * inv)
            o[i, j] = d
            o[j, i] = d
    return out


def se_cross(a, b, double gamma, double sf2):
    """Cross squared-exponential matrix between point sets ``a`` (rows) and ``b``."""
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = av.shape[0], n = bv.shape[0], i, j
    cdef double inv = -0.5 / (gamma * gamma)
    cdef double d
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        for j in range(n):
            d = av[i] - bv[j]
            o[i, j] = sf2 * exp(d * d * inv)
    return out


def sq_dists(a, b):
    """Pairwise squared Euclidean distances between rows of 2-D arrays a and b."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = av.shape[0], n = bv.shape[0], d = av.shape[1], i, j, t
    cdef double acc, diff
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(d):
                diff = av[i, t] - bv[j, t]
                acc += diff * diff
            o[i, j] = acc
    return out


cdef int _build_and_factor(double[:, ::1] d2, double[:, ::1] a, double[:, ::1] k,
                           double gamma, double sf2, double sn2,
                           double jitter_scale) nogil:
    """Fill k and a = k + (sn2 + jitter_scale*sf2) I, factor a in place.

    Returns the LAPACK info code (0 on success). The factor is stored so
    that dpotrs with uplo='L' solves correctly for the same memory layout.
    """
    cdef Py_ssize_t n = d2.shape[0], i, j
    cdef double inv = -0.5 / (gamma * gamma)
    cdef double shift = sn2 + jitter_scale * sf2
    cdef double v
    cdef int nn = <int> n, info = 0
    cdef char uplo = b'L'
    if not (isfinite(shift) and isfinite(sf2) and isfinite(inv)):
        return -1
    for i in range(n):
        for j in range(n):
            v = sf2 * exp(d2[i, j] * inv)
            if not isfinite(v):
                return -1
            k[i, j] = v
            a[i, j] = v
        a[i, i] += shift
    dpotrf(&uplo, &nn, &a[0, 0], &nn, &info)
    return info


def lml_value(d2, resid, double log_gamma, double log_sf2, double log_sn2,
              double jitter_scale):
    """Gaussian log marginal likelihood of ``resid`` under the SE-kernel prior.

    ``d2`` is the matrix of squared input distances; hyperparameters are
    supplied as natural logs. Raises IllConditionedKernel when the shifted
    Gram matrix cannot be factorized.
    """
    cdef double gamma = exp(log_gamma), sf2 = exp(log_sf2), sn2 = exp(log_sn2)
    cdef double[:, ::1] d2v = np.ascontiguousarray(d2, dtype=np.float64)
    cdef Py_ssize_t n = d2v.shape[0], i
    a_arr = np.empty((n, n), dtype=np.float64)
    k_arr = np.empty((n, n), dtype=np.float64)
    alpha_arr = np.array(resid, dtype=np.float64, copy=True)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] k = k_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] rv = np.ascontiguousarray(resid, dtype=np.float64)
    cdef int info, nn = <int> n, one = 1
    cdef char uplo = b'L'
    cdef double quad = 0.0, logdet = 0.0
    info = _build_and_factor(d2v, a, k, gamma, sf2, sn2, jitter_scale)
    if info != 0:
        raise IllConditionedKernel(
            f"Cholesky failed at gamma={gamma:g} sf2={sf2:g} sn2={sn2:g} "
            f"jitter_scale={jitter_scale:g}"
        )
    dpotrs(&uplo, &nn, &one, &a[0, 0], &nn, &alpha[0], &nn, &info)
    for i in range(n):
        quad += rv[i] * alpha[i]
        logdet += log(a[i, i])
    return -0.5 * quad - logdet - 0.5 * n * LOG_2PI


def lml_value_grad(d2, resid, double log_gamma, double log_sf2, double log_sn2,
                   double jitter_scale):
    """Log marginal likelihood and its gradient w.r.t. the log-hyperparameters."""
    cdef double gamma = exp(log_gamma), sf2 = exp(log_sf2), sn2 = exp(log_sn2)
    cdef double[:, ::1] d2v = np.ascontiguousarray(d2, dtype=np.float64)
    cdef Py_ssize_t n = d2v.shape[0], i, j
    a_arr = np.empty((n, n), dtype=np.float64)
    k_arr = np.empty((n, n), dtype=np.float64)
    alpha_arr = np.array(resid, dtype=np.float64, copy=True)
    inv_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] k = k_arr
    cdef double[:, ::1] a_inv = inv_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] rv = np.ascontiguousarray(resid, dtype=np.float64)
    cdef int info, nn = <int> n
    cdef char uplo = b'L'
    cdef double quad = 0.0, logdet = 0.0
    cdef double t_ij, s_gamma = 0.0, s_k = 0.0, trace_t = 0.0
    cdef double inv_g2 = 1.0 / (gamma * gamma)
    info = _build_and_factor(d2v, a, k, gamma, sf2, sn2, jitter_scale)
    if info != 0:
        raise IllConditionedKernel(
            f"Cholesky failed at gamma={gamma:g} sf2={sf2:g} sn2={sn2:g} "
            f"jitter_scale={jitter_scale:g}"
        )
    cdef int one = 1
    dpotrs(&uplo, &nn, &one, &a[0, 0], &nn, &alpha[0], &nn, &info)
    dpotrs(&uplo, &nn, &nn, &a[0, 0], &nn, &a_inv[0, 0], &nn, &info)
    for i in range(n):
        quad += rv[i] * alpha[i]
        logdet += log(a[i, i])
    cdef double value = -0.5 * quad - logdet - 0.5 * n * LOG_2PI
    for i in range(n):
        for j in range(n):
            t_ij = alpha[i] * alpha[j] - a_inv[i, j]
            s_k += t_ij * k[i, j]
            s_gamma += t_ij * k[i, j] * d2v[i, j]
            if i == j:
                trace_t += t_ij
    grad = np.empty(3, dtype=np.float64)
    grad[0] = 0.5 * s_gamma * inv_g2
    grad[1] = 0.5 * (s_k + jitter_scale * sf2 * trace_t)
    grad[2] = 0.5 * sn2 * trace_t
    return value, grad


def smo_solve(k, y, double c, double tol, long max_iter):
    """Sequential minimal optimization for the soft-margin SVM dual.

    Minimizes 0.5*a'Qa - sum(a) with Q_ij = y_i y_j k_ij subject to
    0 <= a <= c and y'a = 0, using maximal-violating-pair selection.

    Returns (alpha, bias, iterations, final_violation); the caller decides
    whether a final_violation above ``tol`` is an error.
    """
    cdef double[:, ::1] kv = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], t
    alpha_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    grad_arr = np.full(n, -1.0, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef long it = 0
    cdef Py_ssize_t i, j
    cdef double m_up, m_low, delta_t, violation = np.inf
    cdef double quad, step, diff, total, ai, aj, old_ai, old_aj, d_i, d_j
    cdef double bias, free_sum
    cdef Py_ssize_t n_free
    while it < max_iter:
        i = -1
        j = -1
        m_up = -np.inf
        m_low = np.inf
        for t in range(n):
            delta_t = -yv[t] * grad[t]
            if (yv[t] > 0.0 and alpha[t] < c) or (yv[t] < 0.0 and alpha[t] > 0.0):
                if delta_t > m_up:
                    m_up = delta_t
                    i = t
            if (yv[t] > 0.0 and alpha[t] > 0.0) or (yv[t] < 0.0 and alpha[t] < c):
                if delta_t < m_low:
                    m_low = delta_t
                    j = t
        violation = m_up - m_low
        if violation <= tol:
            break
        it += 1
        old_ai = alpha[i]
        old_aj = alpha[j]
        quad = kv[i, i] + kv[j, j] - 2.0 * kv[i, j]
        if quad <= 0.0:
            quad = 1e-12
        if yv[i] != yv[j]:
            step = (-grad[i] - grad[j]) / quad
            diff = old_ai - old_aj
            ai = old_ai + step
            aj = old_aj + step
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > 0.0:
                if ai > c:
                    ai = c
                    aj = c - diff
            else:
                if aj > c:
                    aj = c
                    ai = c + diff
        else:
            step = (grad[i] - grad[j]) / quad
            total = old_ai + old_aj
            ai = old_ai - step
            aj = old_aj + step
            if total > c:
                if ai > c:
                    ai = c
                    aj = total - c
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
            if total > c:
                if aj > c:
                    aj = c
                    ai = total - c
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        d_i = yv[i] * (ai - old_ai)
        d_j = yv[j] * (aj - old_aj)
        for t in range(n):
            grad[t] += yv[t] * (kv[t, i] * d_i + kv[t, j] * d_j)
    # Bias from free support vectors; fall back to the violation midpoint.
    free_sum = 0.0
    n_free = 0
    for t in range(n):
        if alpha[t] > 0.0 and alpha[t] < c:
            free_sum += -yv[t] * grad[t]
            n_free += 1
    if n_free > 0:
        bias = free_sum / n_free
    else:
        m_up = -np.inf
        m_low = np.inf
        for t in range(n):
            delta_t = -yv[t] * grad[t]
            if (yv[t] > 0.0 and alpha[t] < c) or (yv[t] < 0.0 and alpha[t] > 0.0):
                if delta_t > m_up:
                    m_up = delta_t
            if (yv[t] > 0.0 and alpha[t] > 0.0) or (yv[t] < 0.0 and alpha[t] < c):
                if delta_t < m_low:
                    m_low = delta_t
        bias = 0.5 * (m_up + m_low)
    return alpha_arr, bias, it, violation
