"""Numpy implementations of the numerical hot kernels.

This is the fallback backend; ``trendeq.backends._speedups`` provides a
compiled drop-in replacement with identical signatures and semantics.
"""

import numpy as np
from scipy.linalg import cho_solve

from ..errors import IllConditionedKernel

LOG_2PI = float(np.log(2.0 * np.pi))


def se_gram(x, gamma, sf2):
    """Symmetric squared-exponential Gram matrix sf2*exp(-(xi-xj)^2/(2*gamma^2))."""
    x = np.asarray(x, dtype=np.float64)
    d = x[:, None] - x[None, :]
    return sf2 * np.exp(d * d / (-2.0 * gamma * gamma))


def se_cross(a, b, gamma, sf2):
    """Cross squared-exponential matrix between point sets ``a`` (rows) and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = a[:, None] - b[None, :]
    return sf2 * np.exp(d * d / (-2.0 * gamma * gamma))


def sq_dists(a, b):
    """Pairwise squared Euclidean distances between rows of 2-D arrays a and b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _factorize(d2, resid, gamma, sf2, sn2, jitter_scale):
    with np.errstate(over="ignore", invalid="ignore"):
        k = sf2 * np.exp(d2 / (-2.0 * gamma * gamma))
    a = k.copy()
    idx = np.arange(a.shape[0])
    a[idx, idx] += sn2 + jitter_scale * sf2
    if not np.isfinite(a).all():
        raise IllConditionedKernel(
            f"non-finite kernel at gamma={gamma:g} sf2={sf2:g} sn2={sn2:g}"
        )
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedKernel(
            f"Cholesky failed at gamma={gamma:g} sf2={sf2:g} sn2={sn2:g} "
            f"jitter_scale={jitter_scale:g}"
        ) from exc
    alpha = cho_solve((lower, True), resid)
    return k, lower, alpha


def lml_value(d2, resid, log_gamma, log_sf2, log_sn2, jitter_scale):
    """Gaussian log marginal likelihood of ``resid`` under the SE-kernel prior.

    ``d2`` is the matrix of squared input distances; hyperparameters are
    supplied as natural logs. Raises IllConditionedKernel when the shifted
    Gram matrix cannot be factorized.
    """
    with np.errstate(over="ignore"):
        gamma, sf2, sn2 = np.exp(log_gamma), np.exp(log_sf2), np.exp(log_sn2)
    _, lower, alpha = _factorize(d2, resid, gamma, sf2, sn2, jitter_scale)
    n = resid.shape[0]
    return float(
        -0.5 * resid @ alpha - np.sum(np.log(np.diag(lower))) - 0.5 * n * LOG_2PI
    )


def lml_value_grad(d2, resid, log_gamma, log_sf2, log_sn2, jitter_scale):
    """Log marginal likelihood and its gradient w.r.t. the log-hyperparameters."""
    with np.errstate(over="ignore"):
        gamma, sf2, sn2 = np.exp(log_gamma), np.exp(log_sf2), np.exp(log_sn2)
    k, lower, alpha = _factorize(d2, resid, gamma, sf2, sn2, jitter_scale)
    n = resid.shape[0]
    value = float(
        -0.5 * resid @ alpha - np.sum(np.log(np.diag(lower))) - 0.5 * n * LOG_2PI
    )
    a_inv = cho_solve((lower, True), np.eye(n))
    t = np.outer(alpha, alpha) - a_inv
    trace_t = float(np.trace(t))
    # dA/dlog(gamma) = K .* d2/gamma^2; dA/dlog(sf2) includes the sf2-scaled
    # jitter on the diagonal; dA/dlog(sn2) = sn2*I.
    g_gamma = 0.5 * float(np.sum(t * k * d2)) / (gamma * gamma)
    g_sf2 = 0.5 * (float(np.sum(t * k)) + jitter_scale * sf2 * trace_t)
    g_sn2 = 0.5 * sn2 * trace_t
    return value, np.array([g_gamma, g_sf2, g_sn2])


def smo_solve(k, y, c, tol, max_iter):
    """Sequential minimal optimization for the soft-margin SVM dual.

    Minimizes 0.5*a'Qa - sum(a) with Q_ij = y_i y_j k_ij subject to
    0 <= a <= c and y'a = 0, using maximal-violating-pair selection.

    Returns (alpha, bias, iterations, final_violation); the caller decides
    whether a final_violation above ``tol`` is an error.
    """
    k = np.asarray(k, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    pos = y > 0
    violation = np.inf
    it = 0
    while it < max_iter:
        delta = -(y * grad)
        up = np.where(pos, alpha < c, alpha > 0.0)
        low = np.where(pos, alpha > 0.0, alpha < c)
        i = int(np.argmax(np.where(up, delta, -np.inf)))
        j = int(np.argmin(np.where(low, delta, np.inf)))
        m_up = delta[i]
        m_low = delta[j]
        violation = m_up - m_low
        if violation <= tol:
            break
        it += 1
        old_ai = alpha[i]
        old_aj = alpha[j]
        if y[i] != y[j]:
            quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
            if quad <= 0.0:
                quad = 1e-12
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
            quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
            if quad <= 0.0:
                quad = 1e-12
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
        d_i = y[i] * (ai - old_ai)
        d_j = y[j] * (aj - old_aj)
        grad += y * (k[:, i] * d_i + k[:, j] * d_j)
    # Bias from free support vectors; fall back to the violation midpoint.
    free = (alpha > 0.0) & (alpha < c)
    if np.any(free):
        bias = float(np.mean(-(y * grad)[free]))
    else:
        delta = -(y * grad)
        up = np.where(pos, alpha < c, alpha > 0.0)
        low = np.where(pos, alpha > 0.0, alpha < c)
        m_up = np.max(np.where(up, delta, -np.inf))
        m_low = np.min(np.where(low, delta, np.inf))
        bias = float(0.5 * (m_up + m_low))
    return alpha, bias, it, float(violation)
