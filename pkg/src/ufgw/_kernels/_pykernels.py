"""Reference numpy implementations of the Sinkhorn inner loops.

These mirror ``_ckernels.pyx`` one for one and are used whenever the compiled
module is unavailable or ``UFGW_PURE_PYTHON`` is set.
"""

import numpy as np


def _lse_rows(X):
    m = X.max(axis=1)
    return m + np.log(np.exp(X - m[:, None]).sum(axis=1))


def sinkhorn_log(G, log_mu, log_nu, eps, fi, iters, tol, log_u, log_v):
    """Unbalanced Sinkhorn in the log domain.

    Returns ``(log_u, log_v, n_iter, residual)`` where ``residual`` is the
    last max-abs change of ``log_u``.
    """
    S = -np.asarray(G, dtype=np.float64) / eps
    St = np.ascontiguousarray(S.T)
    log_u = np.array(log_u, dtype=np.float64)
    log_v = np.array(log_v, dtype=np.float64)
    residual = np.inf
    n_iter = 0
    for n_iter in range(1, iters + 1):
        prev = log_u
        log_u = fi * (log_mu - _lse_rows(S + log_v[None, :]))
        log_v = fi * (log_nu - _lse_rows(St + log_u[None, :]))
        residual = float(np.max(np.abs(log_u - prev)))
        if residual < tol:
            break
    return log_u, log_v, n_iter, residual


def sinkhorn_plain(K, mu, nu, fi, iters, tol, u, v):
    """Unbalanced Sinkhorn with explicit scalings; ``K`` must have no zero rows or columns."""
    K = np.asarray(K, dtype=np.float64)
    u = np.array(u, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    residual = np.inf
    n_iter = 0
    for n_iter in range(1, iters + 1):
        prev = u
        u = (mu / (K @ v)) ** fi
        v = (nu / (K.T @ u)) ** fi
        residual = float(np.max(np.abs(np.log(u) - np.log(prev))))
        if residual < tol:
            break
    return u, v, n_iter, residual


def _absorbed_kernel(S, a, b):
    return np.exp(S + a[:, None] + b[None, :])


def sinkhorn_stabilized(G, log_mu, log_nu, eps, fi, iters, tol, log_u, log_v, absorb_at=50.0):
    """Log-stabilized unbalanced Sinkhorn with absorption.

    The scalings are split as ``log_u = a + log ut`` and ``log_v = b + log vt``.
    The kernel ``exp(a_i + b_j - G_ij/eps)`` is formed once, the sweeps work on
    ``ut, vt`` by plain matrix-vector products, and ``ut, vt`` are folded back
    into ``a, b`` whenever ``|log ut|`` or ``|log vt|`` exceeds ``absorb_at``.
    The iterates equal those of :func:`sinkhorn_log` up to rounding.

    Returns ``(log_u, log_v, n_iter, residual, ok)``; ``ok`` is False when a
    kernel row or column underflowed, in which case the caller should fall
    back to :func:`sinkhorn_log`.
    """
    S = -np.asarray(G, dtype=np.float64) / eps
    b = np.array(log_v, dtype=np.float64)
    a = np.array(log_u, dtype=np.float64)
    # the first sweep ignores the initial u, so a may be re-centred freely
    row_max = (S + b[None, :]).max(axis=1)
    bad = ~np.isfinite(a + row_max) | (np.abs(a + row_max) > 300.0)
    a[bad] = -row_max[bad]
    prev_log_u = np.array(log_u, dtype=np.float64)
    K = _absorbed_kernel(S, a, b)
    lut = np.zeros(a.size)
    lvt = np.zeros(b.size)
    residual = np.inf
    n_iter = 0
    for n_iter in range(1, iters + 1):
        Kv = K @ np.exp(lvt)
        if not np.all(Kv > 0):
            return a + lut, b + lvt, n_iter, residual, False
        new_lut = fi * (log_mu + a - np.log(Kv)) - a
        Ku = K.T @ np.exp(new_lut)
        if not np.all(Ku > 0):
            return a + lut, b + lvt, n_iter, residual, False
        lvt = fi * (log_nu + b - np.log(Ku)) - b
        lut = new_lut
        log_u_now = a + lut
        residual = float(np.max(np.abs(log_u_now - prev_log_u)))
        prev_log_u = log_u_now
        if residual < tol:
            break
        if np.max(np.abs(lut)) > absorb_at or np.max(np.abs(lvt)) > absorb_at:
            a = a + lut
            b = b + lvt
            lut[:] = 0.0
            lvt[:] = 0.0
            K = _absorbed_kernel(S, a, b)
    return a + lut, b + lvt, n_iter, residual, True
