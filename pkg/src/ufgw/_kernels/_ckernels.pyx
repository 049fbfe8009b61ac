# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Sinkhorn inner loops (see ``_pykernels`` for the numpy twin)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef void _matvec(const double[:, ::1] K, bint transpose, const double[::1] x,
                  double[::1] out) noexcept nogil:
    # out = K x (or K^T x); a C-ordered K is the Fortran-ordered K^T
    cdef int n = <int>K.shape[0], m = <int>K.shape[1], inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'N' if transpose else b'T'
    dgemv(&trans, &m, &n, &one, <double*>&K[0, 0], &m, <double*>&x[0], &inc, &zero, &out[0], &inc)


cdef void _lse_update(const double[:, ::1] S, const double[::1] other,
                      const double[::1] log_target, double fi,
                      double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = S.shape[0], m = S.shape[1]
    cdef double mx, s, x
    for i in range(n):
        mx = -INFINITY
        for j in range(m):
            x = S[i, j] + other[j]
            if x > mx:
                mx = x
        s = 0.0
        for j in range(m):
            s += exp(S[i, j] + other[j] - mx)
        out[i] = fi * (log_target[i] - (mx + log(s)))


def sinkhorn_log(G, log_mu, log_nu, double eps, double fi, int iters,
                 double tol, log_u, log_v):
    cdef double[:, ::1] S = np.ascontiguousarray(-np.asarray(G, dtype=np.float64) / eps)
    cdef double[:, ::1] St = np.ascontiguousarray(np.asarray(S).T)
    cdef double[::1] lmu = np.ascontiguousarray(log_mu, dtype=np.float64)
    cdef double[::1] lnu = np.ascontiguousarray(log_nu, dtype=np.float64)
    cdef double[::1] lu = np.array(log_u, dtype=np.float64)
    cdef double[::1] lv = np.array(log_v, dtype=np.float64)
    cdef double[::1] prev = np.empty(S.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = S.shape[0]
    cdef int it = 0
    cdef double residual = INFINITY, d
    with nogil:
        while it < iters:
            it += 1
            prev[:] = lu
            _lse_update(S, lv, lmu, fi, lu)
            _lse_update(St, lu, lnu, fi, lv)
            residual = 0.0
            for i in range(n):
                d = fabs(lu[i] - prev[i])
                if d > residual:
                    residual = d
            if residual < tol:
                break
    return np.asarray(lu), np.asarray(lv), it, residual


cdef void _scale_update(const double[:, ::1] K, bint transpose, const double[::1] other,
                        const double[::1] target, double fi,
                        double[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    _matvec(K, transpose, other, out)
    for i in range(out.shape[0]):
        out[i] = exp(fi * log(target[i] / out[i]))


def sinkhorn_plain(K, mu, nu, double fi, int iters, double tol, u, v):
    cdef double[:, ::1] Kc = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] cmu = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] cnu = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[::1] cu = np.array(u, dtype=np.float64)
    cdef double[::1] cv = np.array(v, dtype=np.float64)
    cdef double[::1] prev = np.empty(Kc.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = Kc.shape[0]
    cdef int it = 0
    cdef double residual = INFINITY, d
    with nogil:
        while it < iters:
            it += 1
            prev[:] = cu
            _scale_update(Kc, False, cv, cmu, fi, cu)
            _scale_update(Kc, True, cu, cnu, fi, cv)
            residual = 0.0
            for i in range(n):
                d = fabs(log(cu[i]) - log(prev[i]))
                if d > residual:
                    residual = d
            if residual < tol:
                break
    return np.asarray(cu), np.asarray(cv), it, residual


cdef void _fill_kernel(const double[:, ::1] S, const double[::1] a, const double[::1] b,
                       double[:, ::1] K) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(S.shape[0]):
        for j in range(S.shape[1]):
            K[i, j] = exp(S[i, j] + a[i] + b[j])


cdef bint _half_sweep(const double[:, ::1] K, bint transpose, const double[::1] lt_other,
                      const double[::1] log_target, const double[::1] shift, double fi,
                      double[::1] work, double[::1] ex, double[::1] out) noexcept nogil:
    # out = fi * (log_target + shift - log(K' exp(lt_other))) - shift, K' = K or K^T
    cdef Py_ssize_t i
    for i in range(lt_other.shape[0]):
        ex[i] = exp(lt_other[i])
    _matvec(K, transpose, ex, work)
    for i in range(out.shape[0]):
        if not work[i] > 0.0:
            return False
        out[i] = fi * (log_target[i] + shift[i] - log(work[i])) - shift[i]
    return True


def sinkhorn_stabilized(G, log_mu, log_nu, double eps, double fi, int iters, double tol,
                        log_u, log_v, double absorb_at=50.0):
    Sarr = -np.asarray(G, dtype=np.float64) / eps
    barr = np.array(log_v, dtype=np.float64)
    aarr = np.array(log_u, dtype=np.float64)
    row_max = (Sarr + barr[None, :]).max(axis=1)
    with np.errstate(invalid="ignore"):
        bad = ~np.isfinite(aarr + row_max) | (np.abs(aarr + row_max) > 300.0)
    aarr[bad] = -row_max[bad]
    cdef double[:, ::1] S = np.ascontiguousarray(Sarr)
    cdef double[::1] a = aarr
    cdef double[::1] b = barr
    cdef double[::1] lmu = np.ascontiguousarray(log_mu, dtype=np.float64)
    cdef double[::1] lnu = np.ascontiguousarray(log_nu, dtype=np.float64)
    cdef Py_ssize_t n = S.shape[0], m = S.shape[1], i
    cdef double[:, ::1] K = np.empty((n, m), dtype=np.float64)
    cdef double[::1] prev = np.array(log_u, dtype=np.float64)
    cdef double[::1] lut = np.zeros(n)
    cdef double[::1] lvt = np.zeros(m)
    cdef double[::1] new_lut = np.zeros(n)
    cdef double[::1] work = np.empty(max(n, m))
    cdef double[::1] ex = np.empty(max(n, m))
    cdef int it = 0
    cdef bint ok = True
    cdef double residual = INFINITY, d, big
    with nogil:
        _fill_kernel(S, a, b, K)
        while it < iters:
            it += 1
            if not _half_sweep(K, False, lvt, lmu, a, fi, work, ex, new_lut):
                ok = False
                break
            if not _half_sweep(K, True, new_lut, lnu, b, fi, work, ex, lvt):
                ok = False
                break
            residual = 0.0
            big = 0.0
            for i in range(n):
                lut[i] = new_lut[i]
                d = fabs(a[i] + lut[i] - prev[i])
                if d > residual:
                    residual = d
                prev[i] = a[i] + lut[i]
                if fabs(lut[i]) > big:
                    big = fabs(lut[i])
            if residual < tol:
                break
            for i in range(m):
                if fabs(lvt[i]) > big:
                    big = fabs(lvt[i])
            if big > absorb_at:
                for i in range(n):
                    a[i] += lut[i]
                    lut[i] = 0.0
                for i in range(m):
                    b[i] += lvt[i]
                    lvt[i] = 0.0
                _fill_kernel(S, a, b, K)
    out_u = np.asarray(a) + np.asarray(lut)
    out_v = np.asarray(b) + np.asarray(lvt)
    return out_u, out_v, it, residual, bool(ok)
