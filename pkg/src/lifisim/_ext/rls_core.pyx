# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""RLS recursion and Volterra feature products in C loops."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()


def rls_loop(double[:, ::1] phi, double[::1] x, double[:, ::1] S, double[::1] w, double beta):
    """
    In-place exponentially weighted RLS over the rows of ``phi``.

    Returns (a-priori errors, index of the first non-finite update or -1).
    """
    cdef Py_ssize_t n = phi.shape[0], N = phi.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double e, g, denom, inv_beta = 1.0 / beta, si
    cdef cnp.ndarray[cnp.float64_t, ndim=1] err_arr = np.empty(n)
    cdef double[::1] err = err_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_arr = np.empty(N)
    cdef double[::1] s = s_arr
    cdef Py_ssize_t bad = -1
    with nogil:
        for t in range(n):
            e = x[t]
            for i in range(N):
                e -= phi[t, i] * w[i]
            err[t] = e
            denom = beta
            for i in range(N):
                si = 0.0
                for j in range(N):
                    si += S[i, j] * phi[t, j]
                s[i] = si
                denom += si * phi[t, i]
            # S <- (S - s s^T / denom) / beta, kept exactly symmetric
            for i in range(N):
                si = s[i]
                for j in range(i, N):
                    S[i, j] = (S[i, j] - si * s[j] / denom) * inv_beta
                    S[j, i] = S[i, j]
            g = e / denom
            for i in range(N):
                w[i] += g * s[i]
            if not isfinite(e) or not isfinite(denom) or not isfinite(w[0]):
                bad = t
                break
    if bad < 0:
        for i in range(N):
            if not isfinite(w[i]):
                bad = n - 1
                break
    return err_arr, bad


def volterra_products(double[::1] y, long[:, ::1] lags, long[::1] orders):
    """
    Feature matrix phi[n, j] = prod_q y[n - lags[j, q]] for q < orders[j],
    zero outside the record.
    """
    cdef Py_ssize_t n = y.shape[0], N = lags.shape[0], t, j, q, k
    cdef double p
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((n, N))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for t in range(n):
            for j in range(N):
                p = 1.0
                for q in range(orders[j]):
                    k = t - lags[j, q]
                    if k < 0 or k >= n:
                        p = 0.0
                        break
                    p *= y[k]
                out[t, j] = p
    return out_arr
