"""Pure numpy versions of the hot kernels. Same contracts as ``_ext.rls_core``."""

import numpy as np


def rls_loop(phi, x, S, w, beta):
    # divergence is reported through the returned index, not numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        return _rls_loop(phi, x, S, w, beta)


def _rls_loop(phi, x, S, w, beta):
    n = phi.shape[0]
    err = np.empty(n)
    inv_beta = 1.0 / beta
    for t in range(n):
        y = phi[t]
        e = x[t] - y @ w
        err[t] = e
        s = S @ y
        denom = beta + s @ y
        S -= np.outer(s, s) / denom
        S *= inv_beta
        w += (e / denom) * s
        if not (np.isfinite(e) and np.isfinite(denom) and np.isfinite(w[0])):
            return err, t
    if not np.all(np.isfinite(w)):
        return err, n - 1
    return err, -1


def volterra_products(y, lags, orders):
    y = np.asarray(y, dtype=float)
    n = len(y)
    out = np.empty((n, len(orders)))
    for j, (row, q) in enumerate(zip(lags, orders)):
        p = np.ones(n)
        for l in row[:q]:
            p *= shift(y, int(l))
        out[:, j] = p
    return out


def shift(y, lag):
    """s[n] = y[n - lag], zero outside the record."""
    out = np.zeros_like(y)
    n = len(y)
    if lag >= 0:
        if lag < n:
            out[lag:] = y[: n - lag]
    elif -lag < n:
        out[:lag] = y[-lag:]
    return out
