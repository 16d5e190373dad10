"""Compiled inner loops for the multi-start exact NMF search."""
import numpy as np
from numba import njit


@njit(cache=True)
def hals_sweeps(M, U, V, n_sweeps):
    """Run ``n_sweeps`` HALS sweeps in place; return ``||M - UV||_F``.

    Same update as ``nmf.hals_step``. A zero column/row is left untouched
    here; the caller owns any reseeding.
    """
    p, n = M.shape
    r = U.shape[1]
    for _ in range(n_sweeps):
        MVt = M @ V.T
        VVt = V @ V.T
        for k in range(r):
            d = VVt[k, k]
            if d > 1e-30:
                for i in range(p):
                    acc = 0.0
                    for j in range(r):
                        acc += U[i, j] * VVt[j, k]
                    x = U[i, k] + (MVt[i, k] - acc) / d
                    U[i, k] = x if x > 0.0 else 0.0
        UtM = U.T @ M
        UtU = U.T @ U
        for k in range(r):
            d = UtU[k, k]
            if d > 1e-30:
                for j in range(n):
                    acc = 0.0
                    for l in range(r):
                        acc += UtU[k, l] * V[l, j]
                    x = V[k, j] + (UtM[k, j] - acc) / d
                    V[k, j] = x if x > 0.0 else 0.0
    return np.sqrt(np.sum((M - U @ V) ** 2))
