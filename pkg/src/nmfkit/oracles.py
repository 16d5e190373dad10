"""Brute-force reference solvers for small instances.

They share no code with the production solvers and are meant for checking
them: exponential or grid-based, exact up to the stated resolution.
"""
from __future__ import annotations

import itertools

import numpy as np


def nnls_enumeration(A, b):
    """Exact ``min_{x >= 0} ||A x - b||^2`` by trying every passive set.

    The optimum solves the unconstrained least-squares problem on its
    support; checking all ``2^k`` supports and keeping the best feasible
    one is exact for full-column-rank A.
    """
    A = np.asarray(A, float)
    b = np.asarray(b, float).ravel()
    k = A.shape[1]
    best_x, best_f = np.zeros(k), float(b @ b)
    for size in range(1, k + 1):
        for S in itertools.combinations(range(k), size):
            S = list(S)
            xs = np.linalg.lstsq(A[:, S], b, rcond=None)[0]
            if np.any(xs < 0):
                continue
            x = np.zeros(k)
            x[S] = xs
            f = float(np.sum((A @ x - b) ** 2))
            if f < best_f:
                best_x, best_f = x, f
    return best_x, best_f


def project_row_grid(y, d_idx, step=1e-4):
    """Projection onto ``{0 <= x_j <= x_d <= 1}`` by a grid over ``x_d``."""
    y = np.asarray(y, float)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    X = np.clip(y[None, :], 0.0, grid[:, None])
    X[:, d_idx] = grid
    i = int(np.argmin(np.sum((X - y) ** 2, axis=1)))
    return X[i]


def hals_column_grid(M, U, V, k, lo=0.0, hi=None, points=2001):
    """Coordinate-wise grid minimization of ``||M - U V||`` over ``U[:, k]``.

    The objective separates over the entries of the column, so each entry
    is minimized independently over its own grid.
    """
    M, U, V = (np.asarray(a, float) for a in (M, U, V))
    R = M - U @ V + np.outer(U[:, k], V[k])
    hi = float(np.abs(R).max() / max(np.abs(V[k]).max(), 1e-300)) * 2 + 1 if hi is None else hi
    grid = np.linspace(lo, hi, points)
    out = np.empty(U.shape[0])
    for i in range(U.shape[0]):
        f = np.sum((R[i][None, :] - grid[:, None] * V[k][None, :]) ** 2, axis=1)
        out[i] = grid[int(np.argmin(f))]
    return out


def residual_bruteforce(M, U, V):
    """``||M - U V||_F`` with explicit loops."""
    M, U, V = (np.asarray(a, float) for a in (M, U, V))
    p, n = M.shape
    r = U.shape[1]
    total = 0.0
    for i in range(p):
        for j in range(n):
            s = 0.0
            for k in range(r):
                s += U[i, k] * V[k, j]
            total += (M[i, j] - s) ** 2
    return total ** 0.5
