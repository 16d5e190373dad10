"""Nonnegative least squares subsolvers for the alternating NMF loop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import DimensionError, as_matrix


class DegenerateFactorError(ValueError):
    """A factor column/row is zero, so the closed-form update is undefined."""


@dataclass(frozen=True)
class NnlsConfig:
    max_iters: int = 20
    tol: float = 1e-6
    restart: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


def lipschitz_constant(G: np.ndarray, n_iter: int = 30, rtol: float = 1e-10) -> float:
    """Largest eigenvalue of the PSD matrix ``G`` by power iteration."""
    x = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    lam = 0.0
    for _ in range(n_iter):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        lam_new = float(x @ G @ x)
        if abs(lam_new - lam) <= rtol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam


def _objective(AtA, AtB, bb, X):
    # 0.5 * ||B - A X||_F^2 expanded through the Gram matrices
    return 0.5 * (np.sum(X * (AtA @ X)) - 2.0 * np.sum(X * AtB) + bb)


def _kkt_norm(X, grad):
    return float(np.linalg.norm(np.minimum(X, grad)))


def nnls_fast_gradient(A, B, X0, cfg: NnlsConfig | None = None) -> np.ndarray:
    """Solve ``min_{X >= 0} ||B - A X||_F`` by accelerated projected gradient.

    Nesterov momentum with a function-value restart: whenever an accelerated
    step would increase the objective the momentum is dropped and a plain
    projected-gradient step is taken instead, so the returned iterate never
    has a larger objective than ``X0``.

    Parameters
    ----------
    A : ndarray (p, r)
    B : ndarray (p, n)
    X0 : ndarray (r, n), nonnegative starting point
    cfg : NnlsConfig, optional

    Returns
    -------
    X : ndarray (r, n), entrywise nonnegative

    Raises
    ------
    DegenerateFactorError
        If ``A`` has an all-zero column (the caller decides how to reseed).
    """
    cfg = cfg or NnlsConfig()
    A, B, X0 = as_matrix(A, "A"), as_matrix(B, "B"), as_matrix(X0, "X0")
    if A.shape[0] != B.shape[0] or X0.shape != (A.shape[1], B.shape[1]):
        raise DimensionError(f"incompatible shapes A{A.shape}, B{B.shape}, X0{X0.shape}")
    if np.any(X0 < 0):
        raise ValueError("X0 must be nonnegative")
    zero_cols = np.flatnonzero(~np.any(A != 0, axis=0))
    if zero_cols.size:
        raise DegenerateFactorError(f"A has zero columns {zero_cols.tolist()}")

    AtA = A.T @ A
    AtB = A.T @ B
    bb = float(np.sum(B * B))
    L = lipschitz_constant(AtA)

    X = X0.copy()
    grad = AtA @ X - AtB
    kkt0 = _kkt_norm(X, grad)
    if kkt0 == 0:
        return X
    f = _objective(AtA, AtB, bb, X)
    Y = X.copy()
    t = 1.0
    for _ in range(cfg.max_iters):
        Xn = np.maximum(Y - (AtA @ Y - AtB) / L, 0.0)
        fn = _objective(AtA, AtB, bb, Xn)
        if fn > f:
            if not cfg.restart:
                break
            # momentum overshot: fall back to a projected-gradient step at X
            Xn = np.maximum(X - grad / L, 0.0)
            fn = _objective(AtA, AtB, bb, Xn)
            t = 1.0
            if fn > f:
                break
            Y = Xn
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Y = Xn + ((t - 1.0) / t_next) * (Xn - X)
            t = t_next
        X, f = Xn, fn
        grad = AtA @ X - AtB
        if _kkt_norm(X, grad) <= cfg.tol * kkt0:
            break
    return X


def hals_update_column(M, U, V, k: int) -> np.ndarray:
    """Exact minimizer of ``||R_k - u V[k]||_F`` over ``u >= 0``.

    ``R_k = M - sum_{j != k} U[:, j] V[j]`` is the residual with the k-th
    rank-one term removed. The same routine updates a row of ``V`` when
    called on the transposed problem.
    """
    M, U, V = as_matrix(M), as_matrix(U, "U"), as_matrix(V, "V")
    vk = V[k]
    nv = float(vk @ vk)
    if nv <= 0:
        raise DegenerateFactorError(f"row {k} of V is zero")
    Rk = M - U @ V + np.outer(U[:, k], vk)
    return np.maximum(0.0, Rk @ vk / nv)
