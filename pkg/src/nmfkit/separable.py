"""Separable NMF: find r columns of M that generate all the others.

Geometric routines (SPA and its robustness add-ons) work on column-l1
normalized data, where the sought columns are the vertices of conv(M).
The convex route solves the trace self-dictionary program restricted to a
preselected candidate set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matcore import as_matrix, numeric_rank
from .nnls import NnlsConfig, lipschitz_constant, nnls_fast_gradient

ABUNDANCE_NNLS = NnlsConfig(max_iters=2000, tol=1e-12)
SELECTION_RULES = ("usage", "diagonal")


class RankDeficiencyError(ValueError):
    """SPA ran out of residual before picking r columns.

    ``indices`` holds the columns selected so far.
    """

    def __init__(self, msg, indices):
        super().__init__(msg)
        self.indices = list(indices)


@dataclass
class SeparableResult:
    K: list
    V: np.ndarray
    residual: float
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(set(self.K)) != len(self.K):
            raise ValueError("K has repeated indices")

    @property
    def r(self):
        return len(self.K)

    def to_json(self):
        return {"K": [int(k) for k in self.K], "residual": float(self.residual), "r": self.r}


@dataclass(frozen=True)
class SelfDictConfig:
    candidates: tuple
    penalty: float = 1000.0
    max_iters: int = 5000
    tol: float = 1e-9
    selection: str = "usage"

    def __post_init__(self):
        if self.selection not in SELECTION_RULES:
            raise ValueError(f"selection must be one of {SELECTION_RULES}")
        if not self.penalty > 0:
            raise ValueError("penalty must be > 0")
        if len(self.candidates) == 0:
            raise ValueError("candidates must be nonempty")


def _sq_colnorms(R):
    return np.einsum("ij,ij->j", R, R)


def spa(M, r: int) -> list:
    """Successive projection algorithm.

    Repeatedly picks the column of largest l2 norm (lowest index on ties)
    and projects every column onto the orthogonal complement of the pick.
    """
    R = as_matrix(M, copy=True)
    if not 1 <= r <= R.shape[1]:
        raise ValueError(f"r={r} out of range for {R.shape[1]} columns")
    norms = _sq_colnorms(R)
    floor = (1e-12) ** 2 * norms.max()
    K = []
    for _ in range(r):
        j = int(np.argmax(norms))
        if norms[j] <= floor or norms[j] == 0:
            raise RankDeficiencyError(
                f"residual vanished after {len(K)} of {r} picks", K
            )
        u = R[:, j] / np.sqrt(norms[j])
        R -= np.outer(u, u @ R)
        K.append(j)
        norms = _sq_colnorms(R)
        norms[K] = 0.0
    return K


def pca_denoise(M, k: int) -> np.ndarray:
    """Best rank-k approximation of M (truncated SVD)."""
    M = as_matrix(M)
    if not 1 <= k <= min(M.shape):
        raise ValueError(f"k={k} out of range for shape {M.shape}")
    W, s, Zt = np.linalg.svd(M, full_matrices=False)
    return (W[:, :k] * s[:k]) @ Zt[:k]


def reduce_dimension(M, r: int) -> np.ndarray:
    """Coordinates of the columns of M in its top-r left singular basis."""
    M = as_matrix(M)
    W, s, _ = np.linalg.svd(M, full_matrices=False)
    return W[:, :r].T @ M


def khachiyan_mve(Q, tol: float = 1e-6, max_iter: int = 10_000):
    """Minimum-volume origin-centered ellipsoid ``{x : x^T A x <= 1}``.

    Khachiyan's first-order (Frank-Wolfe) scheme on the dual weights.
    Returns ``(A, weights, n_iter)``.
    """
    Q = as_matrix(Q)
    d, n = Q.shape
    u = np.full(n, 1.0 / n)
    it = 0
    for it in range(1, max_iter + 1):
        X = (Q * u) @ Q.T
        kappa = np.einsum("ij,ij->j", Q, np.linalg.solve(X, Q))
        j = int(np.argmax(kappa))
        kmax = kappa[j]
        if kmax <= d * (1.0 + tol):
            break
        step = (kmax - d) / (d * (kmax - 1.0))
        u *= 1.0 - step
        u[j] += step
    X = (Q * u) @ Q.T
    return np.linalg.inv(d * X), u, it


def mve_precondition(M, r: int, tol: float = 1e-6, max_iter: int = 10_000) -> np.ndarray:
    """Whitening transform from the minimum-volume enclosing ellipsoid.

    ``M`` is either already r x n (reduced coordinates) or is reduced to
    its top-r singular subspace first. Returns the symmetric square root
    ``L`` of the ellipsoid matrix, so the ellipsoid maps to the unit ball.
    """
    M = as_matrix(M)
    if r < 2:
        raise ValueError("preconditioning needs r >= 2")
    Q = M if M.shape[0] == r else reduce_dimension(M, r)
    if numeric_rank(Q) < r:
        raise ValueError("point set is degenerate after reduction")
    A, _, _ = khachiyan_mve(Q, tol=tol, max_iter=max_iter)
    w, E = np.linalg.eigh(A)
    return (E * np.sqrt(w)) @ E.T


def spa_mve(M, r: int) -> list:
    """SPA run on ellipsoid-whitened reduced coordinates."""
    Q = reduce_dimension(M, r)
    L = mve_precondition(Q, r)
    return spa(L @ Q, r)


def selection_volume(M, K) -> float:
    """Gram determinant of the selected columns (squared volume)."""
    S = np.asarray(M)[:, list(K)]
    return float(np.linalg.det(S.T @ S))


def refine_vertices(M, K, max_passes: int = 10) -> list:
    """Revisit each selected vertex against the span of the others.

    A pick is swapped for the column of largest residual norm after
    projecting out the other r-1 picks; every swap strictly increases the
    volume spanned by the selection.
    """
    M = as_matrix(M)
    K = list(K)
    for _ in range(max_passes):
        swapped = False
        for pos in range(len(K)):
            others = K[:pos] + K[pos + 1:]
            if others:
                Qo, _ = np.linalg.qr(M[:, others])
                R = M - Qo @ (Qo.T @ M)
            else:
                R = M
            norms = _sq_colnorms(R)
            j = int(np.argmax(norms))
            if norms[j] > norms[K[pos]] * (1.0 + 1e-10) and j not in K:
                K[pos] = j
                swapped = True
        if not swapped:
            break
    return K


def abundances(M, K, cfg: NnlsConfig = ABUNDANCE_NNLS) -> np.ndarray:
    """``argmin_{V >= 0} ||M - M[:, K] V||_F``."""
    M = as_matrix(M)
    W = M[:, list(K)]
    X0 = np.maximum(np.linalg.lstsq(W, M, rcond=None)[0], 0.0)
    return nnls_fast_gradient(W, M, X0, cfg)


def separable_result(M, K) -> SeparableResult:
    M = as_matrix(M)
    V = abundances(M, K)
    return SeparableResult(K=list(K), V=V, residual=float(np.linalg.norm(M - M[:, list(K)] @ V)))


# -- self-dictionary trace model --------------------------------------------

def project_rows(Y, diag_idx) -> np.ndarray:
    """Project each row onto ``{x : 0 <= x_j <= x_d <= 1}``.

    ``diag_idx[i]`` is the position of the dominating coordinate of row i.
    For a fixed value d of that coordinate the best point clamps the other
    entries to [0, d]; the optimal d minimizes a convex piecewise quadratic
    whose breakpoints are the remaining entries, found here by sorting.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    m, n = Y.shape
    rows = np.arange(m)
    diag_idx = np.asarray(diag_idx)
    yd = Y[rows, diag_idx]
    Z = Y.copy()
    Z[rows, diag_idx] = -np.inf
    Zs = -np.sort(-Z, axis=1)[:, : n - 1]
    Zs = np.where(np.isfinite(Zs), Zs, -np.inf)
    # stationary point when the top k off-diagonal entries exceed d
    csum = np.concatenate([np.zeros((m, 1)), np.cumsum(np.maximum(Zs, 0.0), axis=1)], axis=1)
    k = np.arange(n)
    d_cand = (yd[:, None] + csum) / (1.0 + k)
    upper = np.concatenate([np.full((m, 1), np.inf), Zs], axis=1)
    lower = np.concatenate([Zs, np.full((m, 1), -np.inf)], axis=1)
    valid = (d_cand <= upper) & (d_cand >= lower)
    first = np.argmax(valid, axis=1)
    d = np.clip(d_cand[rows, first], 0.0, 1.0)
    X = np.clip(Y, 0.0, d[:, None])
    X[rows, diag_idx] = d
    return X


def default_candidates(M, r: int, factor: int = 5) -> list:
    """SPA picks up to ``factor * r`` columns, padded by largest l2 norm."""
    M = as_matrix(M)
    count = min(factor * r, M.shape[1])
    try:
        picks = spa(M, count)
    except RankDeficiencyError as exc:
        picks = exc.indices
    if len(picks) < count:
        chosen = set(picks)
        order = np.argsort(-_sq_colnorms(M), kind="stable")
        picks += [int(j) for j in order if j not in chosen][: count - len(picks)]
    return sorted(picks)


def _selfdict_objective(X, diag_pos, G, H, mm, mu):
    fit = np.sum(X * (G @ X)) - 2.0 * np.sum(X * H) + mm
    return float(X[np.arange(X.shape[0]), diag_pos].sum() + mu * max(fit, 0.0))


def solve_self_dictionary(M, cfg: SelfDictConfig):
    """Minimize ``tr(X) + mu ||M - M X||_F^2`` over the feasible set.

    Only the candidate rows of X are free. Returns ``(X_c, objective
    trace)`` with ``X_c`` of shape (len(candidates), n).
    """
    M = as_matrix(M)
    C = np.asarray(sorted(set(int(c) for c in cfg.candidates)))
    MC = M[:, C]
    G = MC.T @ MC
    H = MC.T @ M
    mm = float(np.sum(M * M))
    mu = cfg.penalty
    L = 2.0 * mu * lipschitz_constant(G) * (1.0 + 1e-9)
    E = np.zeros((len(C), M.shape[1]))
    E[np.arange(len(C)), C] = 1.0

    def grad(X):
        return E + 2.0 * mu * (G @ X - H)

    X = np.zeros_like(E)
    f = _selfdict_objective(X, C, G, H, mm, mu)
    g0 = np.linalg.norm(X - project_rows(X - grad(X) / L, C))
    trace = [f]
    Y, t = X, 1.0
    for _ in range(cfg.max_iters):
        Xn = project_rows(Y - grad(Y) / L, C)
        fn = _selfdict_objective(Xn, C, G, H, mm, mu)
        if fn > f:
            Xn = project_rows(X - grad(X) / L, C)
            fn = _selfdict_objective(Xn, C, G, H, mm, mu)
            t = 1.0
            if fn > f:
                break
            Y = Xn
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Y = Xn + ((t - 1.0) / t_next) * (Xn - X)
            t = t_next
        step = np.linalg.norm(Xn - X)
        X, f = Xn, fn
        trace.append(f)
        if not np.isfinite(f):
            raise FloatingPointError("self-dictionary objective is not finite")
        if step <= cfg.tol * max(g0, 1e-300):
            break
    return X, C, trace


def self_dictionary(M, cfg: SelfDictConfig, r: int) -> SeparableResult:
    """Separable NMF through the trace-minimization convex model.

    Each candidate gets a score from the solution X and the r highest
    scores (lowest column index on ties) form K; abundances are then refit
    by NNLS. With ``selection="usage"`` the score is the row sum of X, the
    total weight with which the column helps reconstruct the data. With
    ``selection="diagonal"`` it is ``X(i, i)``. The two agree on noiseless
    separable data, but an isolated outlier cannot be explained by the other
    columns, so its diagonal stays near 1 while its row sum stays near 1 too,
    far below the row sum of a genuine vertex that many pixels mix from.
    """
    M = as_matrix(M)
    if len(set(cfg.candidates)) < r:
        raise ValueError(f"need at least r={r} candidates, got {len(set(cfg.candidates))}")
    X, C, _ = solve_self_dictionary(M, cfg)
    diag = X[np.arange(len(C)), C]
    score = X.sum(axis=1) if cfg.selection == "usage" else diag
    order = np.lexsort((C, -score))
    K = [int(C[i]) for i in order[:r]]
    res = separable_result(M, K)
    weights = np.zeros(M.shape[1])
    weights[C] = score
    res.weights = weights
    return res
