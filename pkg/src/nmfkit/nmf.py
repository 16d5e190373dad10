"""Standard NMF solvers built on two-block coordinate descent.

Each outer iteration updates U with V fixed, then V with U fixed. The
block updates available are multiplicative updates (MU), one HALS sweep
over the columns of U / rows of V, or an accelerated projected-gradient
NNLS solve per block (ANLS).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .matcore import as_matrix, check_nonnegative, normalize_columns_l1
from .nnls import DegenerateFactorError, NnlsConfig, nnls_fast_gradient

logger = logging.getLogger(__name__)

ALGORITHMS = ("mu", "hals", "anls")
INITS = ("random", "spa")
ZERO_ROW_TOL = 1e-15
STOP_WINDOW = 5


@dataclass(frozen=True)
class NmfConfig:
    r: int
    algorithm: str = "hals"
    init: str = "random"
    max_outer_iters: int = 500
    tol: float = 1e-7
    seed: int = 0
    mu_epsilon: float = 1e-16
    inner_iters: int = 20

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if not self.mu_epsilon > 0:
            raise ValueError("mu_epsilon must be > 0")

    def validate_for(self, M):
        if self.r > min(M.shape):
            raise ValueError(f"r={self.r} exceeds min(p, n)={min(M.shape)}")


@dataclass
class NmfModel:
    U: np.ndarray
    V: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return self.trace[-1][0] if self.trace else 0

    @property
    def relative_residual(self):
        return self.trace[-1][1] if self.trace else float("nan")

    def to_json(self, cfg: NmfConfig | None = None):
        out = {
            "r": int(self.U.shape[1]),
            "iterations": int(self.iterations),
            "relative_residual": float(self.relative_residual),
            "converged": bool(self.converged),
            "trace": [[int(i), float(e)] for i, e in self.trace],
        }
        if cfg is not None:
            out = {"algorithm": cfg.algorithm, "seed": int(cfg.seed), **out}
        return out


def scaled_random(shape, M, r, rng):
    """Uniform(0, 1) entries scaled so that ``E[U V]`` is about ``mean(M)``."""
    return rng.random(shape) * np.sqrt(M.mean() / r)


def init_factors(M, cfg: NmfConfig, rng=None):
    """Initial nonnegative ``(U, V)``; deterministic in ``cfg.seed``."""
    M = as_matrix(M)
    check_nonnegative(M)
    cfg.validate_for(M)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    p, n = M.shape
    r = cfg.r
    if cfg.init == "random":
        return scaled_random((p, r), M, r, rng), scaled_random((r, n), M, r, rng)
    from .separable import abundances, spa

    nd = normalize_columns_l1(M)
    K = [int(nd.kept[k]) for k in spa(nd.Mn, r)]
    U = M[:, K].copy()
    return U, abundances(M, K)


def mu_step(M, U, V, mu_epsilon: float = 1e-16):
    """One round of Lee-Seung multiplicative updates (U then V)."""
    U = U * (M @ V.T) / np.maximum(U @ (V @ V.T), mu_epsilon)
    V = V * (U.T @ M) / np.maximum((U.T @ U) @ V, mu_epsilon)
    return U, V


def _hals_block(A, B, X, rng, M):
    """HALS sweep over the rows of X for ``min ||B - A X||`` (in place).

    A row whose partner column ``A[:, k]`` is numerically zero cannot be
    updated; it is reseeded at random while ``A[:, k]`` is set to exactly
    zero, which leaves the product (and the objective) unchanged.
    """
    AtB = A.T @ B
    AtA = A.T @ A
    r = X.shape[0]
    for k in range(r):
        akk = AtA[k, k]
        if akk <= ZERO_ROW_TOL ** 2:
            A[:, k] = 0.0
            X[k] = scaled_random(X.shape[1], M, r, rng)
            continue
        X[k] = np.maximum(0.0, X[k] + (AtB[k] - AtA[k] @ X) / akk)
    return X


def hals_step(M, U, V, rng=None):
    """One full HALS sweep: every column of U, then every row of V.

    Each block update is the closed-form minimizer
    ``max(0, R_k V[k]^T / ||V[k]||^2)`` written in the Gram form
    ``U[:, k] + (M V^T - U V V^T)[:, k] / (V V^T)[k, k]``.
    """
    M = as_matrix(M)
    rng = np.random.default_rng(0) if rng is None else rng
    U = np.array(U, dtype=np.float64)
    V = np.array(V, dtype=np.float64)
    Ut = _hals_block(V.T, M.T, U.T.copy(), rng, M)
    U = np.ascontiguousarray(Ut.T)
    V = _hals_block(U, M, V, rng, M)
    return U, V


def anls_step(M, U, V, nnls_cfg: NnlsConfig, rng):
    """Alternating NNLS with inexact accelerated-gradient block solves."""
    try:
        U = nnls_fast_gradient(V.T, M.T, U.T, nnls_cfg).T
    except DegenerateFactorError:
        dead = np.linalg.norm(V, axis=1) <= ZERO_ROW_TOL
        V = V.copy()
        V[dead] = scaled_random((dead.sum(), V.shape[1]), M, V.shape[0], rng)
        U = U.copy()
        U[:, dead] = 0.0
        U = nnls_fast_gradient(V.T, M.T, U.T, nnls_cfg).T
    try:
        V = nnls_fast_gradient(U, M, V, nnls_cfg)
    except DegenerateFactorError:
        dead = np.linalg.norm(U, axis=0) <= ZERO_ROW_TOL
        U = U.copy()
        U[:, dead] = scaled_random((U.shape[0], dead.sum()), M, U.shape[1], rng)
        V = V.copy()
        V[dead] = 0.0
        V = nnls_fast_gradient(U, M, V, nnls_cfg)
    return np.ascontiguousarray(U), V


def factorize(M, cfg: NmfConfig, U0=None, V0=None) -> NmfModel:
    """Run the selected NMF algorithm until the windowed stop rule fires.

    The loop stops when the relative decrease of the relative residual,
    averaged over the last 5 iterations, drops below ``cfg.tol`` or after
    ``cfg.max_outer_iters`` iterations.

    Parameters
    ----------
    M : array (p, n), nonnegative
    cfg : NmfConfig
    U0, V0 : arrays, optional
        Custom starting factors; both must be given.
    """
    M = as_matrix(M)
    check_nonnegative(M)
    cfg.validate_for(M)
    rng = np.random.default_rng(cfg.seed)
    if U0 is None or V0 is None:
        U, V = init_factors(M, cfg, rng)
    else:
        U, V = as_matrix(U0, "U0", copy=True), as_matrix(V0, "V0", copy=True)
        if U.shape != (M.shape[0], cfg.r) or V.shape != (cfg.r, M.shape[1]):
            raise ValueError("custom factors have the wrong shape")
        check_nonnegative(U, "U0")
        check_nonnegative(V, "V0")
    nM = np.linalg.norm(M)
    nM = nM if nM > 0 else 1.0
    nnls_cfg = NnlsConfig(max_iters=cfg.inner_iters)

    def rel(U, V):
        e = np.linalg.norm(M - U @ V) / nM
        if not np.isfinite(e):
            raise FloatingPointError(f"non-finite residual with {cfg.algorithm}")
        return float(e)

    trace = [(0, rel(U, V))]
    drops = []
    converged = trace[0][1] == 0.0
    it = 0
    while not converged and it < cfg.max_outer_iters:
        it += 1
        if cfg.algorithm == "mu":
            U, V = mu_step(M, U, V, cfg.mu_epsilon)
        elif cfg.algorithm == "hals":
            U, V = hals_step(M, U, V, rng)
        else:
            U, V = anls_step(M, U, V, nnls_cfg, rng)
        e = rel(U, V)
        prev = trace[-1][1]
        trace.append((it, e))
        drops.append((prev - e) / prev if prev > 0 else 0.0)
        if e == 0.0 or (len(drops) >= STOP_WINDOW and np.mean(drops[-STOP_WINDOW:]) < cfg.tol):
            converged = True
    logger.debug("%s r=%d stopped after %d iterations, residual %.3e", cfg.algorithm, cfg.r, it, trace[-1][1])
    return NmfModel(U=U, V=V, trace=trace, converged=converged)
