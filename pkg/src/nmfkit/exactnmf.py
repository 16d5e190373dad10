"""Heuristic exact NMF and nonnegative-rank bracketing.

Exact NMF is NP-hard, so nothing here certifies that a rank is
impossible: a failed search at rank r is evidence only. The only lower
bound reported is the numeric rank.

Each restart builds its starting point rank by rank: the k-th component is
fitted to the positive part of the residual left by the first k-1, and a
few jittered copies are polished by HALS, keeping the best. That start is
then refined by HALS sweeps with small multiplicative kicks whenever the
residual stagnates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._kernels import hals_sweeps
from .matcore import as_matrix, check_nonnegative, numeric_rank, relative_residual
from .nmf import NmfModel

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-9
PROMISING_TOL = 1e-4
FIRST_SWEEPS = 500
POLISH_SWEEPS = 20_000
KICK_WINDOW = 50
KICK_MIN_GAIN = 1e-12
INIT_KICKS = 5
INIT_SWEEPS = 200
TIGHTEN_SWEEPS = 10_000
TIGHTEN_FACTOR = 1e-4


@dataclass
class RankAttempt:
    r: int
    restarts: int
    best_residual: float
    found: bool

    def to_json(self):
        return {"r": self.r, "restarts": self.restarts,
                "best_residual": float(self.best_residual), "found": self.found}


@dataclass
class ExactSearch:
    model: NmfModel | None
    best_residual: float
    restarts_used: int
    success_index: int | None = None


@dataclass
class RankPlusEstimate:
    lower: int
    upper: int | None
    witness: NmfModel | None = None
    attempts: list = field(default_factory=list)

    def to_json(self, seed=None):
        out = {"lower": self.lower, "upper": self.upper,
               "per_r": [a.to_json() for a in self.attempts]}
        if seed is not None:
            out["seed"] = int(seed)
        return out


def _rank_one_fit(R, rng, iters=50):
    u = rng.random(R.shape[0])
    v = rng.random(R.shape[1])
    for _ in range(iters):
        u = np.maximum(R @ v, 0.0) / max(v @ v, 1e-300)
        v = np.maximum(R.T @ u, 0.0) / max(u @ u, 1e-300)
    return u, v


def ascending_init(M, r, rng, kicks=INIT_KICKS, sweeps=INIT_SWEEPS):
    """Grow a rank-r starting point one component at a time."""
    p, n = M.shape
    U = np.zeros((p, 0))
    V = np.zeros((0, n))
    for _ in range(r):
        best = None
        for attempt in range(kicks):
            u, v = _rank_one_fit(np.maximum(M - U @ V, 0.0), rng)
            U2 = np.ascontiguousarray(np.column_stack([U, u]))
            V2 = np.ascontiguousarray(np.vstack([V, v]))
            if attempt > 0:
                U2 *= rng.uniform(0.5, 1.5, U2.shape)
            err = hals_sweeps(M, U2, V2, sweeps)
            if best is None or err < best[2]:
                best = (U2, V2, err)
        U, V, _ = best
    return U, V


def random_init(M, r, rng):
    scale = np.sqrt(M.mean() / r)
    return rng.random((M.shape[0], r)) * scale, rng.random((r, M.shape[1])) * scale


def _kick(X, rng, frac=0.1):
    mask = rng.random(X.shape) < frac
    X[mask] *= rng.uniform(0.9, 1.1, mask.sum())
    # zeros are invariant under scaling: revive a few of them slightly
    zeros = mask & (X == 0)
    X[zeros] = rng.random(zeros.sum()) * 1e-3 * (X.max() if X.max() > 0 else 1.0)


def _one_restart(M, r, rng, exact_tol, init, polish_sweeps):
    nM = np.linalg.norm(M)
    U, V = ascending_init(M, r, rng) if init == "ascend" else random_init(M, r, rng)
    err = hals_sweeps(M, U, V, FIRST_SWEEPS) / nM
    done = FIRST_SWEEPS
    if err < PROMISING_TOL:
        while err >= exact_tol and done < FIRST_SWEEPS + polish_sweeps:
            new = hals_sweeps(M, U, V, KICK_WINDOW) / nM
            done += KICK_WINDOW
            if err - new < KICK_MIN_GAIN and new >= exact_tol:
                U2, V2 = U.copy(), V.copy()
                _kick(U2, rng)
                _kick(V2, rng)
                kicked = hals_sweeps(M, U2, V2, KICK_WINDOW) / nM
                done += KICK_WINDOW
                if kicked < new:
                    U, V, new = U2, V2, kicked
            err = new
    return U, V, float(err), done


def _tighten(M, U, V, err, exact_tol, budget=TIGHTEN_SWEEPS):
    """Keep sweeping a found witness until it sits well below the threshold."""
    nM = np.linalg.norm(M)
    done = 0
    while err >= TIGHTEN_FACTOR * exact_tol and done < budget:
        err = min(err, hals_sweeps(M, U, V, KICK_WINDOW) / nM)
        done += KICK_WINDOW
    return float(err), done


def search_exact_nmf(M, r, restarts=200, exact_tol=EXACT_TOL, seed=0,
                     init="ascend", polish_sweeps=POLISH_SWEEPS) -> ExactSearch:
    """Multi-start search for ``M = UV`` with ``U, V >= 0`` of inner size r.

    Restart i draws from the stream ``default_rng([seed, r, i])`` so the
    outcome of restart i does not depend on how many restarts are allowed.
    The first restart reaching ``exact_tol`` (relative) wins.
    """
    M = np.ascontiguousarray(as_matrix(M))
    check_nonnegative(M)
    if not 1 <= r <= min(M.shape):
        raise ValueError(f"r={r} out of range for shape {M.shape}")
    if not exact_tol > 0:
        raise ValueError("exact_tol must be > 0")
    if init not in ("ascend", "random"):
        raise ValueError(f"unknown init {init!r}")
    if np.linalg.norm(M) == 0:
        return ExactSearch(NmfModel(np.zeros((M.shape[0], r)), np.zeros((r, M.shape[1])),
                                    [(0, 0.0)], True), 0.0, 0, 0)
    best = np.inf
    for i in range(restarts):
        rng = np.random.default_rng([seed, r, i])
        U, V, err, sweeps = _one_restart(M, r, rng, exact_tol, init, polish_sweeps)
        best = min(best, err)
        if err < exact_tol:
            err, extra = _tighten(M, U, V, err, exact_tol)
            sweeps += extra
            logger.info("rank %d: exact factorization at restart %d (%.2e)", r, i, err)
            model = NmfModel(U=U, V=V, trace=[(sweeps, err)], converged=True)
            return ExactSearch(model, best, i + 1, i)
    logger.info("rank %d: no exact factorization in %d restarts (best %.2e)", r, restarts, best)
    return ExactSearch(None, best, restarts)


def exact_nmf(M, r, restarts=200, exact_tol=EXACT_TOL, seed=0, **kw) -> NmfModel | None:
    """Return an exact NMF of inner size r, or ``None`` if none was found."""
    return search_exact_nmf(M, r, restarts, exact_tol, seed, **kw).model


def trivial_factorization(M) -> NmfModel:
    """``M = M I`` or ``M = I M``, whichever has inner size ``min(p, n)``."""
    M = as_matrix(M)
    p, n = M.shape
    if p <= n:
        U, V = np.eye(p), M.copy()
    else:
        U, V = M.copy(), np.eye(n)
    return NmfModel(U=U, V=V, trace=[(0, 0.0)], converged=True)


def rank_plus_estimate(M, r_max=None, restarts=200, seed=0, r_min=None,
                       exact_tol=EXACT_TOL, **kw) -> RankPlusEstimate:
    """Bracket the nonnegative rank: ``lower <= rank_+(M) <= upper``.

    ``lower`` is the numeric rank. Ranks from ``max(lower, r_min)`` up to
    ``r_max`` are searched in increasing order and ``upper`` is the first
    one with an exact factorization. At ``r = min(p, n)`` the trivial
    factorization is used if the search fails there.
    """
    M = as_matrix(M)
    check_nonnegative(M)
    full = min(M.shape)
    r_max = full if r_max is None else int(r_max)
    if not 1 <= r_max <= full:
        raise ValueError(f"r_max={r_max} out of range (min(p, n) = {full})")
    lower = numeric_rank(M)
    start = max(lower, 1 if r_min is None else int(r_min))
    est = RankPlusEstimate(lower=lower, upper=None)
    for r in range(start, r_max + 1):
        res = search_exact_nmf(M, r, restarts, exact_tol, seed, **kw)
        model = res.model
        if model is None and r == full:
            model = trivial_factorization(M)
        # never trust the search's own bookkeeping for the witness
        if model is not None and np.linalg.norm(M) > 0:
            if relative_residual(M, model.U, model.V) >= exact_tol:
                model = None
        est.attempts.append(RankAttempt(r, res.restarts_used, res.best_residual, model is not None))
        if model is not None:
            est.upper = r
            est.witness = model
            break
    return est
