"""scikit-learn style wrappers.

Following the scikit-learn convention, ``X`` has one sample per row, so
``X`` is the transpose of the column-oriented data matrix ``M`` used by
the rest of the package: ``X ~ W H`` with ``W = V^T`` (what ``transform``
returns) and ``H = U^T`` (``components_``).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_non_negative

from .exactnmf import rank_plus_estimate
from .matcore import normalize_columns_l1
from .nmf import NmfConfig, factorize
from .nnls import NnlsConfig, nnls_fast_gradient
from .separable import abundances, pca_denoise
from .hsi import select_columns

TRANSFORM_NNLS = NnlsConfig(max_iters=500, tol=1e-10)


def _seed(random_state):
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    return int(check_random_state(random_state).randint(np.iinfo(np.int32).max))


def _validate(est, X, reset):
    X = check_array(X, dtype=np.float64)
    check_non_negative(X, f"{type(est).__name__} (input X)")
    if reset:
        est.n_features_in_ = X.shape[1]
    elif X.shape[1] != est.n_features_in_:
        raise ValueError(f"X has {X.shape[1]} features, but {type(est).__name__} "
                         f"is expecting {est.n_features_in_} features as input")
    return X


def _nnls_codes(components, X):
    """``argmin_{W >= 0} ||X - W H||`` solved column-wise on the transpose."""
    A = components.T
    B = X.T
    W0 = np.maximum(np.linalg.lstsq(A, B, rcond=None)[0], 0.0)
    return nnls_fast_gradient(A, B, W0, TRANSFORM_NNLS).T


class NMF(TransformerMixin, BaseEstimator):
    """Nonnegative matrix factorization ``X ~ W H``.

    Parameters
    ----------
    n_components : int
        Inner dimension r.
    solver : {"hals", "mu", "anls"}
    init : {"random", "spa"}
    max_iter : int
        Maximum number of outer (two-block) iterations.
    tol : float
        Threshold on the relative residual decrease averaged over the last
        five iterations.
    random_state : int, RandomState or None
    inner_iter : int
        Inner projected-gradient steps per block for ``solver="anls"``.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
    reconstruction_err_ : float
        Frobenius norm of ``X - W H`` at the end of ``fit``.
    n_iter_ : int
    converged_ : bool
    trace_ : list of (iteration, relative residual)
    """

    def __init__(self, n_components=2, solver="hals", init="random", max_iter=500,
                 tol=1e-7, random_state=0, inner_iter=20):
        self.n_components = n_components
        self.solver = solver
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.inner_iter = inner_iter

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        X = _validate(self, X, reset=True)
        cfg = NmfConfig(r=int(self.n_components), algorithm=self.solver, init=self.init,
                        max_outer_iters=int(self.max_iter), tol=float(self.tol),
                        seed=_seed(self.random_state), inner_iters=int(self.inner_iter))
        cfg.validate_for(X)
        model = factorize(X.T, cfg)
        self.components_ = model.U.T
        self.n_components_ = cfg.r
        self.n_iter_ = model.iterations
        self.converged_ = model.converged
        self.trace_ = model.trace
        self.reconstruction_err_ = float(np.linalg.norm(X.T - model.U @ model.V))
        return model.V.T

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = _validate(self, X, reset=False)
        return _nnls_codes(self.components_, X)

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        return check_array(X) @ self.components_


class SeparableNMF(TransformerMixin, BaseEstimator):
    """Near-separable NMF: the components are r of the training samples.

    Parameters
    ----------
    n_components : int
    method : {"spa", "spa-mve", "selfdict"}
    denoise : bool
        Project the normalized samples on their top ``n_components``
        principal directions before selection.
    refine : bool
        Run the vertex refinement passes after selection.
    penalty : float
        Fit penalty of the self-dictionary model.

    Attributes
    ----------
    indices_ : list of int
        Rows of the training ``X`` used as components.
    components_ : ndarray of shape (n_components, n_features)
    """

    def __init__(self, n_components=2, method="spa", denoise=False, refine=False, penalty=1000.0):
        self.n_components = n_components
        self.method = method
        self.denoise = denoise
        self.refine = refine
        self.penalty = penalty

    def fit(self, X, y=None):
        X = _validate(self, X, reset=True)
        r = int(self.n_components)
        if not 1 <= r <= min(X.shape):
            raise ValueError(f"n_components={r} out of range for X of shape {X.shape}")
        nd = normalize_columns_l1(X.T)
        Z = nd.Mn
        if self.denoise and r < min(Z.shape):
            Z = pca_denoise(Z, r)
        K = select_columns(Z, r, self.method, self.refine, self.penalty)
        self.indices_ = [int(nd.kept[k]) for k in K]
        self.components_ = X[self.indices_].copy()
        self.n_components_ = r
        return self

    def fit_transform(self, X, y=None):
        self.fit(X)
        X = check_array(X, dtype=np.float64)
        return abundances(X.T, self.indices_).T

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = _validate(self, X, reset=False)
        return _nnls_codes(self.components_, X)


class NonnegativeRank(BaseEstimator):
    """Bracket the nonnegative rank of X by multi-start exact NMF.

    Attributes
    ----------
    lower_ : int
        Numeric rank.
    upper_ : int or None
        Smallest inner size at which an exact factorization was found.
    witness_ : tuple (W, H) or None
        ``X = W H`` at ``upper_`` in sample-major orientation.
    attempts_ : list of RankAttempt
    """

    def __init__(self, max_rank=None, min_rank=None, restarts=200, tol=1e-9, random_state=0):
        self.max_rank = max_rank
        self.min_rank = min_rank
        self.restarts = restarts
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _validate(self, X, reset=True)
        est = rank_plus_estimate(X.T, r_max=self.max_rank, restarts=int(self.restarts),
                                 seed=_seed(self.random_state), r_min=self.min_rank,
                                 exact_tol=float(self.tol))
        self.lower_ = est.lower
        self.upper_ = est.upper
        self.witness_ = None if est.witness is None else (est.witness.V.T, est.witness.U.T)
        self.attempts_ = est.attempts
        return self
