import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmfkit.nnls import (
    DegenerateFactorError,
    NnlsConfig,
    hals_update_column,
    lipschitz_constant,
    nnls_fast_gradient,
)
from nmfkit.oracles import hals_column_grid, nnls_enumeration


def obj(A, B, X):
    return float(np.sum((B - A @ X) ** 2))


def test_identity_with_nonnegative_b_is_fixed_point(rng):
    B = rng.random((4, 3))
    assert np.array_equal(nnls_fast_gradient(np.eye(4), B, B), B)


def test_identity_clamps_negative_entries(rng):
    B = rng.standard_normal((5, 4))
    X = nnls_fast_gradient(np.eye(5), B, np.zeros((5, 4)), NnlsConfig(max_iters=50))
    assert np.allclose(X, np.maximum(B, 0), atol=1e-14)


def test_matches_sign_pattern_oracle(rng):
    A = rng.random((10, 3))
    B = rng.standard_normal((10, 4))
    X = nnls_fast_gradient(A, B, np.zeros((3, 4)), NnlsConfig(max_iters=5000, tol=1e-12))
    f_star = sum(nnls_enumeration(A, B[:, j])[1] for j in range(4))
    assert obj(A, B, X) == pytest.approx(f_star, rel=1e-6)


def test_enumeration_oracle_against_scipy(rng):
    # cross-check of the oracle itself with an unrelated active-set solver
    from scipy.optimize import nnls

    for _ in range(10):
        A, b = rng.random((8, 3)), rng.standard_normal(8)
        x_ref, rn = nnls(A, b)
        x, f = nnls_enumeration(A, b)
        assert f == pytest.approx(rn ** 2, rel=1e-9, abs=1e-12)


def test_zero_column_is_signaled():
    A = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateFactorError):
        nnls_fast_gradient(A, np.ones((2, 1)), np.zeros((2, 1)))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        nnls_fast_gradient(np.ones((3, 2)), np.ones((4, 1)), np.zeros((2, 1)))


def test_config_validation():
    with pytest.raises(ValueError):
        NnlsConfig(max_iters=0)
    with pytest.raises(ValueError):
        NnlsConfig(tol=0)


def test_lipschitz_matches_eigvalsh(rng):
    A = rng.random((9, 4))
    G = A.T @ A
    assert lipschitz_constant(G, n_iter=200) == pytest.approx(np.linalg.eigvalsh(G)[-1], rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_monotone_nonnegative_and_kkt(seed, iters):
    g = np.random.default_rng(seed)
    A = g.random((12, 4))
    B = g.standard_normal((12, 5))
    X0 = g.random((4, 5))
    cfg = NnlsConfig(max_iters=iters, tol=1e-6)
    X = nnls_fast_gradient(A, B, X0, cfg)
    assert np.all(X >= 0)
    assert obj(A, B, X) <= obj(A, B, X0) + 1e-12
    if iters == 60:
        # a long run on a well-conditioned problem reaches the KKT target
        X = nnls_fast_gradient(A, B, X0, NnlsConfig(max_iters=20000, tol=1e-6))
        G = A.T @ (A @ X - B)
        kkt0 = np.linalg.norm(np.minimum(X0, A.T @ (A @ X0 - B)))
        assert np.linalg.norm(np.minimum(X, G)) <= 1e-6 * kkt0


def test_hals_column_rank_one_exact(rng):
    u, v = rng.random(6) + 0.1, rng.random(5) + 0.1
    M = np.outer(u, v)
    U = rng.random((6, 1))
    assert np.allclose(hals_update_column(M, U, v[None, :], 0), u, atol=1e-12)


def test_hals_column_clamps_to_zero(rng):
    V = rng.random((1, 4))
    M = np.zeros((3, 4))
    U = rng.random((3, 1))
    assert np.array_equal(hals_update_column(M, U, V, 0), np.zeros(3))


def test_hals_column_matches_grid(rng):
    M, U, V = rng.random((6, 4)), rng.random((6, 3)), rng.random((3, 4))
    u = hals_update_column(M, U, V, 2)
    ug = hals_column_grid(M, U, V, 2, points=200001)
    step = (ug.max() + 1) / 200000
    assert np.max(np.abs(u - ug)) <= 2 * step


def test_hals_column_never_increases_objective(rng):
    for _ in range(20):
        M, U, V = rng.random((6, 4)), rng.random((6, 3)), rng.random((3, 4))
        before = np.linalg.norm(M - U @ V)
        U[:, 1] = hals_update_column(M, U, V, 1)
        assert np.linalg.norm(M - U @ V) <= before + 1e-12


def test_hals_column_zero_row():
    with pytest.raises(DegenerateFactorError):
        hals_update_column(np.ones((2, 2)), np.ones((2, 1)), np.zeros((1, 2)), 0)
