import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nmfkit.geometry import hexagon_factors_inf, hexagon_matrix, hexagon_matrix_inf
from nmfkit.matcore import (
    DimensionError,
    as_matrix,
    format_matrix_csv,
    loads_matrix,
    matrix_from_json,
    matrix_to_json,
    normalize_columns_l1,
    numeric_rank,
    parse_matrix_csv,
    relative_residual,
    residual,
)
from nmfkit.oracles import residual_bruteforce

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_residual_zero_on_exact_integer_factorization():
    U, V = hexagon_factors_inf()
    assert residual(hexagon_matrix_inf(), U, V) == 0.0


def test_residual_of_zero_factors_is_norm_of_m(rng):
    M = rng.random((4, 5))
    assert residual(M, np.zeros((4, 2)), np.zeros((2, 5))) == pytest.approx(np.linalg.norm(M), rel=1e-15)


def test_residual_matches_elementwise_oracle(rng):
    M, U, V = rng.random((3, 3)), rng.random((3, 2)), rng.random((2, 3))
    assert residual(M, U, V) == pytest.approx(residual_bruteforce(M, U, V), abs=1e-12)


def test_residual_dimension_mismatch():
    with pytest.raises(DimensionError):
        residual(np.ones((3, 3)), np.ones((3, 2)), np.ones((3, 3)))


def test_relative_residual_rejects_zero_matrix():
    with pytest.raises(ValueError):
        relative_residual(np.zeros((2, 2)), np.ones((2, 1)), np.ones((1, 2)))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_residual_squared_is_sum_of_squares(p, n, r, seed):
    g = np.random.default_rng(seed)
    M, U, V = g.standard_normal((p, n)), g.standard_normal((p, r)), g.standard_normal((r, n))
    direct = sum((M[i, j] - U[i] @ V[:, j]) ** 2 for i in range(p) for j in range(n))
    assert residual(M, U, V) ** 2 == pytest.approx(direct, rel=1e-10, abs=1e-300)


def test_normalize_identity_is_unchanged():
    nd = normalize_columns_l1(np.eye(3))
    assert np.array_equal(nd.Mn, np.eye(3))
    assert np.array_equal(nd.scale, np.ones(3))
    assert nd.removed == []


def test_normalize_two_two_column():
    nd = normalize_columns_l1([[2.0], [2.0]])
    assert np.array_equal(nd.Mn[:, 0], [0.5, 0.5])
    assert nd.scale[0] == 4.0


def test_normalize_drops_zero_column(rng):
    M = rng.random((4, 3))
    M[:, 1] = 0
    nd = normalize_columns_l1(M)
    assert nd.removed == [1]
    assert list(nd.kept) == [0, 2]
    assert np.allclose(nd.Mn.sum(axis=0), 1.0, atol=1e-12)


def test_normalize_rejects_negative():
    with pytest.raises(ValueError):
        normalize_columns_l1([[1.0, -1.0]])


# subnormal inputs would lose precision on division; they are excluded
@given(arrays(np.float64, (5, 6), elements=st.one_of(st.just(0.0), st.floats(1e-100, 100))))
def test_normalize_then_rescale_roundtrip(M):
    nd = normalize_columns_l1(M)
    assert np.all(nd.scale > 0)
    assert np.allclose(nd.Mn.sum(axis=0), 1.0, atol=1e-12)
    kept = M[:, nd.kept]
    assert np.allclose(nd.rescale(), kept, rtol=1e-14, atol=0)


def test_normalize_power_of_two_scales_bitwise():
    M = np.array([[1.0, 3.0], [1.0, 5.0], [2.0, 0.0]])  # column sums 4 and 8
    nd = normalize_columns_l1(M)
    assert np.array_equal(nd.rescale(), M)


def test_numeric_rank_examples(rng):
    assert numeric_rank(hexagon_matrix(2.0)) == 3
    assert numeric_rank(np.eye(4)) == 4
    u, v = rng.random(7) + 0.1, rng.random(5) + 0.1
    assert numeric_rank(np.outer(u, v)) == 1
    assert numeric_rank(np.zeros((3, 3))) == 0


def test_numeric_rank_bad_tol():
    with pytest.raises(ValueError):
        numeric_rank(np.eye(2), tol=0)


@given(st.integers(0, 2**32 - 1))
def test_numeric_rank_permutation_invariant(seed):
    g = np.random.default_rng(seed)
    r = int(g.integers(1, 5))
    M = g.random((8, r)) @ g.random((r, 7))
    P = M[g.permutation(8)][:, g.permutation(7)]
    assert numeric_rank(P) == numeric_rank(M) == r


def test_as_matrix_rejects_nonfinite_and_3d():
    with pytest.raises(ValueError):
        as_matrix([[np.nan]])
    with pytest.raises(DimensionError):
        as_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(DimensionError):
        as_matrix(np.zeros((0, 3)))


def test_csv_header_and_ragged():
    assert parse_matrix_csv("# 2 2\n1,2\n3,4\n").shape == (2, 2)
    with pytest.raises(ValueError, match="ragged"):
        parse_matrix_csv("1,2\n3\n")
    with pytest.raises(ValueError, match="header"):
        parse_matrix_csv("# 3 2\n1,2\n3,4\n")


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_csv_and_json_roundtrip_bitwise(M):
    assert np.array_equal(parse_matrix_csv(format_matrix_csv(M)), M)
    assert np.array_equal(loads_matrix(json.dumps(matrix_to_json(M))), M)


def test_json_length_check():
    with pytest.raises(ValueError):
        matrix_from_json({"rows": 2, "cols": 2, "data": [1, 2, 3]})
