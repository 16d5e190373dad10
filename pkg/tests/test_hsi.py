import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmfkit.hsi import (
    GroundTruth,
    UnmixResult,
    empirical_snr,
    generate_synthetic,
    load_cube,
    save_cube,
    score,
    unmix,
)
from nmfkit.separable import spa
from nmfkit.matcore import normalize_columns_l1


def test_generation_invariants():
    cube, truth = generate_synthetic(30, 8, 6, 4, pure=True, snr_db=None, seed=1)
    assert cube.M.shape == (30, 48)
    assert np.all(cube.M >= 0) and np.all(truth.U >= 0) and np.all(truth.V >= 0)
    assert np.allclose(truth.V.sum(axis=0), 1.0, atol=1e-12)
    assert np.array_equal(truth.V[:, truth.pure_pixels], np.eye(4))
    assert np.linalg.norm(cube.M - truth.U @ truth.V) <= 1e-12 * np.linalg.norm(cube.M)


def test_generation_deterministic():
    a, ta = generate_synthetic(20, 5, 5, 3, snr_db=30, seed=9)
    b, tb = generate_synthetic(20, 5, 5, 3, snr_db=30, seed=9)
    assert np.array_equal(a.M, b.M) and np.array_equal(ta.U, tb.U)


def test_noiseless_spa_recovers_pure_pixels():
    cube, truth = generate_synthetic(40, 10, 10, 5, snr_db=np.inf, seed=2)
    assert truth.snr_db is None
    K = spa(normalize_columns_l1(cube.M).Mn, 5)
    assert set(K) == set(truth.pure_pixels)
    res = unmix(cube, 5, "spa", denoise=False)
    assert set(res.K) == set(truth.pure_pixels)


def test_rank_one_cube():
    cube, truth = generate_synthetic(10, 4, 4, 1, seed=0)
    assert np.all(truth.V == 1.0)
    cols = cube.M / cube.M[:, :1]
    assert np.allclose(cols, 1.0)


def test_empirical_snr_close_to_target():
    cube, truth = generate_synthetic(100, 50, 50, 5, snr_db=40, seed=0)
    assert abs(empirical_snr(cube, truth) - 40) < 0.5


def test_invalid_dims():
    with pytest.raises(ValueError):
        generate_synthetic(3, 2, 2, 4)


@pytest.mark.parametrize("method", ["spa", "spa-mve", "selfdict"])
def test_unmix_methods_on_noisy_cube(method):
    cube, truth = generate_synthetic(50, 12, 12, 4, snr_db=40, seed=3)
    res = unmix(cube, 4, method)
    sc = score(res, truth)
    assert sc["index_recovery"] == 1.0
    assert sc["abundance_rmse"] < 0.05


def test_refinement_never_hurts_and_meets_rmse():
    cube, truth = generate_synthetic(100, 20, 20, 5, snr_db=40, seed=4)
    raw = unmix(cube, 5, "spa", refine=False)
    ref = unmix(cube, 5, "spa", refine=True)
    assert ref.relative_residual <= raw.relative_residual + 1e-12
    assert score(ref, truth)["abundance_rmse"] < 0.05


def test_unmix_rejects_bad_rank():
    cube, _ = generate_synthetic(10, 3, 3, 2, seed=0)
    with pytest.raises(ValueError):
        unmix(cube, 0)


def _as_result(truth, K=None):
    return UnmixResult(U=truth.U.copy(), V=truth.V.copy(), K=K or truth.pure_pixels,
                       residual=0.0, relative_residual=0.0)


def test_score_identity_and_noise():
    _, truth = generate_synthetic(30, 10, 10, 4, seed=5)
    sc = score(_as_result(truth), truth)
    assert sc["spectral_angle_mean"] == pytest.approx(0.0, abs=1e-7)
    assert sc["abundance_rmse"] == 0.0 and sc["index_recovery"] == 1.0
    noisy = _as_result(truth)
    noisy.V = noisy.V + 1e-3 * np.random.default_rng(0).standard_normal(noisy.V.shape)
    assert 0.5e-3 <= score(noisy, truth)["abundance_rmse"] <= 2e-3


@given(st.permutations(range(4)))
def test_score_permutation_invariant(perm):
    _, truth = generate_synthetic(30, 6, 6, 4, seed=6)
    base = _as_result(truth)
    base.V = base.V + 0.01
    base.U = base.U * 1.01
    perm = list(perm)
    shuffled = UnmixResult(U=base.U[:, perm], V=base.V[perm], K=base.K, residual=0.0, relative_residual=0.0)
    a, b = score(base, truth), score(shuffled, truth)
    assert a["abundance_rmse"] == pytest.approx(b["abundance_rmse"], rel=1e-12)
    assert a["spectral_angle_mean"] == pytest.approx(b["spectral_angle_mean"], rel=1e-9, abs=1e-12)


def test_score_rank_mismatch():
    _, truth = generate_synthetic(20, 4, 4, 3, seed=0)
    res = UnmixResult(U=np.ones((20, 2)), V=np.ones((2, 16)), K=[0, 1], residual=0, relative_residual=0)
    with pytest.raises(ValueError):
        score(res, truth)


def test_cube_files_roundtrip(tmp_path):
    cube, truth = generate_synthetic(12, 4, 3, 2, snr_db=35, seed=8)
    save_cube(tmp_path, cube, truth)
    c2, t2 = load_cube(tmp_path)
    assert np.array_equal(c2.M, cube.M) and np.array_equal(t2.V, truth.V)
    assert t2.pure_pixels == truth.pure_pixels and c2.snr_db == 35
