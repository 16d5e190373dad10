import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmfkit.geometry import hexagon_matrix
from nmfkit.matcore import normalize_columns_l1
from nmfkit.oracles import project_row_grid
from nmfkit.separable import (
    RankDeficiencyError,
    SelfDictConfig,
    SeparableResult,
    abundances,
    default_candidates,
    khachiyan_mve,
    mve_precondition,
    pca_denoise,
    project_rows,
    refine_vertices,
    selection_volume,
    self_dictionary,
    separable_result,
    solve_self_dictionary,
    spa,
    spa_mve,
)
from nmfkit.synthetic import separable_instance


def test_spa_simplex_vertices(rng):
    A = rng.dirichlet(np.ones(4), size=10).T
    M = normalize_columns_l1(np.hstack([np.eye(4), A])).Mn
    assert sorted(spa(M, 4)) == [0, 1, 2, 3]


def _greedy_sequence(M, K):
    """Residual norms of the picks, in order, as SPA measures them."""
    R = M.copy()
    out = []
    for k in K:
        out.append(np.linalg.norm(R[:, k]))
        u = R[:, k] / np.linalg.norm(R[:, k])
        R = R - np.outer(u, u @ R)
    return out


def test_spa_hexagon_matches_exhaustive_greedy():
    M = normalize_columns_l1(hexagon_matrix(2.0)).Mn
    K = spa(M, 3)
    # exhaustive: over all ordered triples, the one maximizing the greedy
    # criterion lexicographically (first pick, then second, then third)
    best = max(itertools.permutations(range(6), 3),
               key=lambda T: [round(x, 12) for x in _greedy_sequence(M, T)] + [-T[0], -T[1], -T[2]])
    assert np.allclose(_greedy_sequence(M, K), _greedy_sequence(M, best), atol=1e-12)
    assert len(set(K)) == 3


def test_spa_planted_recovery_50_seeds():
    for s in range(50):
        inst = separable_instance(s)
        assert sorted(spa(inst.M, inst.r)) == inst.K


def test_spa_rank_deficiency_reports_partial_picks():
    M = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
    with pytest.raises(RankDeficiencyError) as info:
        spa(M, 3)
    assert sorted(info.value.indices) == [0, 1]


def test_spa_tie_breaks_to_lowest_index():
    M = np.eye(3)[:, [0, 0, 1, 2]]
    assert spa(M, 1) == [0]


@given(st.integers(0, 2**32 - 1))
def test_spa_permutation_equivariant(seed):
    g = np.random.default_rng(seed)
    M = normalize_columns_l1(g.random((8, 15))).Mn
    perm = g.permutation(15)
    K = spa(M, 4)
    Kp = spa(M[:, perm], 4)
    assert [int(perm[k]) for k in Kp] == K


def test_pca_denoise_examples(rng):
    M = rng.random((6, 5))
    assert np.allclose(pca_denoise(M, 5), M, atol=1e-10)
    u, v = rng.random(6), rng.random(5)
    assert np.allclose(pca_denoise(np.outer(u, v), 1), np.outer(u, v), atol=1e-14)
    clean = rng.random((20, 3)) @ rng.random((3, 30))
    noise = 0.01 * rng.standard_normal(clean.shape)
    assert np.linalg.norm(pca_denoise(clean + noise, 3) - clean) < np.linalg.norm(noise)
    with pytest.raises(ValueError):
        pca_denoise(M, 6)


def test_khachiyan_contains_points_and_sphere_is_isotropic(rng):
    Z = rng.standard_normal((3, 4000))
    Z /= np.linalg.norm(Z, axis=0)
    A, u, _ = khachiyan_mve(Z)
    q = np.einsum("ij,ij->j", Z, A @ Z)
    assert q.max() <= 1 + 1e-5
    L = mve_precondition(Z, 3)
    c = np.trace(L) / 3
    assert np.linalg.norm(L - c * np.eye(3), 2) <= 0.05 * c


def test_mve_axis_ratio_for_antipodal_clusters(rng):
    # clusters at +-(3, 0) and +-(0, 1): semi-axes ratio 3
    pts = []
    for c in ([3.0, 0.0], [0.0, 1.0]):
        for sgn in (1, -1):
            pts.append(sgn * np.array(c)[:, None] + 1e-3 * rng.standard_normal((2, 50)))
    Q = np.hstack(pts)
    A, _, _ = khachiyan_mve(Q, tol=1e-8, max_iter=100000)
    w = np.linalg.eigvalsh(A)
    ratio = np.sqrt(w[-1] / w[0])
    assert ratio == pytest.approx(3.0, rel=0.1)


def test_mve_degenerate_raises():
    with pytest.raises(ValueError):
        mve_precondition(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]), 2)


def test_spa_mve_not_worse_on_anisotropic_noisy_data():
    plain = pre = 0
    for s in range(50):
        g = np.random.default_rng(s)
        U = g.random((10, 4)) * np.array([5.0, 1.0, 1.0, 0.3])
        H = g.dirichlet(np.ones(4), size=60).T
        M = U @ np.hstack([np.eye(4), H])
        M = np.maximum(M + 0.002 * g.standard_normal(M.shape) * M.mean(), 0)
        Mn = normalize_columns_l1(M).Mn
        plain += sorted(spa(Mn, 4)) == [0, 1, 2, 3]
        pre += sorted(spa_mve(Mn, 4)) == [0, 1, 2, 3]
    assert pre >= plain


def test_refine_vertices_fixed_points():
    inst = separable_instance(1)
    K = spa(inst.M, inst.r)
    assert refine_vertices(inst.M, K) == K


def test_refine_vertices_never_decreases_volume(rng):
    for s in range(10):
        inst = separable_instance(s)
        M = inst.M.copy()
        dup = M[:, inst.K[0]] + 1e-3 * rng.standard_normal(M.shape[0])
        M = np.hstack([M, np.abs(dup)[:, None]])
        M = normalize_columns_l1(M).Mn
        K0 = [M.shape[1] - 1] + list(rng.choice(M.shape[1] - 1, 4, replace=False))
        K1 = refine_vertices(M, K0)
        assert selection_volume(M, K1) >= selection_volume(M, K0) * (1 - 1e-12)


def test_abundances_examples(rng):
    inst = separable_instance(2)
    V = abundances(inst.M, inst.K)
    assert np.linalg.norm(inst.M - inst.M[:, inst.K] @ V) < 1e-8
    assert np.allclose(V[:, inst.K], np.eye(inst.r), atol=1e-8)
    Q = rng.random((4, 4)) + np.eye(4)
    assert np.allclose(abundances(Q, range(4)), np.eye(4), atol=1e-8)


def test_abundances_noisy_bound(rng):
    U = rng.random((15, 3))
    clean = U @ np.hstack([np.eye(3), rng.dirichlet(np.ones(3), 20).T])
    noise = 0.01 * rng.standard_normal(clean.shape)
    M = clean + noise
    res = separable_result(M, [0, 1, 2])
    assert res.residual <= 1.1 * np.linalg.norm(noise) + np.linalg.norm(noise[:, :3]) * 2


def test_separable_result_rejects_duplicates():
    with pytest.raises(ValueError):
        SeparableResult(K=[1, 1], V=np.zeros((2, 2)), residual=0.0)


# -- self-dictionary --------------------------------------------------------

@given(st.integers(0, 2**32 - 1))
def test_project_rows_feasible_and_matches_grid(seed):
    g = np.random.default_rng(seed)
    Y = g.uniform(-0.5, 1.5, (4, 6))
    d = g.integers(0, 6, 4)
    X = project_rows(Y, d)
    rows = np.arange(4)
    assert np.all(X >= 0) and np.all(X[rows, d] <= 1)
    assert np.all(X <= X[rows, d][:, None])
    for i in range(4):
        assert np.linalg.norm(X[i] - project_row_grid(Y[i], d[i])) <= 1e-3


def test_project_rows_is_a_projection(rng):
    Y = rng.uniform(-1, 2, (50, 7))
    d = rng.integers(0, 7, 50)
    X = project_rows(Y, d)
    assert np.allclose(project_rows(X, d), X, atol=1e-14)


def test_projection_matches_qp_solver(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(10):
        y = rng.uniform(-0.5, 1.5, 6)
        j = int(rng.integers(6))
        x = cp.Variable(6)
        cons = [x >= 0, x <= x[j], x[j] <= 1]
        cp.Problem(cp.Minimize(cp.sum_squares(x - y)), cons).solve()
        assert np.linalg.norm(project_rows(y[None], [j])[0] - x.value) < 1e-5


def test_self_dictionary_noiseless_support():
    inst = separable_instance(4, n=40)
    cfg = SelfDictConfig(candidates=tuple(range(inst.M.shape[1])), penalty=1000.0)
    X, C, trace = solve_self_dictionary(inst.M, cfg)
    diag = X[np.arange(len(C)), C]
    assert np.all(diag[inst.K] > 0.9)
    assert np.all(np.delete(diag, inst.K) < 0.1)
    res = self_dictionary(inst.M, cfg, inst.r)
    assert sorted(res.K) == sorted(spa(inst.M, inst.r)) == inst.K


def test_self_dictionary_feasible_and_monotone():
    inst = separable_instance(5, snr_db=30)
    cfg = SelfDictConfig(candidates=tuple(default_candidates(inst.M, 5)))
    X, C, trace = solve_self_dictionary(inst.M, cfg)
    rows = np.arange(len(C))
    assert np.all(X >= 0) and np.all(X <= X[rows, C][:, None]) and np.all(X[rows, C] <= 1)
    assert np.all(np.diff(trace) <= 1e-12 * max(abs(trace[0]), 1))


def test_self_dictionary_matches_convex_solver_on_tiny_instance(rng):
    cp = pytest.importorskip("cvxpy")
    M = normalize_columns_l1(rng.random((3, 4))).Mn
    mu = 10.0
    cfg = SelfDictConfig(candidates=(0, 1, 2, 3), penalty=mu, max_iters=200000, tol=1e-13)
    X, C, trace = solve_self_dictionary(M, cfg)
    Z = cp.Variable((4, 4))
    cons = [Z >= 0] + [Z[i, :] <= Z[i, i] for i in range(4)] + [Z[i, i] <= 1 for i in range(4)]
    prob = cp.Problem(cp.Minimize(cp.trace(Z) + mu * cp.sum_squares(M - M @ Z)), cons)
    prob.solve()
    assert trace[-1] == pytest.approx(prob.value, abs=1e-6)


def test_self_dictionary_multistart_oracle(rng):
    """Independent dense projected gradient from 100 random starts."""
    M = normalize_columns_l1(rng.random((3, 4))).Mn
    mu = 10.0
    cfg = SelfDictConfig(candidates=(0, 1, 2, 3), penalty=mu, max_iters=200000, tol=1e-13)
    _, C, trace = solve_self_dictionary(M, cfg)
    G = M.T @ M
    L = 2 * mu * np.linalg.eigvalsh(G)[-1]
    d = np.arange(4)

    def f(Z):
        return np.trace(Z) + mu * np.sum((M - M @ Z) ** 2)

    best = np.inf
    for _ in range(100):
        Z = project_rows(rng.random((4, 4)), d)
        for _ in range(3000):
            Z = project_rows(Z - (np.eye(4) + 2 * mu * (G @ Z - M.T @ M)) / L, d)
        best = min(best, f(Z))
    assert abs(trace[-1] - best) < 1e-6


def test_self_dictionary_errors(rng):
    with pytest.raises(ValueError):
        SelfDictConfig(candidates=(), penalty=1.0)
    with pytest.raises(ValueError):
        SelfDictConfig(candidates=(0,), penalty=0.0)
    with pytest.raises(ValueError):
        self_dictionary(rng.random((3, 5)), SelfDictConfig(candidates=(0, 1)), 3)


def test_selection_rules_differ_only_on_outliers():
    inst = separable_instance(0, snr_db=30, n_outliers=2)
    cand = tuple(default_candidates(inst.M, 5))
    diag = self_dictionary(inst.M, SelfDictConfig(cand, selection="diagonal"), 5).K
    usage = self_dictionary(inst.M, SelfDictConfig(cand), 5).K
    assert set(inst.outliers) <= set(diag)
    assert not set(inst.outliers) & set(usage)
    assert sorted(usage) == inst.K
