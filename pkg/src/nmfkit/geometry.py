"""Polytopes behind exact NMF.

Nested-polygon view of rank-3 nonnegative matrices, slack matrices of
polytopes, and the check that an exact NMF of a slack matrix gives an
extended formulation ``Q = {(x, y) : b - A x = U y, y >= 0}``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .matcore import as_matrix, check_nonnegative, numeric_rank

SLACK_TOL = 1e-10
LIFT_TOL = 1e-8

# Integer factors of the limiting hexagon matrix (a -> infinity).
HEXAGON_U = np.array([
    [1, 0, 0, 1, 0],
    [2, 0, 0, 0, 1],
    [1, 0, 1, 0, 0],
    [0, 1, 1, 0, 0],
    [0, 2, 0, 0, 1],
    [0, 1, 0, 1, 0],
], dtype=np.int64)
HEXAGON_V = np.array([
    [0, 0, 0, 1, 1, 0],
    [1, 1, 0, 0, 0, 0],
    [1, 0, 0, 0, 1, 2],
    [0, 1, 2, 1, 0, 0],
    [0, 0, 1, 0, 0, 1],
], dtype=np.int64)


def _cyclic(row):
    row = np.asarray(row)
    return np.array([np.roll(row, i) for i in range(len(row))])


def hexagon_matrix(a: float) -> np.ndarray:
    """The 6x6 nested-hexagons matrix for a > 1.

    Rows are cyclic shifts of ``(1, a, 2a-1, 2a-1, a, 1) / a``; its rank is
    3 and the two hexagons have circumradius ratio ``(a - 1) / a``.
    """
    if not a > 1:
        raise ValueError("a must be > 1")
    return _cyclic([1.0, a, 2 * a - 1, 2 * a - 1, a, 1.0]) / a


def hexagon_matrix_inf(dtype=np.float64) -> np.ndarray:
    """Limit of ``hexagon_matrix(a)`` as a grows: cyclic ``(0, 1, 2, 2, 1, 0)``."""
    return _cyclic(np.array([0, 1, 2, 2, 1, 0], dtype=dtype))


def hexagon_factors_inf():
    """The integer rank-5 factorization of ``hexagon_matrix_inf()``."""
    return HEXAGON_U.copy(), HEXAGON_V.copy()


@dataclass
class PolytopeH:
    """``P = {x : b - A x >= 0}`` with its vertex list (one per row)."""

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        self.vertices = as_matrix(self.vertices, "vertices")
        if self.A.shape[0] != self.b.size or self.vertices.shape[1] != self.A.shape[1]:
            raise ValueError("inconsistent polytope dimensions")

    def to_json(self):
        return {"A": self.A.tolist(), "b": self.b.tolist(), "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["A"], float), np.array(obj["b"], float), np.array(obj["vertices"], float))

    def unit_rows(self):
        """Copy with every facet normal scaled to unit length."""
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero facet normal")
        return PolytopeH(self.A / norms[:, None], self.b / norms, self.vertices)


def regular_polygon(n: int) -> PolytopeH:
    """Regular n-gon inscribed in the unit circle.

    Vertex j is at angle ``2 pi j / n``; facet i supports the edge from
    vertex i to vertex i+1.
    """
    if n < 3:
        raise ValueError("a polygon needs n >= 3")
    theta = 2 * np.pi * np.arange(n) / n
    W = np.column_stack([np.cos(theta), np.sin(theta)])
    mid = theta + np.pi / n
    A = np.column_stack([np.cos(mid), np.sin(mid)])
    b = np.full(n, np.cos(np.pi / n))
    return PolytopeH(A, b, W)


def slack_matrix(P: PolytopeH, tol: float = SLACK_TOL) -> np.ndarray:
    """``S[i, j] = b_i - A[i] w_j`` with unit facet normals."""
    Pu = P.unit_rows()
    S = Pu.b[:, None] - Pu.A @ Pu.vertices.T
    if S.min() < -tol:
        i, j = np.unravel_index(np.argmin(S), S.shape)
        raise ValueError(f"vertex {j} violates facet {i} by {-S[i, j]:.3g}")
    S[S < tol] = 0.0
    return S


def match_scaled_permutation(S, T, tol=1e-9):
    """Find ``S[i, :] = scale[i] * T[row[i], col]`` if it exists.

    Rows are compared after scaling each to unit max; column orders are
    searched exhaustively (intended for small matrices, n <= 8).
    Returns ``(row, col, scale)`` index arrays or ``None``.
    """
    S = as_matrix(S)
    T = as_matrix(T)
    if S.shape != T.shape or S.shape[1] > 8:
        return None
    Sn = S / S.max(axis=1, keepdims=True)
    Tn = T / T.max(axis=1, keepdims=True)
    for col in itertools.permutations(range(T.shape[1])):
        Tc = Tn[:, col]
        row = []
        for i in range(S.shape[0]):
            hits = np.flatnonzero(np.all(np.abs(Tc - Sn[i]) <= tol, axis=1))
            free = [h for h in hits if h not in row]
            if not free:
                break
            row.append(free[0])
        else:
            row = np.array(row)
            scale = S.max(axis=1) / T[row].max(axis=1)
            return row, np.array(col), scale
    return None


@dataclass
class LiftReport:
    factorization_residual: float
    factorization_ok: bool
    vertices_lift: bool
    failed_vertices: list
    factors_nonnegative: bool
    n_inequalities: int
    certificate: str = field(default="")

    @property
    def passed(self):
        return self.factorization_ok and self.vertices_lift and self.factors_nonnegative

    def to_json(self):
        return {
            "factorization_residual": self.factorization_residual,
            "factorization_ok": self.factorization_ok,
            "vertices_lift": self.vertices_lift,
            "failed_vertices": self.failed_vertices,
            "factors_nonnegative": self.factors_nonnegative,
            "n_inequalities": self.n_inequalities,
            "certificate": self.certificate,
            "passed": self.passed,
        }


def verify_lift(P: PolytopeH, U, V, tol: float = LIFT_TOL) -> LiftReport:
    """Check that ``S_P = U V`` yields the extended formulation Q.

    Checks (i) the factorization residual, (ii) that every vertex lifts,
    i.e. ``b - A w_j = U V[:, j]`` with ``V[:, j] >= 0``, and (iii) that
    ``U >= 0``, which makes ``Q_x`` a subset of P (a structural fact, no
    numerics involved).
    """
    S = slack_matrix(P)
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if U.shape[0] != S.shape[0] or V.shape[1] != S.shape[1] or U.shape[1] != V.shape[0]:
        raise ValueError(f"factor shapes U{U.shape}, V{V.shape} do not fit slack {S.shape}")
    Pu = P.unit_rows()
    resid = float(np.abs(S - U @ V).max())
    failed = []
    for j, w in enumerate(Pu.vertices):
        lhs = Pu.b - Pu.A @ w
        if np.abs(lhs - U @ V[:, j]).max() > tol or np.any(V[:, j] < 0):
            failed.append(j)
    u_ok = bool(np.all(U >= 0))
    note = ("U >= 0 and y >= 0 give b - A x = U y >= 0, so Q_x lies inside P"
            if u_ok else "U has negative entries: Q_x may leave P")
    return LiftReport(
        factorization_residual=resid,
        factorization_ok=resid <= tol,
        vertices_lift=not failed,
        failed_vertices=failed,
        factors_nonnegative=u_ok,
        n_inequalities=U.shape[1],
        certificate=note,
    )


@dataclass
class NppInstance:
    """Rank-3 exact NMF as nested polygons in a 2-D plane.

    ``inner`` holds the normalized data columns and ``outer`` the
    counterclockwise vertices of the simplex slice, both in the plane
    coordinates ``x = anchor + basis @ t``.
    """

    inner: np.ndarray
    outer: np.ndarray
    anchor: np.ndarray
    basis: np.ndarray

    def to_ambient(self, T):
        return self.anchor[:, None] + self.basis @ np.asarray(T).T

    def circumradius_ratio(self):
        """Inner over outer circumradius, both about the outer centroid."""
        center = self.outer.mean(axis=0)
        r_in = np.linalg.norm(self.inner - center, axis=1).max()
        r_out = np.linalg.norm(self.outer - center, axis=1).max()
        return float(r_in / r_out)


def _ccw(points):
    x, y = points[:, 0], points[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    return points if area > 0 else points[::-1]


def halfplane_polygon(G, h, tol=SLACK_TOL):
    """Vertices (counterclockwise) of ``{t : G t <= h}`` with 0 inside.

    Uses the polar dual: constraint i becomes the point ``G[i] / h[i]``,
    the facets of the bounded region are the vertices of the dual hull.
    """
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    keep = np.linalg.norm(G, axis=1) > tol
    G, h = G[keep], h[keep]
    if np.any(h <= tol):
        raise ValueError("origin is not strictly inside the region")
    D = G / h[:, None]
    hull = ConvexHull(D)
    if np.any(hull.equations[:, 2] > -tol):
        raise ValueError("the region is unbounded")
    order = hull.vertices
    verts = []
    for i, j in zip(order, np.roll(order, -1)):
        verts.append(np.linalg.solve(np.vstack([D[i], D[j]]), np.ones(2)))
    return _ccw(np.array(verts))


def npp_extract(M, rank_tol=1e-9) -> NppInstance:
    """Nested polygon pair for a nonnegative rank-3 matrix.

    Columns are l1-normalized; the plane ``col(M) & {1^T x = 1}`` is
    parameterized by an orthonormal basis anchored at the column centroid.
    The outer polygon is the slice of the nonnegative orthant.
    """
    M = as_matrix(M)
    check_nonnegative(M)
    sums = M.sum(axis=0)
    if np.any(sums <= 0):
        raise ValueError("M has zero columns")
    rk = numeric_rank(M, rank_tol)
    if rk != 3:
        raise ValueError(f"npp_extract needs rank 3, got {rk}")
    Mn = M / sums
    anchor = Mn.mean(axis=1)
    D = Mn - anchor[:, None]
    W, _, _ = np.linalg.svd(D, full_matrices=False)
    basis = W[:, :2]
    inner = (basis.T @ D).T
    # anchor + basis t >= 0  <=>  -basis t <= anchor
    outer = halfplane_polygon(-basis, anchor)
    return NppInstance(inner=inner, outer=outer, anchor=anchor, basis=basis)
