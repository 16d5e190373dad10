"""Dense matrix helpers shared by the solvers.

Matrices are plain 2-D ``float64`` numpy arrays. Data matrices follow the
column convention ``M`` (p x n): one sample (pixel, document, vertex) per
column, factorized as ``M ~ U @ V`` with ``U`` p x r and ``V`` r x n.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-9
ZERO_COLUMN_TOL = 1e-15


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(M, name="M", copy=False) -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array."""
    A = np.array(M, dtype=np.float64, copy=copy) if copy else np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


def check_nonnegative(M: np.ndarray, name="M") -> None:
    if np.any(M < 0):
        raise ValueError(f"{name} has negative entries (min {M.min():.3g})")


def _check_factors(M, U, V):
    M, U, V = as_matrix(M), as_matrix(U, "U"), as_matrix(V, "V")
    if U.shape[0] != M.shape[0] or V.shape[1] != M.shape[1] or U.shape[1] != V.shape[0]:
        raise DimensionError(
            f"incompatible shapes M{M.shape}, U{U.shape}, V{V.shape}"
        )
    return M, U, V


def residual(M, U, V) -> float:
    """Frobenius norm ``||M - U V||_F``."""
    M, U, V = _check_factors(M, U, V)
    return float(np.linalg.norm(M - U @ V))


def relative_residual(M, U, V) -> float:
    """``||M - U V||_F / ||M||_F``; undefined for ``M = 0``."""
    M, U, V = _check_factors(M, U, V)
    nM = np.linalg.norm(M)
    if nM == 0:
        raise ValueError("relative residual undefined for a zero matrix")
    return float(np.linalg.norm(M - U @ V) / nM)


@dataclass
class NormalizedData:
    """Column-l1-normalized data with the bookkeeping to undo it.

    Attributes
    ----------
    Mn : ndarray (p, n_kept)
        Retained columns, each summing to one.
    scale : ndarray (n_kept,)
        l1 norms of the retained columns.
    removed : list of int
        Indices of the (numerically) zero columns that were dropped.
    kept : ndarray of int
        Original indices of the retained columns.
    """

    Mn: np.ndarray
    scale: np.ndarray
    removed: list = field(default_factory=list)
    kept: np.ndarray = None

    def rescale(self) -> np.ndarray:
        return self.Mn * self.scale


def normalize_columns_l1(M) -> NormalizedData:
    M = as_matrix(M)
    check_nonnegative(M)
    sums = M.sum(axis=0)
    thresh = ZERO_COLUMN_TOL * sums.max() if sums.max() > 0 else 0.0
    keep = sums > thresh
    kept = np.flatnonzero(keep)
    removed = [int(j) for j in np.flatnonzero(~keep)]
    scale = sums[keep]
    return NormalizedData(Mn=M[:, keep] / scale, scale=scale, removed=removed, kept=kept)


def numeric_rank(M, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = as_matrix(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


# -- file formats -----------------------------------------------------------

def parse_matrix_csv(text: str) -> np.ndarray:
    """Parse the matrix CSV format.

    One row per line, comma separated. A leading ``# rows cols`` comment is
    optional and, when present, is checked against the body.
    """
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if header is None and not rows and len(parts) == 2 and all(p.isdigit() for p in parts):
                header = (int(parts[0]), int(parts[1]))
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ValueError("no matrix rows found")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"ragged row {i}: {len(row)} values, expected {width}")
    A = np.array(rows, dtype=np.float64)
    if header is not None and header != A.shape:
        raise ValueError(f"header says {header}, body is {A.shape}")
    return as_matrix(A)


def format_matrix_csv(M, header=True) -> str:
    M = as_matrix(M)
    buf = io.StringIO()
    if header:
        buf.write(f"# {M.shape[0]} {M.shape[1]}\n")
    for row in M:
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    return buf.getvalue()


def matrix_to_json(M) -> dict:
    M = as_matrix(M)
    return {"rows": M.shape[0], "cols": M.shape[1], "data": [float(x) for x in M.ravel()]}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    if len(data) != rows * cols:
        raise ValueError(f"data has {len(data)} entries, expected {rows * cols}")
    return as_matrix(np.array(data, dtype=np.float64).reshape(rows, cols))


def read_matrix(path) -> np.ndarray:
    """Read a matrix from a CSV or JSON file (JSON detected by content)."""
    with open(path) as fh:
        text = fh.read()
    return loads_matrix(text)


def loads_matrix(text: str) -> np.ndarray:
    if text.lstrip().startswith("{"):
        return matrix_from_json(text)
    return parse_matrix_csv(text)


def write_matrix(path, M) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix_csv(M))
