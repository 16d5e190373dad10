"""Synthetic blind hyperspectral unmixing under the linear mixing model."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .matcore import as_matrix, format_matrix_csv, normalize_columns_l1, read_matrix
from .nmf import NmfConfig, factorize
from .separable import (
    SelfDictConfig,
    abundances,
    default_candidates,
    pca_denoise,
    refine_vertices,
    self_dictionary,
    spa,
    spa_mve,
)

METHODS = ("spa", "spa-mve", "selfdict")


@dataclass
class HsiCube:
    M: np.ndarray
    width: int
    height: int
    snr_db: float | None = None
    seed: int | None = None

    @property
    def p(self):
        return self.M.shape[0]

    @property
    def n(self):
        return self.M.shape[1]


@dataclass
class GroundTruth:
    U: np.ndarray
    V: np.ndarray
    pure_pixels: list | None
    snr_db: float | None

    @property
    def r(self):
        return self.U.shape[1]

    @property
    def clean(self):
        return self.U @ self.V


def _spectra(p, r, rng):
    x = np.linspace(0.0, 1.0, p)
    U = np.empty((p, r))
    for k in range(r):
        s = np.full(p, rng.uniform(0.05, 0.2))
        for _ in range(rng.integers(3, 7)):
            c = rng.uniform(0.0, 1.0)
            w = rng.uniform(0.03, 0.15)
            s += rng.uniform(0.1, 0.6) * np.exp(-0.5 * ((x - c) / w) ** 2)
        U[:, k] = s / s.max() * rng.uniform(0.5, 0.95)
    return U


def generate_synthetic(p, width, height, r, pure=True, snr_db=None, seed=0):
    """Random scene ``M = U V + noise`` with Gaussian-bump endmember spectra.

    Abundances are Dirichlet(1) per pixel (sum to one). With ``pure`` set,
    r distinct random pixels are made pure. Gaussian noise at ``snr_db``
    (``None`` or ``inf`` for none) is added and the result clamped at 0.
    """
    n = width * height
    if p < 1 or n < 1 or not 1 <= r <= min(p, n):
        raise ValueError(f"invalid dimensions p={p}, n={n}, r={r}")
    rng = np.random.default_rng(seed)
    U = _spectra(p, r, rng)
    V = rng.dirichlet(np.ones(r), size=n).T if r > 1 else np.ones((1, n))
    pure_pixels = None
    if pure:
        pure_pixels = [int(j) for j in rng.choice(n, size=r, replace=False)]
        V[:, pure_pixels] = np.eye(r)
    clean = U @ V
    M = clean
    if snr_db is not None and np.isfinite(snr_db):
        sigma = np.sqrt(np.sum(clean ** 2) / (clean.size * 10.0 ** (snr_db / 10.0)))
        M = np.maximum(clean + rng.normal(0.0, sigma, clean.shape), 0.0)
    else:
        snr_db = None
    cube = HsiCube(M=M, width=width, height=height, snr_db=snr_db, seed=seed)
    return cube, GroundTruth(U=U, V=V, pure_pixels=pure_pixels, snr_db=snr_db)


def empirical_snr(cube: HsiCube, truth: GroundTruth) -> float:
    clean = truth.clean
    return float(10.0 * np.log10(np.sum(clean ** 2) / np.sum((cube.M - clean) ** 2)))


@dataclass
class UnmixResult:
    U: np.ndarray
    V: np.ndarray
    K: list
    residual: float
    relative_residual: float

    def to_json(self):
        return {"K": [int(k) for k in self.K], "r": len(self.K),
                "residual": self.residual, "relative_residual": self.relative_residual}


def select_columns(X, r, method="spa", refine=False, penalty=1000.0):
    """Column indices of X picked by one of the separable methods."""
    if method == "spa":
        K = spa(X, r)
    elif method == "spa-mve":
        K = spa_mve(X, r)
    elif method == "selfdict":
        cfg = SelfDictConfig(candidates=tuple(default_candidates(X, r)), penalty=penalty)
        K = self_dictionary(X, cfg, r).K
    else:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if refine:
        K = refine_vertices(X, K)
    return K


def unmix(cube: HsiCube, r, method="spa", refine=False, denoise=True, refine_vertices_=False,
          refine_iters=200):
    """Blind unmixing: select pure pixels, fit abundances, optionally polish.

    normalize -> optional rank-r PCA -> column selection -> NNLS abundances
    on the raw data -> optional HALS refinement started at ``(M[:, K], V)``.
    After refinement each endmember is rescaled to the l1 norm of the pixel
    it started from, which pins the scale ambiguity of the factorization.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    M = as_matrix(cube.M)
    nd = normalize_columns_l1(M)
    X = pca_denoise(nd.Mn, r) if denoise and r < min(nd.Mn.shape) else nd.Mn
    K = [int(nd.kept[k]) for k in select_columns(X, r, method, refine_vertices_)]
    U = M[:, K].copy()
    V = abundances(M, K)
    if refine:
        model = factorize(M, NmfConfig(r=r, algorithm="hals", max_outer_iters=refine_iters),
                          U0=U, V0=V)
        c = np.abs(M[:, K]).sum(axis=0) / np.maximum(model.U.sum(axis=0), 1e-300)
        U = model.U * c
        V = model.V / c[:, None]
    res = float(np.linalg.norm(M - U @ V))
    nM = float(np.linalg.norm(M))
    return UnmixResult(U=U, V=V, K=K, residual=res, relative_residual=res / nM if nM else 0.0)


def match_endmembers(U_est, U_true):
    """Greedy matching by descending cosine similarity, without replacement.

    Returns ``perm`` with ``perm[k]`` = estimated endmember assigned to
    true endmember k.
    """
    A = U_est / np.linalg.norm(U_est, axis=0)
    B = U_true / np.linalg.norm(U_true, axis=0)
    C = B.T @ A
    r = C.shape[0]
    perm = np.full(r, -1)
    used_true, used_est = set(), set()
    for flat in np.argsort(-C, axis=None, kind="stable"):
        i, j = divmod(int(flat), C.shape[1])
        if i in used_true or j in used_est:
            continue
        perm[i] = j
        used_true.add(i)
        used_est.add(j)
        if len(used_true) == r:
            break
    return perm


def score(result, truth: GroundTruth) -> dict:
    """Spectral angles, abundance RMSE and pure-pixel recovery."""
    if result.U.shape[1] != truth.r:
        raise ValueError(f"rank mismatch: {result.U.shape[1]} vs {truth.r}")
    perm = match_endmembers(result.U, truth.U)
    Ue = result.U[:, perm]
    cos = np.sum(Ue * truth.U, axis=0) / (np.linalg.norm(Ue, axis=0) * np.linalg.norm(truth.U, axis=0))
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    rmse = float(np.sqrt(np.mean((result.V[perm] - truth.V) ** 2)))
    out = {"spectral_angle_mean": float(angles.mean()), "abundance_rmse": rmse,
           "index_recovery": None}
    K = getattr(result, "K", None)
    if truth.pure_pixels is not None and K is not None:
        out["index_recovery"] = len(set(K) & set(truth.pure_pixels)) / truth.r
    return out


# -- cube files ---------------------------------------------------------------

def save_cube(directory, cube: HsiCube, truth: GroundTruth | None = None):
    """``cube.json`` header + ``cube.csv``; truth as ``truth_U.csv``/``truth_V.csv``."""
    os.makedirs(directory, exist_ok=True)
    header = {"p": cube.p, "width": cube.width, "height": cube.height,
              "snr_db": cube.snr_db, "seed": cube.seed}
    if truth is not None:
        header["r"] = truth.r
        header["pure_pixels"] = truth.pure_pixels
    paths = {"header": os.path.join(directory, "cube.json"),
             "data": os.path.join(directory, "cube.csv")}
    with open(paths["header"], "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    with open(paths["data"], "w") as fh:
        fh.write(format_matrix_csv(cube.M))
    if truth is not None:
        for name, mat in (("truth_U", truth.U), ("truth_V", truth.V)):
            paths[name] = os.path.join(directory, f"{name}.csv")
            with open(paths[name], "w") as fh:
                fh.write(format_matrix_csv(mat))
    return paths


def load_cube(directory):
    with open(os.path.join(directory, "cube.json")) as fh:
        header = json.load(fh)
    M = read_matrix(os.path.join(directory, "cube.csv"))
    if M.shape != (header["p"], header["width"] * header["height"]):
        raise ValueError("cube.csv does not match its header")
    cube = HsiCube(M=M, width=header["width"], height=header["height"],
                   snr_db=header.get("snr_db"), seed=header.get("seed"))
    truth = None
    tu = os.path.join(directory, "truth_U.csv")
    if os.path.exists(tu):
        truth = GroundTruth(U=read_matrix(tu), V=read_matrix(os.path.join(directory, "truth_V.csv")),
                            pure_pixels=header.get("pure_pixels"), snr_db=header.get("snr_db"))
    return cube, truth
