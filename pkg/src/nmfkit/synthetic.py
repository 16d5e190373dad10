"""Seeded test instances shared by the benchmark harness and the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import normalize_columns_l1


@dataclass
class SeparableInstance:
    M: np.ndarray
    K: list
    outliers: list

    @property
    def r(self):
        return len(self.K)


def separable_instance(seed, p=20, r=5, n=100, snr_db=None, n_outliers=0):
    """Column-normalized ``M = U [I_r, H] Pi`` with a planted index set K.

    U is uniform(0, 1) (full rank with probability one); the columns of H
    are Dirichlet(1) mixtures. Optional Gaussian noise at ``snr_db`` is
    clamped at 0. Outliers are sparse spikes (two nonzero rows), which lie
    far outside ``conv(U)`` once normalized; they replace the last columns
    before the shuffle.
    """
    rng = np.random.default_rng(seed)
    U = rng.random((p, r))
    H = rng.dirichlet(np.ones(r), size=n - r).T
    V = np.hstack([np.eye(r), H])
    M = U @ V
    if snr_db is not None:
        sigma = np.sqrt(np.sum(M ** 2) / (M.size * 10.0 ** (snr_db / 10.0)))
        M = np.maximum(M + rng.normal(0.0, sigma, M.shape), 0.0)
    out_cols = list(range(n - n_outliers, n))
    for j in out_cols:
        spike = np.zeros(p)
        spike[rng.choice(p, size=2, replace=False)] = rng.uniform(0.5, 1.0, 2)
        M[:, j] = spike * M[:, j].sum() / spike.sum()
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    M = M[:, perm]
    Mn = normalize_columns_l1(M).Mn
    return SeparableInstance(M=Mn, K=sorted(int(inv[k]) for k in range(r)),
                             outliers=sorted(int(inv[j]) for j in out_cols))


def random_nonnegative(seed, p=50, n=40):
    return np.random.default_rng(seed).random((p, n))
