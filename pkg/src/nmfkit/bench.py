"""Seeded benchmark suites behind ``nmfkit bench``.

Every suite maps one seed to a list of rows ``(suite, seed, metric, value,
passed)``. Tasks are independent so they can run in any order or in
parallel; the summary is sorted afterwards, which keeps it deterministic.
"""
from __future__ import annotations

import csv
import io
import itertools
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .exactnmf import rank_plus_estimate
from .geometry import hexagon_matrix, npp_extract
from .hsi import generate_synthetic, score, unmix
from .nmf import NmfConfig, factorize
from .nnls import NnlsConfig, nnls_fast_gradient
from .separable import SelfDictConfig, default_candidates, project_rows, self_dictionary, spa
from .synthetic import random_nonnegative, separable_instance

FIELDS = ("suite", "seed", "metric", "value", "passed")
HEXAGON_LADDER = {2.0: 3, 3.0: 4, 4.0: 5, 10.0: 5}


def _row(suite, seed, metric, value, passed):
    return {"suite": suite, "seed": seed, "metric": metric, "value": value, "passed": bool(passed)}


def suite_hexagon(seed):
    rows = []
    for a, expected in HEXAGON_LADDER.items():
        est = rank_plus_estimate(hexagon_matrix(a), r_max=6, restarts=200, seed=seed)
        rows.append(_row("hexagon", seed, f"upper_a{a:g}", est.upper, est.upper == expected))
        ratio = npp_extract(hexagon_matrix(a)).circumradius_ratio()
        rows.append(_row("hexagon", seed, f"ratio_err_a{a:g}", abs(ratio - (a - 1) / a),
                         abs(ratio - (a - 1) / a) < 1e-9))
    return rows


def suite_spa(seed):
    inst = separable_instance(seed)
    K = spa(inst.M, inst.r)
    return [_row("spa", seed, "exact_recovery", float(sorted(K) == inst.K), sorted(K) == inst.K)]


def suite_selfdict(seed):
    inst = separable_instance(seed)
    cfg = SelfDictConfig(candidates=tuple(default_candidates(inst.M, inst.r)))
    K = self_dictionary(inst.M, cfg, inst.r).K
    same = sorted(K) == sorted(spa(inst.M, inst.r))
    noisy = separable_instance(seed, snr_db=30, n_outliers=2)
    cfg = SelfDictConfig(candidates=tuple(default_candidates(noisy.M, noisy.r)))
    sd_hit = bool(set(self_dictionary(noisy.M, cfg, noisy.r).K) & set(noisy.outliers))
    spa_hit = bool(set(spa(noisy.M, noisy.r)) & set(noisy.outliers))
    return [_row("selfdict", seed, "matches_spa", float(same), same),
            _row("selfdict", seed, "outlier_selfdict", float(sd_hit), not sd_hit),
            _row("selfdict", seed, "outlier_spa", float(spa_hit), True)]


def suite_nnls(seed):
    from .oracles import nnls_enumeration

    rng = np.random.default_rng(seed)
    A = rng.random((10, 3))
    b = rng.standard_normal((10, 1))
    x = nnls_fast_gradient(A, b, np.zeros((3, 1)), NnlsConfig(max_iters=5000, tol=1e-12))
    f = float(np.sum((A @ x - b) ** 2))
    f_star = nnls_enumeration(A, b[:, 0])[1]
    gap = abs(f - f_star) / max(f_star, 1e-300)
    return [_row("nnls", seed, "relative_gap", gap, gap <= 1e-6)]


def suite_projection(seed):
    from .oracles import project_row_grid

    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.5, 1.5, 6)
    d = int(rng.integers(6))
    err = float(np.linalg.norm(project_rows(y[None], [d])[0] - project_row_grid(y, d)))
    return [_row("projection", seed, "grid_distance", err, err <= 1e-3)]


def suite_mu_hals(seed):
    M = random_nonnegative(seed)
    rows = []
    for alg in ("mu", "hals"):
        model = factorize(M, NmfConfig(r=5, algorithm=alg, max_outer_iters=500, tol=0.0, seed=seed))
        e = np.array([t[1] for t in model.trace])
        rise = float(np.max(np.diff(e))) if e.size > 1 else 0.0
        rows.append(_row("mu-hals", seed, f"{alg}_max_increase", rise, rise <= 1e-12))
        rows.append(_row("mu-hals", seed, f"{alg}_final_residual", float(e[-1]), True))
    return rows


def suite_hsi(seed):
    cube, truth = generate_synthetic(100, 50, 50, 5, True, 40.0, seed)
    sc = score(unmix(cube, 5, "spa", refine=True), truth)
    return [_row("hsi", seed, "index_recovery", sc["index_recovery"], sc["index_recovery"] == 1.0),
            _row("hsi", seed, "abundance_rmse", sc["abundance_rmse"], sc["abundance_rmse"] < 0.05),
            _row("hsi", seed, "spectral_angle_mean", sc["spectral_angle_mean"], True)]


SUITES = {
    "hexagon": suite_hexagon,
    "spa": suite_spa,
    "selfdict": suite_selfdict,
    "nnls": suite_nnls,
    "projection": suite_projection,
    "mu-hals": suite_mu_hals,
    "hsi": suite_hsi,
}


def _run_task(task):
    name, seed = task
    return SUITES[name](seed)


def max_workers():
    """Worker count from ``NMFKIT_THREADS`` (default: all cores)."""
    raw = os.environ.get("NMFKIT_THREADS")
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError("NMFKIT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def run_bench(suites, seeds, base_seed=0, workers=None):
    """Run ``suites`` on seeds ``base_seed .. base_seed + seeds - 1``."""
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}; choose from {sorted(SUITES)}")
    tasks = list(itertools.product(suites, range(base_seed, base_seed + seeds)))
    workers = max_workers() if workers is None else workers
    if workers == 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    rows = [row for block in results for row in block]
    rows.sort(key=lambda r: (r["suite"], r["seed"], r["metric"]))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "value": repr(row["value"]) if isinstance(row["value"], float) else row["value"]})
    return buf.getvalue()
