"""Command-line interface: ``nmfkit <command> [options]``.

Matrix inputs are CSV or JSON files; ``-`` or a missing path reads
standard input, so commands can be piped (``nmfkit hexagon --a 2 |
nmfkit rankplus``). Exit codes: 0 ok, 1 usage or validation error,
2 non-convergence, 3 verification failure.

Commands that take ``--out-dir`` write a run manifest there; any command
writes one to ``--manifest PATH`` when given. ``nmfkit replay`` re-executes
a manifest and checks the outputs against the recorded digests.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bench import SUITES, rows_to_csv, run_bench
from .exactnmf import rank_plus_estimate, search_exact_nmf
from .geometry import (
    PolytopeH,
    hexagon_matrix,
    hexagon_matrix_inf,
    npp_extract,
    regular_polygon,
    slack_matrix,
    verify_lift,
)
from .hsi import METHODS, generate_synthetic, load_cube, save_cube, score, select_columns, unmix
from .matcore import format_matrix_csv, loads_matrix, normalize_columns_l1, read_matrix
from .nmf import ALGORITHMS, NmfConfig, factorize
from .separable import pca_denoise, separable_result

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3
logger = logging.getLogger("nmfkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: int | None
    version: str
    cwd: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    stdin: str | None = None
    exit_code: int = 0
    wall_seconds: float = 0.0

    def to_json(self):
        return asdict(self)


class _Session:
    """Collects the stdout text, written files and digests of one command."""

    def __init__(self, stdin_text=None):
        self._stdin = stdin_text
        self.stdin_used = None
        self.out = io.StringIO()
        self.inputs = {}
        self.outputs = {}

    def read_matrix(self, path):
        if path in (None, "-"):
            if self.stdin_used is None:
                self.stdin_used = sys.stdin.read() if self._stdin is None else self._stdin
            self.inputs["<stdin>"] = _digest(self.stdin_used)
            return loads_matrix(self.stdin_used)
        M = read_matrix(path)
        with open(path, "rb") as fh:
            self.inputs[os.path.abspath(path)] = _digest(fh.read())
        return M

    def write(self, path, text):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
        self.outputs[os.path.abspath(path)] = _digest(text)

    def write_json(self, path, obj):
        self.write(path, _dumps(obj))

    def emit(self, text):
        self.out.write(text)


def _digest(data):
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _out_path(args, name):
    return os.path.join(args.out_dir, name)


# -- commands -----------------------------------------------------------------

def cmd_factorize(args, s: _Session):
    M = s.read_matrix(args.input)
    if args.restarts < 1:
        raise ValueError("--restarts must be >= 1")
    seeds = np.random.SeedSequence(args.seed).generate_state(args.restarts) if args.restarts > 1 else [args.seed]
    best = None
    for i, sd in enumerate(seeds):
        cfg = NmfConfig(r=args.rank, algorithm=args.alg, init=args.init, max_outer_iters=args.iters,
                        tol=args.tol, seed=int(sd), inner_iters=args.inner_iters)
        model = factorize(M, cfg)
        if best is None or model.relative_residual < best[1].relative_residual:
            best = (i, model, cfg)
    i, model, cfg = best
    result = {**model.to_json(cfg), "restart": i, "restarts": args.restarts, "base_seed": args.seed,
              "shape": list(M.shape)}
    trace_csv = "iteration,relative_residual\n" + "".join(f"{it},{e!r}\n" for it, e in model.trace)
    if args.out_dir:
        s.write(_out_path(args, "U.csv"), format_matrix_csv(model.U))
        s.write(_out_path(args, "V.csv"), format_matrix_csv(model.V))
        s.write(_out_path(args, "trace.csv"), trace_csv)
        s.write_json(_out_path(args, "result.json"), result)
    s.emit(_dumps(result))
    return EXIT_OK if model.converged else EXIT_NONCONVERGED


def cmd_exact(args, s: _Session):
    M = s.read_matrix(args.input)
    res = search_exact_nmf(M, args.rank, restarts=args.restarts, exact_tol=args.tol, seed=args.seed)
    result = {"r": args.rank, "seed": args.seed, "restarts_used": res.restarts_used,
              "best_residual": res.best_residual, "found": res.model is not None,
              "success_index": res.success_index}
    if res.model is not None and args.out_dir:
        s.write(_out_path(args, "U.csv"), format_matrix_csv(res.model.U))
        s.write(_out_path(args, "V.csv"), format_matrix_csv(res.model.V))
    if args.out_dir:
        s.write_json(_out_path(args, "result.json"), result)
    s.emit(_dumps(result))
    return EXIT_OK if res.model is not None else EXIT_NONCONVERGED


def cmd_rankplus(args, s: _Session):
    M = s.read_matrix(args.input)
    est = rank_plus_estimate(M, r_max=args.rmax, restarts=args.restarts, seed=args.seed, r_min=args.rmin)
    result = est.to_json(seed=args.seed)
    if args.out_dir:
        s.write_json(_out_path(args, "result.json"), result)
        if est.witness is not None:
            s.write(_out_path(args, "U.csv"), format_matrix_csv(est.witness.U))
            s.write(_out_path(args, "V.csv"), format_matrix_csv(est.witness.V))
    s.emit(_dumps(result))
    return EXIT_OK if est.upper is not None else EXIT_NONCONVERGED


def cmd_separable(args, s: _Session):
    M = s.read_matrix(args.input)
    nd = normalize_columns_l1(M)
    X = pca_denoise(nd.Mn, args.rank) if args.denoise and args.rank < min(nd.Mn.shape) else nd.Mn
    K = [int(nd.kept[k]) for k in select_columns(X, args.rank, args.method, args.refine, args.penalty)]
    res = separable_result(M, K)
    result = {**res.to_json(), "method": args.method}
    if args.out_dir:
        s.write_json(_out_path(args, "result.json"), result)
        s.write(_out_path(args, "V.csv"), format_matrix_csv(res.V))
    s.emit(_dumps(result))
    return EXIT_OK


def _polytope(args):
    if args.polygon is not None:
        return regular_polygon(args.polygon)
    with open(args.polytope) as fh:
        return PolytopeH.from_json(json.load(fh))


def cmd_slack(args, s: _Session):
    text = format_matrix_csv(slack_matrix(_polytope(args)))
    if args.out:
        s.write(args.out, text)
    else:
        s.emit(text)
    return EXIT_OK


def cmd_lift(args, s: _Session):
    P = _polytope(args)
    report = verify_lift(P, read_matrix(args.U), read_matrix(args.V), tol=args.tol)
    s.emit(_dumps(report.to_json()))
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_hexagon(args, s: _Session):
    M = hexagon_matrix_inf() if args.inf else hexagon_matrix(args.a)
    text = format_matrix_csv(M)
    if args.out:
        s.write(args.out, text)
    else:
        s.emit(text)
    return EXIT_OK


def cmd_npp(args, s: _Session):
    inst = npp_extract(s.read_matrix(args.input))
    result = {"n_inner": int(inst.inner.shape[0]), "n_outer": int(inst.outer.shape[0]),
              "ratio": inst.circumradius_ratio()}
    if args.out_dir:
        s.write(_out_path(args, "inner.csv"), format_matrix_csv(inst.inner))
        s.write(_out_path(args, "outer.csv"), format_matrix_csv(inst.outer))
        s.write_json(_out_path(args, "npp.json"), result)
    s.emit(_dumps(result))
    return EXIT_OK


def cmd_hsi_gen(args, s: _Session):
    snr = None if args.snr in (None, "inf") else float(args.snr)
    cube, truth = generate_synthetic(args.p, args.width, args.height, args.rank, not args.no_pure, snr, args.seed)
    paths = save_cube(args.out_dir, cube, truth)
    for path in paths.values():
        with open(path) as fh:
            s.outputs[os.path.abspath(path)] = _digest(fh.read())
    s.emit(_dumps({"p": cube.p, "n": cube.n, "r": truth.r, "snr_db": snr, "seed": args.seed}))
    return EXIT_OK


def cmd_hsi_unmix(args, s: _Session):
    cube, truth = load_cube(args.cube)
    res = unmix(cube, args.rank, args.method, refine=args.refine, denoise=not args.no_denoise)
    result = res.to_json()
    result["method"] = args.method
    if truth is not None and truth.r == args.rank:
        result["score"] = score(res, truth)
    if args.out_dir:
        s.write(_out_path(args, "U.csv"), format_matrix_csv(res.U))
        s.write(_out_path(args, "V.csv"), format_matrix_csv(res.V))
        s.write_json(_out_path(args, "result.json"), result)
    s.emit(_dumps(result))
    return EXIT_OK


def cmd_bench(args, s: _Session):
    suites = sorted(SUITES) if args.suite == "all" else [args.suite]
    rows = run_bench(suites, args.seeds, base_seed=args.seed)
    text = rows_to_csv(rows)
    if args.out_dir:
        s.write(_out_path(args, "summary.csv"), text)
        for row_suite in suites:
            for seed in range(args.seed, args.seed + args.seeds):
                block = [r for r in rows if r["suite"] == row_suite and r["seed"] == seed]
                s.write_json(os.path.join(args.out_dir, row_suite, f"seed_{seed}.json"), block)
    s.emit(text)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_VERIFY


def cmd_replay(args, s: _Session):
    with open(args.manifest) as fh:
        man = json.load(fh)
    if man.get("version") != __version__:
        logger.warning("manifest was written by version %s, running %s", man.get("version"), __version__)
    buf = io.StringIO()
    here = os.getcwd()
    os.chdir(man.get("cwd") or here)
    try:
        code = run(man["argv"], stdin_text=man.get("stdin"), stdout=buf, write_manifest=False)
    finally:
        os.chdir(here)
    outputs = dict(man.get("outputs", {}))
    expected_stdout = outputs.pop("<stdout>", None)
    mismatched = []
    if expected_stdout is not None and _digest(buf.getvalue()) != expected_stdout:
        mismatched.append("<stdout>")
    for path, digest in outputs.items():
        try:
            with open(path) as fh:
                if _digest(fh.read()) != digest:
                    mismatched.append(path)
        except OSError:
            mismatched.append(path)
    ok = code == man.get("exit_code", 0) and not mismatched
    s.emit(_dumps({"exit_code": code, "expected_exit_code": man.get("exit_code", 0),
                   "mismatched": mismatched, "reproduced": ok}))
    return EXIT_OK if ok else EXIT_VERIFY


# -- parser -------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="nmfkit", description="Nonnegative matrix factorization toolkit.")
    p.add_argument("--version", action="version", version=f"nmfkit {__version__}")
    p.add_argument("--manifest", help="also write the run manifest to this path")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def positive(text):
        v = int(text)
        if v < 1:
            raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
        return v

    def nonneg_float(text):
        v = float(text)
        if not v >= 0:
            raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
        return v

    def add_input(q):
        q.add_argument("input", nargs="?", default="-", help="matrix CSV/JSON file ('-' = stdin)")

    q = sub.add_parser("factorize", help="approximate NMF with MU, HALS or ANLS")
    add_input(q)
    q.add_argument("--rank", type=positive, required=True)
    q.add_argument("--alg", choices=ALGORITHMS, default="hals")
    q.add_argument("--init", choices=("random", "spa"), default="random")
    q.add_argument("--iters", type=positive, default=500)
    q.add_argument("--tol", type=nonneg_float, default=1e-7)
    q.add_argument("--inner-iters", type=positive, default=20)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--restarts", type=positive, default=1)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_factorize)

    q = sub.add_parser("exact", help="multi-start search for an exact NMF at a given rank")
    add_input(q)
    q.add_argument("--rank", type=positive, required=True)
    q.add_argument("--restarts", type=positive, default=200)
    q.add_argument("--tol", type=float, default=1e-9)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_exact)

    q = sub.add_parser("rankplus", help="bracket the nonnegative rank")
    add_input(q)
    q.add_argument("--rmax", type=positive)
    q.add_argument("--rmin", type=positive)
    q.add_argument("--restarts", type=positive, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_rankplus)

    q = sub.add_parser("separable", help="separable NMF column selection")
    add_input(q)
    q.add_argument("--rank", type=positive, required=True)
    q.add_argument("--method", choices=METHODS, default="spa")
    q.add_argument("--denoise", action="store_true")
    q.add_argument("--refine", action="store_true")
    q.add_argument("--penalty", type=float, default=1000.0)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_separable)

    for name, func, hlp in (("slack", cmd_slack, "slack matrix of a polytope"),
                            ("lift", cmd_lift, "verify an extended formulation from U, V")):
        q = sub.add_parser(name, help=hlp)
        g = q.add_mutually_exclusive_group(required=True)
        g.add_argument("--polygon", type=int, help="regular n-gon")
        g.add_argument("--polytope", help="JSON file {A, b, vertices}")
        if name == "slack":
            q.add_argument("--out")
        else:
            q.add_argument("--U", required=True)
            q.add_argument("--V", required=True)
            q.add_argument("--tol", type=float, default=1e-8)
        q.set_defaults(func=func)

    q = sub.add_parser("hexagon", help="nested hexagons matrix")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--a", type=float)
    g.add_argument("--inf", action="store_true", help="integer limit matrix")
    q.add_argument("--out")
    q.set_defaults(func=cmd_hexagon)

    q = sub.add_parser("npp", help="nested polygons of a rank-3 matrix")
    add_input(q)
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_npp)

    q = sub.add_parser("hsi-gen", help="generate a synthetic hyperspectral cube")
    q.add_argument("--p", type=positive, default=100)
    q.add_argument("--width", type=positive, default=50)
    q.add_argument("--height", type=positive, default=50)
    q.add_argument("--rank", type=positive, default=5)
    q.add_argument("--no-pure", action="store_true")
    q.add_argument("--snr", default="40", help="dB, or 'inf' for noiseless")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_hsi_gen)

    q = sub.add_parser("hsi-unmix", help="unmix a cube directory")
    q.add_argument("cube", help="directory written by hsi-gen")
    q.add_argument("--rank", type=positive, required=True)
    q.add_argument("--method", choices=METHODS, default="spa")
    q.add_argument("--refine", action="store_true")
    q.add_argument("--no-denoise", action="store_true")
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_hsi_unmix)

    q = sub.add_parser("bench", help="run seeded benchmark suites, write a summary CSV")
    q.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    q.add_argument("--seeds", type=positive, default=5)
    q.add_argument("--seed", type=int, default=0, help="first seed")
    q.add_argument("--out-dir")
    q.set_defaults(func=cmd_bench)

    q = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    q.add_argument("manifest")
    q.set_defaults(func=cmd_replay)
    return p


def run(argv=None, stdin_text=None, stdout=None, write_manifest=True) -> int:
    """Execute one command; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = sys.stdout if stdout is None else stdout
    start = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"nmfkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    s = _Session(stdin_text)
    try:
        code = args.func(args, s)
    except (ValueError, OSError, KeyError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"nmfkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = s.out.getvalue()
    stdout.write(text)
    stdout.flush()
    if write_manifest and args.command != "replay":
        path = args.manifest or (os.path.join(args.out_dir, "manifest.json")
                                 if getattr(args, "out_dir", None) else None)
        if path:
            config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
            man = RunManifest(command=args.command, argv=argv, config=config,
                              seed=getattr(args, "seed", None), version=__version__, cwd=os.getcwd(),
                              inputs=s.inputs, outputs={**s.outputs, "<stdout>": _digest(text)},
                              stdin=s.stdin_used, exit_code=code,
                              wall_seconds=time.perf_counter() - start)
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "w") as fh:
                fh.write(_dumps(man.to_json()))
    return code


def main():
    with contextlib.suppress(BrokenPipeError):
        sys.exit(run())


if __name__ == "__main__":
    main()
