"""Command line interface.

Exit codes: 0 success, 1 solver failure (non-convergence or no positive
definite completion), 2 invalid input or usage.
"""

from __future__ import annotations

import argparse
import time
import os
import sys
from importlib import resources

import numpy as np

from . import io as sio
from .bench import BANDED_SIZES, graph_run, scaling_run
from .chordal import EdgeBasis, build_clique_tree, fill_reducing_order, symbolic_embed
from .exceptions import ConvergenceError, InputError, SparseCovError
from .newton_cg import SolverConfig, newton_solve
from .pipeline import rgl_estimate, theorem1_check
from .threshold import THREADS_ENV, LambdaSpec, threshold_covariance

__all__ = ["main", "build_parser", "SHIPPED"]

SHIPPED = {"sample30": "sample30.txt"}
ORDERINGS = ("auto", "mindegree", "rcm", "natural")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _input_path(p):
    if p in SHIPPED and not os.path.exists(p):
        return str(resources.files("sparsecov") / "data" / SHIPPED[p])
    if not os.path.isfile(p):
        raise InputError(f"no such file: {p}")
    return p


def _output_path(p):
    if p is None:
        return None
    d = os.path.dirname(os.path.abspath(p))
    if not os.path.isdir(d):
        raise InputError(f"output directory does not exist: {d}")
    return p


def _add_lambda(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--lambda", dest="lam", type=float, metavar="V", help="scalar penalty")
    g.add_argument("--lambda-table", metavar="FILE",
                   help="Matrix Market table of per-pair penalties ('% default: V' for the rest)")


def _add_source(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--samples", metavar="FILE",
                   help="sample file (text 'n N' or binary SMPL); 'sample30' for the shipped example")
    g.add_argument("--cov", metavar="FILE", help="covariance in Matrix Market format")


def _add_solver(p):
    p.add_argument("--config", metavar="FILE", help="solver settings as a JSON object")
    p.add_argument("--ordering", choices=ORDERINGS, default="auto")


def build_parser():
    ap = _Parser(prog="sparsecov",
                 description="Sparse inverse covariance estimation by thresholding and "
                             "max-det matrix completion.")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads (default: ${THREADS_ENV}, else 1)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("threshold", help="soft-threshold a covariance")
    _add_source(p)
    _add_lambda(p)
    p.add_argument("--prior", metavar="FILE", help="prior sparsity pattern (Matrix Market)")
    p.add_argument("--block", type=int, default=4000)
    p.add_argument("--out", required=True, metavar="FILE")

    p = sub.add_parser("embed", help="chordal embedding statistics")
    p.add_argument("--pattern", required=True, metavar="FILE")
    p.add_argument("--ordering", choices=ORDERINGS, default="auto")
    p.add_argument("--out-stats", nargs="?", const="-", default="-", metavar="FILE",
                   help="write statistics to FILE (default: standard output)")
    p.add_argument("--out", metavar="FILE", help="write the embedded pattern")

    p = sub.add_parser("solve", help="max-det completion of a sparse matrix")
    p.add_argument("--cov", required=True, metavar="FILE")
    _add_solver(p)
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--report", metavar="FILE")

    p = sub.add_parser("estimate", help="threshold, embed and solve")
    _add_source(p)
    _add_lambda(p)
    p.add_argument("--prior", metavar="FILE")
    p.add_argument("--block", type=int, default=4000)
    _add_solver(p)
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--report", metavar="FILE")

    p = sub.add_parser("check", help="equivalence-condition diagnostics (dense, small n)")
    _add_source(p)
    _add_lambda(p)
    p.add_argument("--prior", metavar="FILE")

    p = sub.add_parser("bench", help="synthetic benchmarks")
    bs = p.add_subparsers(dest="family", required=True, parser_class=_Parser)
    b = bs.add_parser("banded", help="scaling run on corrupted banded matrices")
    b.add_argument("--sizes", default=",".join(map(str, BANDED_SIZES)))
    b.add_argument("--bandwidth", type=int, default=101)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--offdiag-scale", type=float, default=0.05)
    _add_solver(b)
    b.add_argument("--out", metavar="FILE")
    b = bs.add_parser("graph", help="estimation on samples drawn from a pattern")
    b.add_argument("--pattern", required=True, metavar="FILE")
    b.add_argument("--samples", type=int, default=5000)
    b.add_argument("--seed", type=int, default=7)
    g = b.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, metavar="V")
    g.add_argument("--edges", type=int, help="keep this many covariance entries")
    _add_solver(b)
    b.add_argument("--out", metavar="FILE")
    return ap


def _lambda(args):
    if args.lambda_table:
        return sio.read_lambda_table(_input_path(args.lambda_table))
    if not np.isfinite(args.lam) or args.lam < 0:
        raise InputError("lambda must be a finite non-negative number")
    return LambdaSpec(args.lam)


def _source(args):
    if args.samples:
        return sio.read_samples(_input_path(args.samples))
    return sio.read_matrix_market(_input_path(args.cov)).to_dense()


def _prior(args):
    return sio.read_pattern(_input_path(args.prior)) if args.prior else None


def _config(args):
    cfg = SolverConfig.from_json(_input_path(args.config)) if args.config else SolverConfig()
    cfg.validate()
    return cfg


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_result(args, X, rep):
    sio.write_matrix_market(args.out, X)
    text = rep.to_text()
    if args.report:
        _emit(text, args.report)
    sys.stdout.write("".join(f"{k}={v}\n" for k, v in rep.key_values().items()))


def _cmd_threshold(args):
    src, lam, H = _source(args), _lambda(args), _prior(args)
    _output_path(args.out)
    C_H, rep = threshold_covariance(src, lam, H, block_size=args.block,
                                    threads=args.threads, return_report=True)
    sio.write_matrix_market(args.out, C_H)
    print(f"n={rep.n}\nkept={rep.kept}\nties={rep.ties}\nzero_weights={rep.zero_weights}")
    if not rep.assumption_ok:
        print("warning: ties or zero weights present; equivalence theory does not apply",
              file=sys.stderr)
    return 0


def _cmd_embed(args):
    G = sio.read_pattern(_input_path(args.pattern))
    _output_path(args.out)
    if args.out_stats != "-":
        _output_path(args.out_stats)
    E = symbolic_embed(G, fill_reducing_order(G, args.ordering))
    T = build_clique_tree(E)
    text = (f"n={E.n}\nedges={G.n_offdiag}\nm={E.m}\nmax_clique={T.max_clique}\n"
            f"cliques={len(T.supernodes)}\n")
    _emit(text, args.out_stats)
    if args.out:
        sio.write_matrix_market(args.out, E.Gt)
    return 0


def _cmd_solve(args):
    C = sio.read_matrix_market(_input_path(args.cov))
    cfg = _config(args)
    _output_path(args.out)
    _output_path(args.report)

    t0 = time.perf_counter()
    E = symbolic_embed(C.pattern, fill_reducing_order(C.pattern, args.ordering))
    t_embed = time.perf_counter() - t0
    try:
        X, _, rep = newton_solve(C, E, EdgeBasis(E), cfg)
    except ConvergenceError as exc:
        X, _, rep = exc.result
        rep.seconds_embed = t_embed
        _write_result(args, X, rep)
        raise
    rep.seconds_embed = t_embed
    _write_result(args, X, rep)
    return 0


def _cmd_estimate(args):
    src, lam, H = _source(args), _lambda(args), _prior(args)
    cfg = _config(args)
    _output_path(args.out)
    _output_path(args.report)
    try:
        X, rep = rgl_estimate(src, lam, H, cfg, block_size=args.block, ordering=args.ordering,
                              threads=args.threads)
    except ConvergenceError as exc:
        X, _, rep = exc.result
        _write_result(args, X, rep)
        raise
    _write_result(args, X, rep)
    return 0


def _cmd_check(args):
    src, lam, H = _source(args), _lambda(args), _prior(args)
    C = src.covariance() if hasattr(src, "covariance") else src
    d = theorem1_check(C, lam, H)
    print("\n".join(d.lines()))
    return 0


def _cmd_bench(args):
    cfg = _config(args)
    _output_path(args.out)
    if args.family == "banded":
        try:
            sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
        except ValueError:
            raise InputError(f"bad size list '{args.sizes}'") from None

        def progress(n, r):
            print(f"n={n} newton={r.newton_steps} solve_s={r.seconds_solve:.2f}",
                  file=sys.stderr, flush=True)

        rep = scaling_run(sizes, args.bandwidth, args.seed, args.offdiag_scale, cfg,
                          args.ordering, progress)
        text = rep.to_text()
        failed = bool(rep.errors)
    else:
        G = sio.read_pattern(_input_path(args.pattern))
        rep = graph_run(G, args.samples, args.seed, lam=args.lam, k=args.edges, cfg=cfg,
                        threads=args.threads)
        text = rep.to_text()
        failed = not rep.solve.converged
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return 1 if failed else 0


COMMANDS = {
    "threshold": _cmd_threshold,
    "embed": _cmd_embed,
    "solve": _cmd_solve,
    "estimate": _cmd_estimate,
    "check": _cmd_check,
    "bench": _cmd_bench,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("sparsecov: error: --threads must be positive", file=sys.stderr)
            return 2
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"sparsecov: error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"sparsecov: not converged: {exc}", file=sys.stderr)
        return 1
    except SparseCovError as exc:
        print(f"sparsecov: solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
