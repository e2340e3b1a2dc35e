"""Command-line front end.

Subcommands: ``gen``, ``solve``, ``hybrid``, ``compare`` and ``bench``.
Exit codes: 0 success, 1 usage error, 2 some requested pair did not
converge (outputs are still written), 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from hybrideig.config import METHODS, SolverConfig, initial_block, run_method
from hybrideig.hybrid import HybridConfig, hybrid_solve
from hybrideig.instrumentation import effective_spmv, measure_kernel_ratio
from hybrideig.problems import ProblemSpec, build_problem, nested_guesses, pad_initial_guess, principal_submatrix
from hybrideig.sparse import MatrixMarketError, read_matrix_market, write_matrix_market

EXIT_OK, EXIT_USAGE, EXIT_UNCONVERGED, EXIT_IO = 0, 1, 2, 3
HISTORY_HEADER = ["iter", "pair", "theta", "rel_residual"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; that code means non-convergence here
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _spmm_strategy(text):
    if text in ("always", "always-spmm"):
        return "always-spmm"
    if text.startswith("decouple:"):
        k = text.split(":", 1)[1]
        if not k.isdigit():
            raise argparse.ArgumentTypeError("decouple needs a non-negative integer, e.g. decouple:2")
        return f"decouple-after:{int(k)}"
    raise argparse.ArgumentTypeError("expected 'always' or 'decouple:K'")


def _add_solver_args(p, *, with_method):
    if with_method:
        p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--matrix", required=True, help="Matrix Market file")
    p.add_argument("--nev", type=_positive_int, default=5)
    p.add_argument("--nb", type=_positive_int, default=None, help="block size (default 8 for nev<=5, 16 for nev<=13)")
    p.add_argument("--tol", type=_positive_float, default=1e-6)
    p.add_argument("--maxiter", type=_positive_int, default=None)
    p.add_argument("--guess", default=None, help="initial guesses (.npy, or text readable by numpy.loadtxt)")
    p.add_argument("--nested-m", type=_positive_int, default=None,
                   help="without --guess, rmm-diis pads eigenvectors of the leading m x m block (default max(2*nev, 12))")
    p.add_argument("--precond", choices=("none", "diag-shift"), default="none")
    p.add_argument("--degree", type=_positive_int, default=10)
    p.add_argument("--s-max", type=_positive_int, default=15)
    p.add_argument("--no-stagnation", action="store_true", help="do not stop RMM-DIIS targets that stall")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=_positive_float, default=None, help="SpMM/SpMV throughput ratio for effective_spmv")
    p.add_argument("--out", default=".", help="output directory")


def _add_hybrid_args(p):
    p.add_argument("--first", choices=("block-lanczos", "lobpcg"), default="block-lanczos")
    p.add_argument("--tau-switch", type=_positive_float, default=1e-7)
    p.add_argument("--spmm-strategy", type=_spmm_strategy, default="always-spmm")
    p.add_argument("--max-first-iters", type=_positive_int, default=100)


def build_parser():
    parser = _Parser(prog="hybrideig", description="Sparse symmetric eigensolvers with SpMV accounting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a test matrix in Matrix Market format")
    g.add_argument("--kind", required=True, choices=("laplacian1d", "prescribed", "nested", "near-degenerate"))
    g.add_argument("--n", required=True, type=_positive_int)
    g.add_argument("--m", type=_positive_int, default=None, help="size of the small problem (nested)")
    g.add_argument("--rotations", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run one solver")
    _add_solver_args(s, with_method=True)

    h = sub.add_parser("hybrid", help="block method, then RMM-DIIS")
    _add_solver_args(h, with_method=False)
    _add_hybrid_args(h)

    c = sub.add_parser("compare", help="run several methods and tabulate SpMV counts")
    c.add_argument("--methods", required=True,
                   help="comma list of solver names and hybrid-block-lanczos / hybrid-lobpcg")
    _add_solver_args(c, with_method=False)
    _add_hybrid_args(c)

    b = sub.add_parser("bench", help="SpMV vs SpMM throughput")
    b.add_argument("--matrix", required=True)
    b.add_argument("--nb", type=_positive_int, default=8)
    b.add_argument("--reps", type=_positive_int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None, help="JSON file (default: stdout)")
    return parser


# helpers ---------------------------------------------------------------


def _load_guess(path, n):
    p = Path(path)
    G = np.load(p) if p.suffix == ".npy" else np.loadtxt(p, ndmin=2)
    G = np.asarray(G, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape[0] > n:
        raise UsageError(f"guess has {G.shape[0]} rows but the matrix has dimension {n}")
    return pad_initial_guess(G, n) if G.shape[0] < n else G


def _solver_config(args, cls=SolverConfig, **extra):
    return cls(
        n_ev=args.nev,
        n_b=args.nb,
        tol=args.tol,
        maxiter=args.maxiter,
        d=args.degree,
        s_max=args.s_max,
        precond="diagonal-shift" if args.precond == "diag-shift" else "none",
        seed=args.seed,
        stagnation=not args.no_stagnation,
        **extra,
    )


def _hybrid_config(args):
    return _solver_config(
        args,
        HybridConfig,
        first_phase=args.first,
        tau_switch=args.tau_switch,
        spmm_strategy=args.spmm_strategy,
        max_first_iters=args.max_first_iters,
    )


def _guess_for(args, A, method):
    if args.guess is not None:
        return _load_guess(args.guess, A.n)
    if method == "rmm-diis":
        m = args.nested_m or min(max(2 * args.nev, 12), A.n - 1)
        if not 1 <= m < A.n:
            raise UsageError("--nested-m must be below the matrix dimension")
        if m < args.nev:
            raise UsageError("--nested-m must be at least --nev")
        return nested_guesses(principal_submatrix(A, m), A.n, args.nev)
    return None


def _floats(a):
    return [float(x) for x in np.asarray(a).ravel()]


def run_summary(method, A, config, report, stats, ratio=None):
    """JSON-ready record of one run."""
    s = stats.to_dict()
    out = {
        "method": method,
        "n": int(A.n),
        "n_ev": int(config.n_ev),
        "n_b": int(config.n_b),
        "tol": float(config.tol),
        "seed": int(config.seed),
        "status": report.status,
        "iterations": s["iterations"],
        "spmv_actual": s["spmv_actual"],
        "spmm_calls": s["spmm_calls"],
        "eigenvalues": _floats(report.eigenvalues),
        "rel_residuals": _floats(report.rel_residuals),
        "converged": [bool(c) for c in report.converged],
        "failure_flags": list(report.failures),
        "phase_marks": s["phase_marks"],
        "tau_history": s["tau_history"],
        "timings": s["timings"],
    }
    if ratio is not None:
        out["effective_spmv"] = effective_spmv(s["spmv_actual"], ratio)
    for key in ("phase1_spmv", "phase2_spmv", "switch_reason", "first_phase"):
        if key in stats.extra:
            out[key] = stats.extra[key]
    return out


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_history(stats, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for it, (thetas, rels) in enumerate(stats.history, start=1):
            for j, (th, r) in enumerate(zip(thetas, rels)):
                w.writerow([it, j, repr(float(th)), repr(float(r))])


def _write_run(outdir, summary, stats):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(summary, outdir / "summary.json")
    write_history(stats, outdir / "history.csv")


def _run_one(name, A, args):
    if name.startswith("hybrid"):
        cfg = _hybrid_config(args)
        if name == "hybrid-lobpcg":
            cfg.first_phase = "lobpcg"
        elif name == "hybrid-block-lanczos":
            cfg.first_phase = "block-lanczos"
        guess = _guess_for(args, A, "hybrid")
        X0 = initial_block(A.n, cfg.n_b, guess, cfg.seed)
        report, stats = hybrid_solve(A, X0, cfg)
        label = f"hybrid-{cfg.first_phase}"
    else:
        cfg = _solver_config(args)
        report, stats = run_method(A, name, cfg, _guess_for(args, A, name))
        label = name
    return run_summary(label, A, cfg, report, stats, args.ratio), stats


# subcommands -----------------------------------------------------------


def cmd_gen(args):
    kw = dict(kind=args.kind, n=args.n, seed=args.seed, rotations=args.rotations)
    if args.kind == "nested":
        kw["m"] = args.m if args.m is not None else args.n // 2
    try:
        spec = ProblemSpec(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    built = build_problem(spec)
    out = Path(args.out)
    if args.kind == "nested":
        A_small, A = built
        write_matrix_market(A, out)
        small = out.with_name(out.stem + ".small" + out.suffix)
        write_matrix_market(A_small, small)
        print(f"wrote {out} and {small}")
    else:
        write_matrix_market(built, out)
        print(f"wrote {out}")
    return EXIT_OK


def _single(args, name):
    A = read_matrix_market(args.matrix)
    summary, stats = _run_one(name, A, args)
    _write_run(args.out, summary, stats)
    print(f"{summary['method']}: {summary['status']}, spmv_actual={summary['spmv_actual']}")
    return EXIT_OK if all(summary["converged"]) else EXIT_UNCONVERGED


def cmd_solve(args):
    return _single(args, args.method)


def cmd_hybrid(args):
    return _single(args, "hybrid")


def cmd_compare(args):
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    known = set(METHODS) | {"hybrid-block-lanczos", "hybrid-lobpcg"}
    bad = [m for m in names if m not in known]
    if not names or bad:
        raise UsageError(f"unknown methods: {', '.join(bad) or '(none given)'}")
    A = read_matrix_market(args.matrix)
    outdir = Path(args.out)
    rows, runs = [], {}
    for name in names:
        summary, stats = _run_one(name, A, args)
        _write_run(outdir / name, summary, stats)
        runs[name] = summary
        rows.append(
            [
                name,
                summary["spmv_actual"],
                summary["spmm_calls"],
                summary["iterations"],
                summary.get("effective_spmv", ""),
                int(sum(summary["converged"])),
                summary["status"],
            ]
        )
    with open(outdir / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "spmv_actual", "spmm_calls", "iterations", "effective_spmv", "n_converged", "status"])
        w.writerows(rows)
    _write_json({"runs": runs, "total_spmv": int(sum(r[1] for r in rows))}, outdir / "compare.json")
    for r in rows:
        print(f"{r[0]:<22} spmv={r[1]:<8} converged={r[5]}/{args.nev}")
    return EXIT_OK if all(all(s["converged"]) for s in runs.values()) else EXIT_UNCONVERGED


def cmd_bench(args):
    A = read_matrix_market(args.matrix)
    kr = measure_kernel_ratio(A, args.nb, repetitions=max(args.reps, 3), seed=args.seed)
    data = kr.to_dict()
    data["n"], data["nnz_logical"] = int(A.n), int(A.nnz_logical)
    if args.out is None:
        print(json.dumps(data, sort_keys=True, indent=2))
    else:
        _write_json(data, args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "hybrid": cmd_hybrid, "compare": cmd_compare, "bench": cmd_bench}


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MatrixMarketError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # configuration rejected by a solver (e.g. n_b < n_ev)
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run_cli())
