#!/usr/bin/env python3
"""SpMV counts of every solver on the three standard test matrices.

Usage: python demos/compare_solvers.py [--nev 5]
"""

import argparse
import time

import numpy as np

from hybrideig import (
    HybridConfig,
    SolverConfig,
    gen_laplacian_1d,
    gen_near_degenerate,
    gen_prescribed_spectrum,
    hybrid_solve,
    initial_block,
    nested_guesses,
    principal_submatrix,
    run_method,
)
from hybrideig.problems import separated_spectrum


def fixtures():
    return {
        "laplacian-400": gen_laplacian_1d(400),
        "prescribed-1000": gen_prescribed_spectrum(separated_spectrum(1000), 4000, 0),
        "near-degenerate-500": gen_near_degenerate(500),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nev", type=int, default=5)
    args = ap.parse_args()

    for name, A in fixtures().items():
        exact = np.linalg.eigvalsh(A.to_dense())[: args.nev]
        print(f"\n{name}  (n={A.n}, nnz={A.nnz_logical})")
        print(f"  {'method':<22}{'spmv':>8}{'iters':>8}{'conv':>6}{'max rel err':>14}{'time':>8}")
        cfg = SolverConfig(n_ev=args.nev, maxiter=5000, stagnation=False)
        rows = []
        for method in ("lanczos", "block-lanczos", "lobpcg", "chebfsi", "rmm-diis"):
            guess = None
            if method == "rmm-diis":
                # the Laplacian's smooth eigenvectors need almost the whole matrix
                m = A.n - 1 if name.startswith("laplacian") else 12
                guess = nested_guesses(principal_submatrix(A, m), A.n, args.nev)
            t0 = time.perf_counter()
            rep, st = run_method(A, method, cfg, guess)
            rows.append((method, rep, st, time.perf_counter() - t0))
        for first in ("block-lanczos", "lobpcg"):
            hc = HybridConfig(n_ev=args.nev, first_phase=first, max_first_iters=3000, maxiter=5000, stagnation=False)
            t0 = time.perf_counter()
            rep, st = hybrid_solve(A, initial_block(A.n, hc.n_b, None, 0), hc)
            rows.append((f"hybrid-{first}", rep, st, time.perf_counter() - t0))
        for method, rep, st, dt in rows:
            err = np.max(np.abs(rep.eigenvalues - exact) / np.abs(exact))
            n_conv = int(rep.converged.sum())
            print(f"  {method:<22}{st.spmv_actual:>8}{st.iterations:>8}{n_conv:>6}{err:>14.2e}{dt:>7.2f}s")


if __name__ == "__main__":
    main()
