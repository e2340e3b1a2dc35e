"""Iterative eigensolvers for sparse symmetric matrices, with product accounting.

Lanczos, block Lanczos, LOBPCG, Chebyshev-filtered subspace iteration and
RMM-DIIS share one operator interface and one statistics object, so their
SpMV/SpMM costs can be compared directly.  ``hybrid_solve`` runs a block
method until the Ritz values settle and refines with RMM-DIIS.
"""

from hybrideig.block_lanczos import block_lanczos_solve
from hybrideig.chebfsi import FilterParams, cheb_eval, chebfsi_solve, chebyshev_filter, estimate_spectral_bounds
from hybrideig.config import METHODS, SolverConfig, default_block_size, initial_block, run_method
from hybrideig.dense import (
    block_orthogonalize,
    cholesky,
    cholesky_qr,
    diis_ls,
    estimate_condition,
    jacobi_eig,
    sym_eig,
    sym_gen_eig,
)
from hybrideig.hybrid import HybridConfig, compute_tau, hybrid_solve
from hybrideig.instrumentation import (
    KernelRatio,
    MeteredOperator,
    SolveStats,
    effective_spmv,
    kernel_flops,
    measure_kernel_ratio,
    memory_estimate,
)
from hybrideig.lanczos import build_initial_vector, lanczos_solve
from hybrideig.lobpcg import PreconditionerSpec, SubspaceCollapse, lobpcg_solve, rayleigh_ritz
from hybrideig.problems import (
    ProblemSpec,
    build_problem,
    gen_laplacian_1d,
    gen_near_degenerate,
    gen_nested_pair,
    gen_prescribed_spectrum,
    laplacian_1d_eigenvalues,
    nested_guesses,
    pad_initial_guess,
    principal_submatrix,
)
from hybrideig.results import EigenReport, relative_residuals
from hybrideig.rmm_diis import DiisHistory, RefineOutcome, rmm_diis_refine, two_by_two_rr
from hybrideig.sparse import SparseSymMatrix, read_matrix_market, spmm, spmv, write_matrix_market

__all__ = [
    "METHODS",
    "DiisHistory",
    "EigenReport",
    "FilterParams",
    "HybridConfig",
    "KernelRatio",
    "MeteredOperator",
    "PreconditionerSpec",
    "ProblemSpec",
    "RefineOutcome",
    "SolveStats",
    "SolverConfig",
    "SparseSymMatrix",
    "SubspaceCollapse",
    "block_lanczos_solve",
    "block_orthogonalize",
    "build_initial_vector",
    "build_problem",
    "cheb_eval",
    "chebfsi_solve",
    "chebyshev_filter",
    "cholesky",
    "cholesky_qr",
    "compute_tau",
    "default_block_size",
    "diis_ls",
    "effective_spmv",
    "estimate_condition",
    "estimate_spectral_bounds",
    "gen_laplacian_1d",
    "gen_near_degenerate",
    "gen_nested_pair",
    "gen_prescribed_spectrum",
    "hybrid_solve",
    "initial_block",
    "jacobi_eig",
    "kernel_flops",
    "lanczos_solve",
    "laplacian_1d_eigenvalues",
    "lobpcg_solve",
    "measure_kernel_ratio",
    "memory_estimate",
    "nested_guesses",
    "pad_initial_guess",
    "principal_submatrix",
    "rayleigh_ritz",
    "read_matrix_market",
    "relative_residuals",
    "rmm_diis_refine",
    "run_method",
    "spmm",
    "spmv",
    "sym_eig",
    "sym_gen_eig",
    "two_by_two_rr",
    "write_matrix_market",
]
