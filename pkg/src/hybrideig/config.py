"""Solver tunables and a single entry point that dispatches on method name."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from hybrideig.block_lanczos import block_lanczos_solve
from hybrideig.chebfsi import chebfsi_solve
from hybrideig.instrumentation import SolveStats
from hybrideig.lanczos import build_initial_vector, lanczos_solve
from hybrideig.lobpcg import PreconditionerSpec, lobpcg_solve
from hybrideig.results import EigenReport
from hybrideig.rmm_diis import rmm_diis_refine

METHODS = ("lanczos", "block-lanczos", "lobpcg", "chebfsi", "rmm-diis")

DEFAULT_MAXITER = {"lanczos": 1000, "block-lanczos": 200, "lobpcg": 2000, "chebfsi": 500, "rmm-diis": 200}


def default_block_size(n_ev):
    """8 for up to 5 wanted pairs, 16 for up to 13, and so on (multiples of 8 leaving 3 spare columns)."""
    return 8 * -(-(n_ev + 3) // 8)


@dataclass
class SolverConfig:
    n_ev: int = 5
    n_b: int | None = None
    tol: float = 1e-6
    maxiter: int | None = None
    d: int = 10
    s_max: int = 15
    precond: str = "none"
    seed: int = 0
    stagnation: bool = True

    def __post_init__(self):
        if self.n_ev < 1:
            raise ValueError("n_ev must be positive")
        if self.n_b is None:
            self.n_b = default_block_size(self.n_ev)
        if self.n_b < self.n_ev:
            raise ValueError("n_b must be at least n_ev")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be positive")
        if self.d < 2:
            raise ValueError("filter degree must be at least 2")
        if self.s_max < 1:
            raise ValueError("s_max must be positive")
        if self.precond not in ("none", "diagonal-shift"):
            raise ValueError("precond must be 'none' or 'diagonal-shift'")

    def maxiter_for(self, method):
        return self.maxiter if self.maxiter is not None else DEFAULT_MAXITER[method]

    def to_dict(self):
        return asdict(self)


def initial_block(n, n_b, guess=None, seed=0):
    """``n x n_b`` start block: guess columns first, seeded random fill after."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n_b))
    if guess is not None:
        G = np.asarray(guess, dtype=np.float64)
        G = G[:, None] if G.ndim == 1 else G
        if G.shape[0] != n:
            raise ValueError(f"guess has {G.shape[0]} rows, expected {n}")
        k = min(G.shape[1], n_b)
        X[:, :k] = G[:, :k]
    return X


def outcomes_to_report(outcomes, method="rmm-diis") -> EigenReport:
    conv = [o.converged for o in outcomes]
    return EigenReport(
        method,
        [o.theta for o in outcomes],
        np.column_stack([o.x for o in outcomes]),
        [o.rel_residual for o in outcomes],
        conv,
        [o.failure for o in outcomes],
        "converged" if all(conv) else "partial",
    )


def run_method(A, method, config: SolverConfig, guess=None) -> tuple[EigenReport, SolveStats]:
    """Run one solver by name with the given configuration."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    c = config
    maxiter = c.maxiter_for(method)
    if method == "rmm-diis":
        if guess is None:
            raise ValueError("rmm-diis needs initial guesses")
        G = np.asarray(guess, dtype=np.float64)
        G = G[:, None] if G.ndim == 1 else G
        outcomes, stats = rmm_diis_refine(A, G[:, : c.n_ev], c.tol, maxiter, c.s_max, stagnation=c.stagnation)
        return outcomes_to_report(outcomes), stats
    if method == "lanczos":
        if guess is not None:
            G = np.asarray(guess, dtype=np.float64)
            v0 = build_initial_vector(list((G[:, None] if G.ndim == 1 else G).T))
        else:
            v0 = np.random.default_rng(c.seed).standard_normal(A.n)
        return lanczos_solve(A, v0, c.n_ev, c.tol, maxiter, seed=c.seed)
    X0 = initial_block(A.n, c.n_b, guess, c.seed)
    if method == "block-lanczos":
        return block_lanczos_solve(A, X0, c.n_ev, c.tol, maxiter, seed=c.seed)
    if method == "lobpcg":
        return lobpcg_solve(A, X0, c.n_ev, c.tol, maxiter, PreconditionerSpec(c.precond), seed=c.seed)
    return chebfsi_solve(A, X0, c.n_ev, c.tol, maxiter, c.d, seed=c.seed)
