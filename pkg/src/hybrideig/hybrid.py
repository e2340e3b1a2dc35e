"""Two-phase solver: a block method until the Ritz values settle, then RMM-DIIS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybrideig.block_lanczos import block_lanczos_solve
from hybrideig.config import SolverConfig, initial_block, outcomes_to_report
from hybrideig.instrumentation import SolveStats
from hybrideig.lobpcg import PreconditionerSpec, SubspaceCollapse, lobpcg_solve
from hybrideig.results import EigenReport
from hybrideig.rmm_diis import parse_batch_mode, rmm_diis_refine

FIRST_PHASES = ("block-lanczos", "lobpcg")


def compute_tau(theta_prev, theta_cur) -> float:
    """Averaged relative change ``(1/n) sqrt(sum ((cur - prev) / cur)^2)``."""
    prev = np.asarray(theta_prev, dtype=float).reshape(-1)
    cur = np.asarray(theta_cur, dtype=float).reshape(-1)
    if prev.shape != cur.shape or cur.size == 0:
        raise ValueError("need two equally long, non-empty lists of Ritz values")
    rel = (cur - prev) / np.maximum(np.abs(cur), 1e-30)
    return float(np.sqrt(np.sum(rel * rel)) / cur.size)


@dataclass
class HybridConfig(SolverConfig):
    first_phase: str = "block-lanczos"
    tau_switch: float = 1e-7
    max_first_iters: int = 100
    spmm_strategy: str = "always-spmm"
    # phase-2 iteration cap; None means maxiter_for("rmm-diis")
    refine_maxiter: int | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.first_phase not in FIRST_PHASES:
            raise ValueError(f"first_phase must be one of {FIRST_PHASES}")
        if not self.tau_switch > 0:
            raise ValueError("tau_switch must be positive")
        if self.max_first_iters < 1:
            raise ValueError("max_first_iters must be positive")
        if self.refine_maxiter is not None and self.refine_maxiter < 1:
            raise ValueError("refine_maxiter must be positive")
        parse_batch_mode(self.spmm_strategy)


class _TauMonitor:
    """Per-iteration callback: records tau on the lowest ``n_ev`` Ritz values and asks to stop."""

    def __init__(self, n_ev, tau_switch, max_iters, stats: SolveStats):
        self.n_ev, self.tau_switch, self.max_iters = n_ev, tau_switch, max_iters
        self.stats = stats
        self.prev = None
        self.reason = None
        self.iteration = 0

    def __call__(self, state):
        self.iteration = state.iteration
        cur = np.array(state.thetas[: self.n_ev], dtype=float)
        if self.prev is not None and self.prev.size == cur.size:
            tau = compute_tau(self.prev, cur)
            self.stats.tau_history.append(tau)
            if tau <= self.tau_switch:
                self.reason = "tau"
                return True
        self.prev = cur
        if state.iteration >= self.max_iters:
            self.reason = "max_first_iters"
            return True
        return False


def hybrid_solve(A, X0, config: HybridConfig) -> tuple[EigenReport, SolveStats]:
    """Block Lanczos or LOBPCG, switching to RMM-DIIS once ``tau <= tau_switch``.

    Phase 1 also ends on LOBPCG instability, on its own convergence, or
    after ``max_first_iters`` iterations.  Its lowest ``n_ev`` Ritz vectors
    seed phase 2.  The returned stats merge both phases; ``extra`` holds the
    per-phase product counts and the switch reason.
    """
    c = config
    if X0 is None:
        X0 = initial_block(A.n, c.n_b, None, c.seed)
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim != 2 or X0.shape[1] < c.n_ev:
        raise ValueError("X0 must be an n x n_b block with n_b >= n_ev")

    s1_tau = SolveStats()
    monitor = _TauMonitor(c.n_ev, c.tau_switch, c.max_first_iters, s1_tau)
    maxiter = max(c.max_first_iters, 1)
    try:
        if c.first_phase == "block-lanczos":
            rep1, s1 = block_lanczos_solve(A, X0, c.n_ev, c.tol, maxiter, seed=c.seed, callback=monitor)
        else:
            rep1, s1 = lobpcg_solve(
                A, X0, c.n_ev, c.tol, maxiter, PreconditionerSpec(c.precond), seed=c.seed, callback=monitor
            )
    except SubspaceCollapse as exc:
        raise RuntimeError(f"first phase produced no usable approximations: {exc}") from exc
    s1.tau_history = s1_tau.tau_history
    if rep1.status == "unstable":
        reason = "instability"
    elif rep1.status == "converged":
        reason = "converged"
    else:
        reason = monitor.reason or "max_first_iters"

    outcomes, s2 = rmm_diis_refine(
        A,
        rep1.eigenvectors[:, : c.n_ev],
        c.tol,
        c.refine_maxiter or c.maxiter_for("rmm-diis"),
        c.s_max,
        c.spmm_strategy,
        stagnation=c.stagnation,
        HX0=None if rep1.products is None else rep1.products[:, : c.n_ev],
    )
    order = np.argsort([o.theta for o in outcomes], kind="stable")
    report = outcomes_to_report([outcomes[i] for i in order], method=f"hybrid-{c.first_phase}")

    stats = SolveStats()
    stats.merge(s1, "phase1")
    stats.merge(s2, "phase2")
    stats.extra.update(
        phase1_spmv=s1.spmv_actual,
        phase2_spmv=s2.spmv_actual,
        phase1_iterations=s1.iterations,
        phase2_iterations=s2.iterations,
        switch_reason=reason,
        first_phase=c.first_phase,
    )
    return report, stats
