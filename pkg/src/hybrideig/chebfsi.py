"""Chebyshev-filtered subspace iteration with locking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybrideig.dense import block_orthogonalize, cholesky_qr, sym_eig
from hybrideig.instrumentation import MeteredOperator, SolveStats
from hybrideig.results import EigenReport

BOUND_STEPS = 10


@dataclass(frozen=True)
class FilterParams:
    """Degree ``d`` filter damping ``[lambda_F, lambda_ub]`` into ``[-1, 1]``."""

    d: int
    lambda_F: float
    lambda_ub: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("filter degree must be at least 1")
        if not self.lambda_ub > self.lambda_F:
            raise ValueError(f"need lambda_ub > lambda_F, got {self.lambda_ub} <= {self.lambda_F}")

    @property
    def c(self):
        return 0.5 * (self.lambda_F + self.lambda_ub)

    @property
    def e(self):
        return 0.5 * (self.lambda_ub - self.lambda_F)

    def mapped(self, lam):
        return (np.asarray(lam, dtype=float) - self.c) / self.e

    def with_cutoff(self, lambda_F):
        return FilterParams(self.d, lambda_F, self.lambda_ub)


def cheb_eval(m, t):
    """``T_m(t)`` by the three-term recurrence (``T_0 = 1``, ``T_1 = t``); vectorized over ``t``."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    t = np.asarray(t, dtype=float)
    prev, cur = np.ones_like(t), t.copy()
    if m == 0:
        return prev if prev.ndim else float(prev)
    for _ in range(m - 1):
        prev, cur = cur, 2.0 * t * cur - prev
    return cur if cur.ndim else float(cur)


def _cutoff_below(lam, ub):
    """Largest usable cutoff strictly below ``ub`` (guards single-point spectra)."""
    if lam < ub:
        return lam
    return ub - max(abs(ub), 1.0) * 1e-8


def estimate_spectral_bounds(A, n_b, d=10, *, seed=0, stats: SolveStats | None = None, steps=BOUND_STEPS):
    """Filter parameters from a short Lanczos run.

    ``lambda_ub`` is the largest Ritz value plus the norm of its true
    residual; ``lambda_F`` is the ``(n_b+1)``-th smallest Ritz value when
    the run is long enough, else the midpoint of the Ritz range.  When
    ``stats`` is given the ``steps`` products are charged to it.
    """
    n = A.n
    if n <= steps:
        raise ValueError(f"matrix too small for a {steps}-step bound estimate")
    op = MeteredOperator(A, stats) if stats is not None else A
    rng = np.random.default_rng(seed)
    V = np.zeros((n, steps))
    alpha, beta = np.zeros(steps), np.zeros(steps)
    v = rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    k = steps
    for j in range(steps):
        w = op.matvec(V[:, j])
        alpha[j] = V[:, j] @ w
        for _ in range(2):
            w -= V[:, : j + 1] @ (V[:, : j + 1].T @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if j + 1 == steps:
            break
        if b <= 1e-14 * max(abs(alpha[j]), 1.0):
            # invariant subspace: its Ritz values are exact
            k = j + 1
            break
        V[:, j + 1] = w / b
    T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    thetas, Q = sym_eig(T)
    # |r| = beta_k |e_k^T q| equals the true residual under full reorthogonalization
    ub = float(thetas[-1] + beta[k - 1] * abs(Q[-1, -1]))
    lam_F = float(thetas[n_b]) if n_b < k else 0.5 * float(thetas[0] + thetas[-1])
    return FilterParams(d, _cutoff_below(lam_F, ub), ub)


def chebyshev_filter(A, Q, params: FilterParams, AQ=None):
    """``T_d((A - cI)/e) Q`` by the three-term recurrence.

    Performs ``d`` block products, or ``d - 1`` when ``AQ`` is supplied.
    """
    Q = np.asarray(Q, dtype=np.float64)
    c, e = params.c, params.e
    if AQ is None:
        AQ = A.matmat(Q)
    Y_prev = Q
    Y = (AQ - c * Q) / e
    for _ in range(params.d - 1):
        Y_next = (2.0 / e) * (A.matmat(Y) - c * Y) - Y_prev
        Y_prev, Y = Y, Y_next
    return Y


def _orthonormalize(Q_locked, Y, rng):
    """Orthonormal completion of ``Y`` against the locked block (CholeskyQR first)."""
    has_locked = Q_locked.shape[1] > 0
    if has_locked:
        for _ in range(2):
            Y = Y - Q_locked @ (Q_locked.T @ Y)
    try:
        Qy, _ = cholesky_qr(Y)
        if not has_locked or np.abs(Q_locked.T @ Qy).max() <= 1e-10:
            return Qy
    except np.linalg.LinAlgError:
        pass
    Qy, _, _ = block_orthogonalize(Q_locked if has_locked else None, Y, rng=rng)
    return Qy


def chebfsi_solve(A, X0, n_ev, tol=1e-6, maxiter=200, d=10, *, lambda_F=None, seed=0, callback=None):
    """Lowest ``n_ev`` eigenpairs by Chebyshev-filtered subspace iteration.

    Each outer iteration multiplies the unlocked columns ``d`` times: once
    to form the Rayleigh-Ritz projection and ``d - 1`` more inside the
    filter, which reuses that product.  Ritz pairs with relative residual
    below ``tol`` are locked: kept in the Rayleigh-Ritz but never filtered
    or multiplied again.  ``lambda_F`` overrides the estimated cutoff.
    """
    stats = SolveStats()
    with stats.wall():
        report = _chebfsi(A, X0, n_ev, tol, maxiter, d, lambda_F, seed, callback, stats)
    return report, stats


def _chebfsi(A, X0, n_ev, tol, maxiter, d, lambda_F, seed, callback, stats):
    op = MeteredOperator(A, stats)
    n = op.n
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim != 2 or X0.shape[0] != n:
        raise ValueError("X0 must be an n x n_b block")
    nb = X0.shape[1]
    if nb < n_ev:
        raise ValueError("block size must be at least n_ev")
    if d < 2:
        raise ValueError("filter degree must be at least 2")
    rng = np.random.default_rng(seed)

    params = estimate_spectral_bounds(A, nb, d, seed=seed, stats=stats)
    if lambda_F is not None:
        params = params.with_cutoff(_cutoff_below(float(lambda_F), params.lambda_ub))
    stats.extra.update(lambda_ub=params.lambda_ub, lambda_F_history=[params.lambda_F], locked_history=[], spmm_widths=[])

    with stats.timer("ortho"):
        Q, _, _ = block_orthogonalize(None, X0, rng=rng)
    HQ = np.zeros_like(Q)
    locked = np.zeros(nb, dtype=bool)
    status = "maxiter"
    thetas = rel = None
    for outer in range(1, maxiter + 1):
        free = ~locked
        stats.extra["spmm_widths"].append(int(free.sum()))
        HQ[:, free] = op.matmat(Q[:, free])
        with stats.timer("rayleigh_ritz"):
            M = Q.T @ HQ
            thetas, U = sym_eig(0.5 * (M + M.T))
            Q, HQ = Q @ U, HQ @ U
        R = HQ - Q * thetas
        rel = np.linalg.norm(R, axis=0) / np.maximum(np.abs(thetas), 1e-30)
        stats.record(thetas[:n_ev], rel[:n_ev])
        locked = rel < tol
        stats.extra["locked_history"].append(int(locked.sum()))
        stop = callback is not None and callback(outer, thetas, rel)
        if np.all(rel[:n_ev] < tol):
            status = "converged"
            break
        if stop:
            status = "stopped"
            break
        if outer == maxiter:
            break
        if thetas[-1] < params.lambda_F:
            params = params.with_cutoff(float(thetas[-1]))
        stats.extra["lambda_F_history"].append(params.lambda_F)

        free = ~locked
        Y = chebyshev_filter(op, Q[:, free], params, AQ=HQ[:, free])
        Y /= np.linalg.norm(Y, axis=0)
        with stats.timer("ortho"):
            Ql = Q[:, locked]
            Qy = _orthonormalize(Ql, Y, rng)
        Q = np.hstack([Ql, Qy])
        HQ = np.hstack([HQ[:, locked], np.zeros_like(Qy)])
        locked = np.arange(nb) < Ql.shape[1]

    conv = rel[:n_ev] < tol
    fail = [None if c else ("unconverged" if status == "converged" else status) for c in conv]
    return EigenReport("chebfsi", thetas[:n_ev], Q[:, :n_ev].copy(), rel[:n_ev], conv, fail, status)
