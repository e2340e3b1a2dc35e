"""Single-vector Lanczos with full reorthogonalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from hybrideig.instrumentation import MeteredOperator, SolveStats
from hybrideig.results import EigenReport


@dataclass
class LanczosState:
    """Snapshot handed to the per-iteration callback (arrays are views)."""

    iteration: int
    V: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    w_norm: float
    thetas: np.ndarray
    Q: np.ndarray
    estimates: np.ndarray


def build_initial_vector(guesses):
    """Normalized average of the guesses, ``(1/k) sum z_i``."""
    Z = [np.asarray(z, dtype=np.float64) for z in guesses]
    if not Z:
        raise ValueError("need at least one guess")
    if len({z.shape for z in Z}) != 1:
        raise ValueError("guesses must have equal lengths")
    v = np.mean(Z, axis=0)
    nrm = np.linalg.norm(v)
    if nrm <= 1e-14 * max(np.linalg.norm(z) for z in Z):
        raise ValueError("guesses cancel to a zero starting vector")
    return v / nrm


def _tridiag_eig(alpha, beta):
    if alpha.size == 1:
        return alpha.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(alpha, beta)


def lanczos_solve(A, v0, n_ev, tol=1e-6, maxiter=500, *, seed=0, callback=None):
    """Lowest ``n_ev`` eigenpairs by Lanczos with full orthogonalization.

    Convergence uses the residual estimate ``|w_k| |e_k^T q| / |theta|``,
    so no extra products are spent on residuals.  ``callback(state)`` runs
    after every iteration; a truthy return stops the solve early.
    """
    stats = SolveStats()
    with stats.wall():
        report = _lanczos(A, v0, n_ev, tol, maxiter, seed, callback, stats)
    return report, stats


def _lanczos(A, v0, n_ev, tol, maxiter, seed, callback, stats):
    op = MeteredOperator(A, stats)
    n = op.n
    if tol <= 0:
        raise ValueError("tol must be positive")
    v0 = np.asarray(v0, dtype=np.float64)
    nrm0 = np.linalg.norm(v0)
    if v0.shape != (n,) or nrm0 == 0:
        raise ValueError("v0 must be a nonzero vector of length n")
    maxiter = min(maxiter, n)
    rng = np.random.default_rng(seed)
    breakdown_tol = 1e-14 * op.frobenius_norm()

    V = np.zeros((n, maxiter + 1))
    alpha = np.zeros(maxiter)
    beta = np.zeros(maxiter)
    V[:, 0] = v0 / nrm0
    status = "maxiter"
    thetas = Q = est = None
    k = 0
    for k in range(1, maxiter + 1):
        w = op.matvec(V[:, k - 1])
        with stats.timer("ortho"):
            alpha[k - 1] = V[:, k - 1] @ w
            Vk = V[:, :k]
            for _ in range(2):
                w -= Vk @ (Vk.T @ w)
            b = np.linalg.norm(w)
        with stats.timer("rayleigh_ritz"):
            thetas, Q = _tridiag_eig(alpha[:k], beta[: k - 1])
            est = b * np.abs(Q[-1, :])
        m = min(n_ev, k)
        rel = est[:m] / np.maximum(np.abs(thetas[:m]), 1e-30)
        stats.record(thetas[:m], rel)
        stop = callback is not None and callback(
            LanczosState(k, V[:, :k], alpha[:k], beta[: k - 1], b, thetas, Q, est)
        )
        if k >= n_ev and np.all(rel < tol):
            status = "converged"
            break
        if stop:
            status = "stopped"
            break
        if k == n:
            break
        if b > breakdown_tol:
            beta[k - 1] = b
            V[:, k] = w / b
            continue
        # breakdown: the Krylov space is invariant; restart from a fresh direction
        beta[k - 1] = 0.0
        with stats.timer("ortho"):
            z = rng.standard_normal(n)
            for _ in range(2):
                z -= Vk @ (Vk.T @ z)
            V[:, k] = z / np.linalg.norm(z)

    m = min(n_ev, k)
    X = V[:, :k] @ Q[:, :m]
    rel = est[:m] / np.maximum(np.abs(thetas[:m]), 1e-30)
    converged = rel < tol
    failures = [None if c else status if status != "converged" else "unconverged" for c in converged]
    return EigenReport("lanczos", thetas[:m], X, rel, converged, failures, status)
