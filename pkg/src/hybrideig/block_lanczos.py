"""Block Lanczos with full block reorthogonalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybrideig.dense import block_orthogonalize, sym_eig
from hybrideig.instrumentation import MeteredOperator, SolveStats
from hybrideig.results import EigenReport


@dataclass
class BlockLanczosState:
    iteration: int
    basis: np.ndarray
    T: np.ndarray
    W_last: np.ndarray
    thetas: np.ndarray
    U: np.ndarray
    estimates: np.ndarray


def block_lanczos_solve(A, X0, n_ev, tol=1e-6, maxiter=100, *, seed=0, callback=None):
    """Lowest ``n_ev`` eigenpairs from a block Krylov space started at ``X0``.

    One SpMM on ``n_b`` columns per iteration.  The projected matrix grows by
    one diagonal block ``V_j^T H V_j`` and one coupling block (the triangular
    factor of the orthogonalized ``W_j``) per iteration.  When fewer than
    ``n_b`` directions are left the final block is narrower and completes
    the space, so the run always terminates with exact Ritz pairs.  The stopping test
    uses ``|W_k|_F |E_k^T q| / |theta|``.
    """
    stats = SolveStats()
    with stats.wall():
        report = _block_lanczos(A, X0, n_ev, tol, maxiter, seed, callback, stats)
    return report, stats


def _block_lanczos(A, X0, n_ev, tol, maxiter, seed, callback, stats):
    op = MeteredOperator(A, stats)
    n = op.n
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim != 2 or X0.shape[0] != n:
        raise ValueError("X0 must be an n x n_b block")
    nb = X0.shape[1]
    if nb < n_ev:
        raise ValueError("block size must be at least n_ev")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    # the last block may be narrower so that the basis can fill the whole space
    maxiter = max(1, min(maxiter, -(-n // nb)))
    cap = min(nb * maxiter, n)

    with stats.timer("ortho"):
        V1, _, _ = block_orthogonalize(None, X0, rng=rng)
    basis = np.zeros((n, cap))
    basis[:, :nb] = V1
    T = np.zeros((cap, cap))
    status = "maxiter"
    thetas = U = est = None
    k, lo, hi = 0, 0, nb
    for k in range(1, maxiter + 1):
        Vj = basis[:, lo:hi]
        HV = op.matmat(Vj)
        with stats.timer("ortho"):
            D = Vj.T @ HV
            T[lo:hi, lo:hi] = 0.5 * (D + D.T)
            nxt = min(nb, n - hi)
            if nxt == nb:
                Vnext, R, _ = block_orthogonalize(basis[:, :hi], HV, rng=rng)
                W_last = Vnext @ R
            elif nxt > 0:
                # fewer than n_b directions remain: complete the space
                Vnext, _, _ = block_orthogonalize(basis[:, :hi], HV[:, :nxt], rng=rng)
                R = Vnext.T @ HV
                W_last = Vnext @ R
            else:
                W_last = HV.copy()
                for _ in range(2):
                    W_last -= basis[:, :hi] @ (basis[:, :hi].T @ W_last)
                R = None
            w_norm = np.linalg.norm(W_last)
        with stats.timer("rayleigh_ritz"):
            thetas, U = sym_eig(T[:hi, :hi])
            est = w_norm * np.linalg.norm(U[lo:hi, :], axis=0)
        rel = est[:n_ev] / np.maximum(np.abs(thetas[:n_ev]), 1e-30)
        stats.record(thetas[:n_ev], rel)
        stop = callback is not None and callback(
            BlockLanczosState(k, basis[:, :hi], T[:hi, :hi], W_last, thetas, U, est)
        )
        if np.all(rel < tol):
            status = "converged"
            break
        if stop:
            status = "stopped"
            break
        if R is None or k == maxiter:
            break
        basis[:, hi : hi + nxt] = Vnext
        T[hi : hi + nxt, lo:hi] = R
        T[lo:hi, hi : hi + nxt] = R.T
        lo, hi = hi, hi + nxt

    X = basis[:, :hi] @ U[:, :n_ev]
    # H V_k = V_k T_k + W_k E_k^T, so H X needs no further products
    HX = basis[:, :hi] @ (T[:hi, :hi] @ U[:, :n_ev]) + W_last @ U[lo:hi, :n_ev]
    rel = est[:n_ev] / np.maximum(np.abs(thetas[:n_ev]), 1e-30)
    converged = rel < tol
    failures = [None if c else status if status != "converged" else "unconverged" for c in converged]
    return EigenReport("block-lanczos", thetas[:n_ev], X, rel, converged, failures, status, HX)
