"""Locally optimal block preconditioned conjugate gradient (LOBPCG)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hybrideig.dense import block_orthogonalize, estimate_condition, sym_eig
from hybrideig.instrumentation import MeteredOperator, SolveStats
from hybrideig.results import EigenReport

GRAM_DROP_TOL = 1e-14
P_DROP_TOL = 1e-3


class SubspaceCollapse(np.linalg.LinAlgError):
    """Rayleigh-Ritz kept fewer directions than requested.

    Carries the Ritz data of the directions that survived so callers can
    still use them.
    """

    def __init__(self, kept, wanted, thetas, C):
        self.kept = kept
        self.wanted = wanted
        self.thetas = thetas
        self.C = C
        super().__init__(
            f"subspace collapsed to {kept} directions (< {wanted}); stop iterating and "
            "hand the current Ritz vectors to a refinement method"
        )


@dataclass(frozen=True)
class PreconditionerSpec:
    """``kind="none"`` or ``"diagonal-shift"``.

    The diagonal-shift preconditioner divides residual row ``i`` of column
    ``j`` by ``max(d_i - sigma_j, floor)``; ``shift=None`` uses the current
    Ritz value of the column as ``sigma_j``.  ``floor=None`` resolves to
    ``1e-2`` times the spread of the diagonal.
    """

    kind: str = "none"
    shift: float | None = None
    floor: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "diagonal-shift"):
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")
        if self.floor is not None and not self.floor > 0:
            raise ValueError("preconditioner floor must be positive")

    def resolve_floor(self, d):
        if self.floor is not None:
            return self.floor
        spread = float(np.max(d) - np.min(d)) if d.size else 0.0
        if spread > 0:
            return 1e-2 * spread
        # constant diagonal: fall back to the diagonal's magnitude
        return 1e-2 * max(float(np.max(np.abs(d))) if d.size else 0.0, 1.0)


def apply_preconditioner(spec: PreconditionerSpec, A_diag, R, thetas=None):
    """Return ``K^{-1} R`` for the given preconditioner."""
    R = np.asarray(R, dtype=np.float64)
    if spec.kind == "none":
        return R.copy()
    d = np.asarray(A_diag, dtype=np.float64)
    floor = spec.resolve_floor(d)
    one_d = R.ndim == 1
    R2 = R[:, None] if one_d else R
    if spec.shift is not None:
        sigma = np.full(R2.shape[1], float(spec.shift))
    else:
        if thetas is None:
            raise ValueError("per-column shifts need the current Ritz values")
        sigma = np.asarray(thetas, dtype=np.float64).reshape(-1)
    denom = np.maximum(d[:, None] - sigma[None, :], floor)
    W = R2 / denom
    return W[:, 0] if one_d else W


def _rr_from_products(S, HS, n_b, drop_tol=GRAM_DROP_TOL):
    col = np.linalg.norm(S, axis=0)
    live = col > 0
    scale = np.zeros_like(col)
    scale[live] = 1.0 / col[live]
    Ss = S[:, live] * scale[live]
    HSs = HS[:, live] * scale[live]
    G = Ss.T @ Ss
    g, Vg = np.linalg.eigh(0.5 * (G + G.T))
    keep = g > drop_tol * g[-1]
    Z = Vg[:, keep] / np.sqrt(g[keep])
    M = Z.T @ (Ss.T @ HSs) @ Z
    thetas, U = sym_eig(0.5 * (M + M.T))
    C = np.zeros((S.shape[1], U.shape[1]))
    C[live] = scale[live, None] * (Z @ U)
    kept = int(keep.sum())
    if kept < n_b:
        raise SubspaceCollapse(kept, n_b, thetas, C)
    return C[:, :n_b], thetas[:n_b], kept


def rayleigh_ritz(A, S, n_b, HS=None, drop_tol=GRAM_DROP_TOL):
    """Ritz pairs of ``A`` on ``span(S)`` via the pencil ``(S^T A S, S^T S)``.

    Directions with Gram eigenvalue below ``drop_tol`` times the largest
    (after unit column scaling) are discarded.  Returns ``(C, thetas, kept)``
    with ``C`` of shape ``(S.shape[1], n_b)`` and ``thetas`` the ``n_b``
    smallest Ritz values; raises :class:`SubspaceCollapse` if fewer than
    ``n_b`` directions survive.
    """
    S = np.asarray(S, dtype=np.float64)
    if HS is None:
        HS = A.matmat(S)
    return _rr_from_products(S, HS, n_b, drop_tol)


@dataclass
class LobpcgState:
    iteration: int
    X: np.ndarray
    HX: np.ndarray
    P: np.ndarray | None
    HP: np.ndarray | None
    thetas: np.ndarray
    rel_residuals: np.ndarray
    kept: int
    condition: float


def _normalize_cols(B, HB):
    nrm = np.linalg.norm(B, axis=0)
    s = np.where(nrm > 0, 1.0 / np.where(nrm > 0, nrm, 1.0), 0.0)
    return B * s, HB * s


def _orthonormalize_p(P, HP, drop=P_DROP_TOL):
    """Orthonormal basis of the projected ``P`` with matching ``HP``.

    Directions with small singular values are formed by cancellation and
    their cached products are inaccurate, so they are discarded.
    """
    P, HP = _normalize_cols(P, HP)
    U, sig, Vt = np.linalg.svd(P, full_matrices=False)
    keep = sig > drop
    M = Vt[keep].T / sig[keep]
    return P @ M, HP @ M


def lobpcg_solve(
    A,
    X0,
    n_ev,
    tol=1e-6,
    maxiter=500,
    precond: PreconditionerSpec | None = None,
    *,
    revalidate_every=10,
    seed=0,
    callback=None,
):
    """Lowest ``n_ev`` eigenpairs by LOBPCG with block size ``X0.shape[1]``.

    Only ``W`` is multiplied by the operator each iteration; ``HX`` and
    ``HP`` follow the coefficient recurrences.  Every ``revalidate_every``
    iterations both are recomputed from scratch (one extra SpMM on
    ``2 n_b`` columns, counted) and the drift is recorded in
    ``stats.extra["drift"]``.  Converged columns are soft-locked: their
    ``W`` columns are zeroed but they stay in the Rayleigh-Ritz.
    """
    stats = SolveStats()
    with stats.wall():
        report = _lobpcg(A, X0, n_ev, tol, maxiter, precond or PreconditionerSpec(), revalidate_every, seed, callback, stats)
    return report, stats


def _lobpcg(A, X0, n_ev, tol, maxiter, precond, revalidate_every, seed, callback, stats):
    op = MeteredOperator(A, stats)
    n = op.n
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim != 2 or X0.shape[0] != n:
        raise ValueError("X0 must be an n x n_b block")
    nb = X0.shape[1]
    if nb < n_ev:
        raise ValueError("block size must be at least n_ev")
    if 3 * nb > n:
        raise ValueError("block size too large for the problem dimension")
    diag = op.diagonal() if precond.kind != "none" else None
    stats.extra["drift"] = []
    stats.extra["trace"] = []
    rng = np.random.default_rng(seed)

    def residual_info(X, HX, thetas):
        Rm = HX - X * thetas
        rel = np.linalg.norm(Rm, axis=0) / np.maximum(np.abs(thetas), 1e-30)
        return Rm, rel

    def finish(X, thetas, rel, status, HX=None):
        conv = rel[:n_ev] < tol
        fail = [None if c else ("unconverged" if status == "converged" else status) for c in conv]
        prod = HX[:, :n_ev].copy() if HX is not None else None
        return EigenReport("lobpcg", thetas[:n_ev], X[:, :n_ev].copy(), rel[:n_ev], conv, fail, status, prod)

    HX0 = op.matmat(X0)
    with stats.timer("rayleigh_ritz"):
        try:
            C, thetas, kept = _rr_from_products(X0, HX0, nb)
        except SubspaceCollapse as exc:
            m = exc.kept
            if m == 0:
                raise
            X = X0 @ exc.C[:, :m]
            HX = HX0 @ exc.C[:, :m]
            thetas = exc.thetas[:m]
            _, rel = residual_info(X, HX, thetas)
            stats.record(thetas[:n_ev], rel[:n_ev])
            stats.extra["unstable"] = True
            if m < n_ev:
                raise
            return finish(X, thetas, rel, "unstable", HX)
    X, HX = X0 @ C, HX0 @ C
    Rm, rel = residual_info(X, HX, thetas)
    stats.record(thetas[:n_ev], rel[:n_ev])
    stats.extra["trace"].append(float(thetas.sum()))
    P = HP = None
    status = "maxiter"
    it = 1
    if callback is not None and callback(LobpcgState(1, X, HX, P, HP, thetas, rel, kept, 1.0)):
        status = "stopped"
    if np.all(rel[:n_ev] < tol):
        return finish(X, thetas, rel, "converged", HX)
    if status == "stopped":
        return finish(X, thetas, rel, status, HX)

    for it in range(2, maxiter + 1):
        W = apply_preconditioner(precond, diag, Rm, thetas)
        active = rel >= tol
        with stats.timer("ortho"):
            # orthonormal [X W] and P projected against both keep the Gram matrix well conditioned
            Wa, _, _ = block_orthogonalize(X, W[:, active], rng=rng)
            W = np.zeros_like(W)
            W[:, active] = Wa
        HW = op.matmat(W)
        if P is None:
            S, HS = np.hstack([X, W]), np.hstack([HX, HW])
        else:
            with stats.timer("ortho"):
                XtP, WtP = X.T @ P, W.T @ P
                Pn, HPn = _orthonormalize_p(P - X @ XtP - W @ WtP, HP - HX @ XtP - HW @ WtP)
            S, HS = np.hstack([X, W, Pn]), np.hstack([HX, HW, HPn])
        with stats.timer("rayleigh_ritz"):
            live = np.linalg.norm(S, axis=0) > 0
            cond = estimate_condition(S[:, live] / np.linalg.norm(S[:, live], axis=0))
            stats.condition_history.append(cond)
            try:
                C, thetas, kept = _rr_from_products(S, HS, nb)
            except SubspaceCollapse:
                stats.extra["unstable"] = True
                status = "unstable"
                break
        C1, C2 = C[:nb], C[nb : 2 * nb]
        X, HX = S @ C, HS @ C
        if P is None:
            P, HP = W @ C2, HW @ C2
        else:
            C3 = C[2 * nb :]
            P, HP = W @ C2 + Pn @ C3, HW @ C2 + HPn @ C3
        if revalidate_every and it % revalidate_every == 0:
            fresh = op.matmat(np.hstack([X, P]))
            HXf, HPf = fresh[:, :nb], fresh[:, nb:]
            stats.extra["drift"].append(
                (
                    it,
                    float(np.linalg.norm(HX - HXf) / max(np.linalg.norm(HXf), 1e-300)),
                    float(np.linalg.norm(HP - HPf) / max(np.linalg.norm(HPf), 1e-300)),
                )
            )
            HX, HP = HXf, HPf
        Rm, rel = residual_info(X, HX, thetas)
        stats.record(thetas[:n_ev], rel[:n_ev])
        stats.extra["trace"].append(float(thetas.sum()))
        stop = callback is not None and callback(LobpcgState(it, X, HX, P, HP, thetas, rel, kept, cond))
        if np.all(rel[:n_ev] < tol):
            status = "converged"
            break
        if stop:
            status = "stopped"
            break
    return finish(X, thetas, rel, status, HX)
