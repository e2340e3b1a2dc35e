"""Small dense kernels shared by the iterative solvers.

Everything here works on projected problems (a few hundred rows at most)
or on tall-skinny blocks whose column count is the block size.
"""

from __future__ import annotations

import numba
import numpy as np
import scipy.linalg
from scipy.linalg import lapack

JACOBI_MAX_DIM = 48


class NotSymmetricError(ValueError):
    pass


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the 1-based index of the failing leading minor.
    """

    def __init__(self, pivot, msg=None):
        self.pivot = int(pivot)
        super().__init__(msg or f"matrix is not positive definite (leading minor {pivot})")


class RankDeficientError(np.linalg.LinAlgError):
    """A block is numerically rank deficient; ``rank`` is the estimated rank."""

    def __init__(self, rank, ncols):
        self.rank = int(rank)
        self.ncols = int(ncols)
        super().__init__(f"block of {ncols} columns has estimated rank {rank}")


def _check_symmetric(T, rtol=1e-12):
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {T.shape}")
    scale = max(np.abs(T).max(initial=0.0), 1e-300)
    if np.abs(T - T.T).max(initial=0.0) > rtol * scale:
        raise NotSymmetricError("matrix is not symmetric")
    return 0.5 * (T + T.T)


@numba.njit(cache=True)
def _jacobi_eig(A, tol, max_sweeps):
    m = A.shape[0]
    A = A.copy()
    V = np.eye(m)
    for _ in range(max_sweeps):
        off = 0.0
        total = 0.0
        for i in range(m):
            for j in range(m):
                total += A[i, j] * A[i, j]
                if i != j:
                    off += A[i, j] * A[i, j]
        if off <= tol * tol * total:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(m):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(m):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(m)
    for i in range(m):
        w[i] = A[i, i]
    return w, V


def jacobi_eig(T, tol=1e-15, max_sweeps=60):
    """Cyclic Jacobi eigensolver; returns ascending eigenvalues and vectors."""
    T = _check_symmetric(T)
    if T.shape[0] == 0:
        return np.empty(0), np.empty((0, 0))
    w, V = _jacobi_eig(np.ascontiguousarray(T), tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_eig(T, method="auto"):
    """Eigen-decomposition of a small symmetric matrix.

    Returns ``(thetas, U)`` with ``thetas`` ascending and ``U`` orthonormal.
    ``method="auto"`` uses Jacobi rotations up to ``JACOBI_MAX_DIM`` rows and
    LAPACK beyond that.
    """
    T = _check_symmetric(T)
    if method == "jacobi" or (method == "auto" and T.shape[0] <= JACOBI_MAX_DIM):
        return jacobi_eig(T)
    if method not in ("auto", "lapack"):
        raise ValueError(f"unknown method {method!r}")
    w, U = np.linalg.eigh(T)
    return w, U


def cholesky(B):
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError` with the pivot."""
    B = np.asarray(B, dtype=np.float64)
    L, info = lapack.dpotrf(B, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return L


def sym_gen_eig(A, B, method="auto"):
    """Solve ``A C = B C diag(thetas)`` for a symmetric pencil with SPD ``B``.

    Reduced to standard form through ``B = L L^T``; ``C^T B C = I``.
    """
    A = _check_symmetric(A)
    B = _check_symmetric(B)
    L = cholesky(B)
    Y = scipy.linalg.solve_triangular(L, A, lower=True)
    M = scipy.linalg.solve_triangular(L, Y.T, lower=True)
    thetas, U = sym_eig(0.5 * (M + M.T), method=method)
    C = scipy.linalg.solve_triangular(L.T, U, lower=False)
    return thetas, C


def _estimate_rank(G, rtol=1e-12):
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    if w.size == 0 or w[-1] <= 0:
        return 0
    return int(np.count_nonzero(w > rtol * w[-1]))


def _cholqr_pass(X):
    G = X.T @ X
    try:
        R = cholesky(G).T
    except NotPositiveDefiniteError:
        raise RankDeficientError(_estimate_rank(G), X.shape[1]) from None
    if np.any(np.abs(np.diag(R)) <= 1e-8 * np.sqrt(max(np.trace(G), 1e-300))):
        raise RankDeficientError(_estimate_rank(G), X.shape[1])
    Q = scipy.linalg.solve_triangular(R, X.T, trans="T", lower=False).T
    return Q, R


def cholesky_qr(X, ortho_tol=1e-13):
    """CholeskyQR of a tall-skinny block, ``X = Q R``.

    A second pass is made when the first leaves ``|Q^T Q - I|`` above
    ``ortho_tol`` (CholeskyQR2).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    Q, R = _cholqr_pass(X)
    G = Q.T @ Q
    if np.abs(G - np.eye(G.shape[0])).max(initial=0.0) > ortho_tol:
        Q, R2 = _cholqr_pass(Q)
        R = R2 @ R
    return Q, R


def _project_out(B, w):
    if B is None or B.shape[1] == 0:
        return w, np.zeros(0)
    c = B.T @ w
    return w - B @ c, c


def block_orthogonalize(V_prev, W, rng=None, drop_tol=1e-12):
    """Orthonormalize ``W`` against an orthonormal basis ``V_prev`` and itself.

    Classical Gram-Schmidt with unconditional reorthogonalization.  Returns
    ``(Q, R, kept)`` where ``(I - V V^T) W = Q R`` up to the dropped parts of
    deficient columns.  A column whose projected norm falls below
    ``drop_tol`` times its original norm is replaced by a random vector
    orthogonalized against everything; it gets a zero diagonal in ``R`` and
    is not counted in ``kept``.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    n, b = W.shape
    if rng is None:
        rng = np.random.default_rng(0)
    if V_prev is not None and V_prev.shape[1] == 0:
        V_prev = None
    k_prev = 0 if V_prev is None else V_prev.shape[1]
    if k_prev + b > n:
        raise ValueError(f"cannot fit {k_prev + b} orthonormal columns in dimension {n}")

    # block projection against the existing basis, twice
    Wp = W.copy()
    if V_prev is not None:
        for _ in range(2):
            Wp -= V_prev @ (V_prev.T @ Wp)

    Q = np.zeros((n, b))
    R = np.zeros((b, b))
    kept = 0
    for j in range(b):
        w = Wp[:, j].copy()
        orig = np.linalg.norm(W[:, j])
        start = np.linalg.norm(w)
        for sweep in range(3):
            if sweep > 0 and V_prev is not None:
                w, _c = _project_out(V_prev, w)
            w, c = _project_out(Q[:, :j], w)
            R[:j, j] += c
            nrm = np.linalg.norm(w)
            # a third sweep only after heavy cancellation
            if sweep >= 1 and nrm > 1e-3 * start:
                break
        if orig > 0 and nrm > drop_tol * orig:
            Q[:, j] = w / nrm
            R[j, j] = nrm
            kept += 1
            continue
        # deficient direction: random fill orthogonal to everything so far
        for _attempt in range(10):
            z = rng.standard_normal(n)
            for _ in range(2):
                if V_prev is not None:
                    z, _c = _project_out(V_prev, z)
                z, _c = _project_out(Q[:, :j], z)
            zn = np.linalg.norm(z)
            if zn > 1e-8:
                Q[:, j] = z / zn
                break
        else:
            raise RuntimeError("failed to generate a replacement direction")
    return Q, R, kept


def diis_ls(residuals):
    """DIIS mixing weights for a residual history.

    Minimizes ``|sum_i a_i r_i|^2`` subject to ``sum_i a_i = 1``.  The
    constraint is eliminated through the last weight and a ridge of
    ``1e-12 * trace`` on the full Gram matrix keeps collinear histories
    solvable with symmetric (equal) weights.
    """
    R = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    if R.ndim != 2:
        raise ValueError("residual history must be a list of vectors")
    s = R.shape[0]
    if s == 0:
        raise ValueError("empty residual history")
    if s == 1:
        return np.ones(1)
    B = R @ R.T
    tr = np.trace(B)
    delta = 1e-12 * tr if tr > 0 else 1.0
    # a_last = 1 - sum(a_rest); objective |r_l + D a|^2 + delta |alpha|^2
    Dt_D = B[:-1, :-1] - B[:-1, -1:] - B[-1:, :-1] + B[-1, -1]
    Dt_r = B[:-1, -1] - B[-1, -1]
    ones = np.ones(s - 1)
    M = Dt_D + delta * (np.eye(s - 1) + np.outer(ones, ones))
    rhs = -Dt_r + delta * ones
    a = np.linalg.solve(M, rhs)
    return np.append(a, 1.0 - a.sum())


def estimate_condition(S):
    """Condition estimate ``sqrt(lmax / lmin)`` of the Gram matrix of ``S``."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    G = S.T @ S
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    lmax = w[-1]
    if lmax <= 0:
        raise ValueError("zero block has no condition number")
    lmin = w[0]
    if lmin <= np.finfo(float).eps * lmax * G.shape[0]:
        lmin = 1e-300
    return float(np.sqrt(lmax / lmin))
