"""Synthetic symmetric test problems with known spectra.

Prescribed-spectrum matrices start from ``diag(spectrum)`` and apply
seeded Givens similarity transforms between nearby indices, so the
spectrum is exact up to rounding and the matrix stays banded-sparse.
Low eigenvectors stay concentrated on the leading indices when the
spectrum is sorted, which is what makes zero-padded guesses from a
leading principal submatrix useful (the analogue of solving in a smaller
model space first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hybrideig.sparse import SparseSymMatrix


def gen_laplacian_1d(n, storage_mode="full") -> SparseSymMatrix:
    """Tridiagonal ``[-1, 2, -1]``; eigenvalues ``2 - 2 cos(j pi / (n + 1))``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    i = np.arange(n)
    rows = np.concatenate([i, i[1:], i[:-1]])
    cols = np.concatenate([i, i[:-1], i[1:]])
    vals = np.concatenate([np.full(n, 2.0), np.full(2 * (n - 1), -1.0)])
    A = SparseSymMatrix.from_coo(n, rows, cols, vals, "full")
    return A.to_lower() if storage_mode == "lower" else A


def laplacian_1d_eigenvalues(n):
    j = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(j * np.pi / (n + 1))


def gen_prescribed_spectrum(spectrum, rotations=None, seed=0, bandwidth=3) -> SparseSymMatrix:
    """Sparse symmetric matrix with exactly the given eigenvalues.

    ``rotations`` random Givens rotations ``G A G^T`` act on index pairs
    ``(p, q)`` with ``0 < q - p <= bandwidth``; defaults to ``4 n``.
    """
    lam = np.asarray(spectrum, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("spectrum must list at least two values")
    if not np.all(np.isfinite(lam)):
        raise ValueError("spectrum must be finite")
    n = lam.size
    if rotations is None:
        rotations = 4 * n
    rng = np.random.default_rng(seed)
    rows = [{i: lam[i]} for i in range(n)]

    for _ in range(int(rotations)):
        p = int(rng.integers(0, n - 1))
        q = p + int(rng.integers(1, min(bandwidth, n - 1 - p) + 1))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(phi), np.sin(phi)
        rp, rq = rows[p], rows[q]
        app, aqq, apq = rp.get(p, 0.0), rq.get(q, 0.0), rp.get(q, 0.0)
        others = (rp.keys() | rq.keys()) - {p, q}
        for k in others:
            a, b = rp.get(k, 0.0), rq.get(k, 0.0)
            new_p, new_q = c * a - s * b, s * a + c * b
            rp[k] = rows[k][p] = new_p
            rq[k] = rows[k][q] = new_q
        rp[p] = c * c * app - 2 * c * s * apq + s * s * aqq
        rq[q] = s * s * app + 2 * c * s * apq + c * c * aqq
        rp[q] = rq[p] = c * s * (app - aqq) + (c * c - s * s) * apq

    r, cidx, v = [], [], []
    for i, row in enumerate(rows):
        for j, val in row.items():
            if val != 0.0 or i == j:
                r.append(i)
                cidx.append(j)
                v.append(val)
    return SparseSymMatrix.from_coo(n, r, cidx, v, "full")


def separated_spectrum(n, n_low=12, ratio=1.1, bulk_max=50.0):
    """Ascending spectrum: ``n_low`` values growing geometrically by ``ratio``, then a uniform bulk.

    With the default ``ratio`` every low relative gap is 10%, and the bulk
    starts 25% above the last low value.
    """
    n_low = min(n_low, n)
    low = ratio ** np.arange(n_low)
    if n == n_low:
        return low
    bulk = np.linspace(1.25 * low[-1], bulk_max, n - n_low)
    return np.concatenate([low, bulk])


def near_degenerate_spectrum(n, gaps=(0.006, 0.0003), position=7, **kw):
    """Like :func:`separated_spectrum` but with a near-degenerate cluster.

    Eigenvalue ``position + i`` (1-based) sits a relative gap ``gaps[i - 1]``
    above eigenvalue ``position + i - 1``.
    """
    gaps = tuple(float(g) for g in gaps)
    if any(g < 0 for g in gaps):
        raise ValueError("gaps must be non-negative")
    lam = separated_spectrum(n, **kw).copy()
    k = position - 1
    if k + len(gaps) >= n:
        raise ValueError("cluster does not fit in the spectrum")
    for i, g in enumerate(gaps, start=1):
        lam[k + i] = lam[k + i - 1] * (1.0 + g)
    if k + len(gaps) + 1 < n and lam[k + len(gaps) + 1] <= lam[k + len(gaps)]:
        raise ValueError("cluster overlaps the next eigenvalue")
    return lam


def gen_near_degenerate(n, gaps=(0.006, 0.0003), seed=0, rotations=None, position=7) -> SparseSymMatrix:
    """Prescribed-spectrum matrix whose eigenvalues 7, 8, 9 differ by 0.6% and 0.03%."""
    lam = near_degenerate_spectrum(n, gaps=gaps, position=position)
    return gen_prescribed_spectrum(lam, rotations=rotations, seed=seed)


def principal_submatrix(A: SparseSymMatrix, m) -> SparseSymMatrix:
    """Leading ``m x m`` block of ``A`` in the same storage mode."""
    if not 1 <= m <= A.n:
        raise ValueError("m must lie in [1, n]")
    rows = np.repeat(np.arange(A.n), np.diff(A.row_offsets))
    keep = (rows < m) & (A.col_indices < m)
    return SparseSymMatrix.from_coo(m, rows[keep], A.col_indices[keep], A.values[keep], A.storage_mode)


def gen_nested_pair(n, m, spectrum=None, seed=0, rotations=None):
    """Return ``(A_small, A)`` with ``A_small`` the leading ``m x m`` block of ``A``."""
    if m > n:
        raise ValueError("nested problem must be no larger than the full problem")
    lam = separated_spectrum(n) if spectrum is None else spectrum
    A = gen_prescribed_spectrum(lam, rotations=rotations, seed=seed)
    return (A if m == n else principal_submatrix(A, m)), A


def pad_initial_guess(X_small, n) -> np.ndarray:
    """Zero-pad ``m x b`` guesses to ``n`` rows and renormalize each column."""
    X_small = np.asarray(X_small, dtype=np.float64)
    if X_small.ndim == 1:
        X_small = X_small[:, None]
    m, b = X_small.shape
    if m > n:
        raise ValueError("cannot pad to a smaller dimension")
    norms = np.linalg.norm(X_small, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero guess column")
    X = np.zeros((n, b))
    X[:m] = X_small / norms
    return X


def nested_guesses(A_small: SparseSymMatrix, n, k) -> np.ndarray:
    """Lowest ``k`` eigenvectors of the small problem (dense solve), zero-padded to ``n`` rows."""
    w, V = np.linalg.eigh(A_small.to_dense())
    return pad_initial_guess(V[:, :k], n)


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    n: int
    m: int | None = None
    seed: int = 0
    rotations: int | None = None
    spectrum: tuple | None = None
    gaps: tuple = (0.006, 0.0003)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("laplacian1d", "prescribed", "nested", "near-degenerate"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.kind == "nested" and (self.m is None or self.m >= self.n):
            raise ValueError("nested problems need m < n")


def build_problem(spec: ProblemSpec):
    """Materialize a spec. Nested specs return ``(A_small, A)``, others a single matrix."""
    if spec.kind == "laplacian1d":
        return gen_laplacian_1d(spec.n)
    if spec.kind == "prescribed":
        lam = separated_spectrum(spec.n) if spec.spectrum is None else spec.spectrum
        return gen_prescribed_spectrum(lam, rotations=spec.rotations, seed=spec.seed)
    if spec.kind == "near-degenerate":
        return gen_near_degenerate(spec.n, gaps=spec.gaps, seed=spec.seed, rotations=spec.rotations)
    return gen_nested_pair(spec.n, spec.m, spectrum=spec.spectrum, seed=spec.seed, rotations=spec.rotations)
