"""CSR storage for sparse symmetric matrices, SpMV/SpMM and Matrix Market I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from hybrideig import _kernels

StorageMode = Literal["full", "lower"]

SYMMETRY_RTOL = 1e-12


class MatrixMarketError(ValueError):
    """Raised for unreadable or non-conforming Matrix Market files."""


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Immutable sparse symmetric matrix in CSR form.

    ``storage_mode="full"`` stores both triangles; ``"lower"`` stores only
    entries with ``col <= row`` and the kernels symmetrize on the fly.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    storage_mode: StorageMode = "full"
    _diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        data = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", indptr)
        object.__setattr__(self, "col_indices", indices)
        object.__setattr__(self, "values", data)
        self._validate()
        diag = np.zeros(self.n)
        rows = np.repeat(np.arange(self.n), np.diff(indptr))
        on_diag = rows == indices
        np.add.at(diag, rows[on_diag], data[on_diag])
        diag.setflags(write=False)
        object.__setattr__(self, "_diag", diag)

    def _validate(self):
        n = self.n
        indptr, indices, data = self.row_offsets, self.col_indices, self.values
        if self.storage_mode not in ("full", "lower"):
            raise ValueError(f"unknown storage mode {self.storage_mode!r}")
        if n < 0 or indptr.shape != (n + 1,):
            raise ValueError("row_offsets must have length n + 1")
        if indptr[0] != 0 or indptr[-1] != indices.size or indices.size != data.size:
            raise ValueError("row_offsets inconsistent with nnz")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= n):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(data)):
            raise ValueError("matrix values must be finite")
        rows = np.repeat(np.arange(n), np.diff(indptr))
        if indices.size > 1:
            same_row = rows[1:] == rows[:-1]
            if np.any(indices[1:][same_row] <= indices[:-1][same_row]):
                raise ValueError("column indices must be strictly ascending within a row")
        if self.storage_mode == "lower":
            if np.any(indices > rows):
                raise ValueError("lower-half storage holds an entry above the diagonal")
            return
        # full storage: the transpose must carry the same values
        order = np.lexsort((rows, indices))
        t_rows, t_cols, t_vals = indices[order], rows[order], data[order]
        if not (np.array_equal(t_rows, rows) and np.array_equal(t_cols, indices)):
            raise ValueError("full storage is not structurally symmetric")
        if np.any(np.abs(data - t_vals) > SYMMETRY_RTOL * np.maximum(1.0, np.abs(data))):
            raise ValueError("full storage is not numerically symmetric")

    # construction -------------------------------------------------------

    @classmethod
    def from_coo(cls, n, rows, cols, vals, storage_mode: StorageMode = "full"):
        """Build from coordinate triplets; duplicates are summed, zeros kept."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise ValueError("index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keep = np.ones(rows.size, dtype=bool)
            keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(keep)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, cols, vals, storage_mode)

    @classmethod
    def from_dense(cls, M, storage_mode: StorageMode = "full", drop_zeros=True):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        if storage_mode == "lower":
            M = np.tril(M)
        mask = M != 0 if drop_zeros else np.ones_like(M, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls.from_coo(M.shape[0], rows, cols, M[rows, cols], storage_mode)

    def to_dense(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        M = np.zeros((self.n, self.n))
        M[rows, self.col_indices] = self.values
        if self.storage_mode == "lower":
            off = rows != self.col_indices
            M[self.col_indices[off], rows[off]] = self.values[off]
        return M

    def to_lower(self) -> SparseSymMatrix:
        if self.storage_mode == "lower":
            return self
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        keep = self.col_indices <= rows
        return SparseSymMatrix.from_coo(
            self.n, rows[keep], self.col_indices[keep], self.values[keep], "lower"
        )

    def to_full(self) -> SparseSymMatrix:
        if self.storage_mode == "full":
            return self
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        off = rows != self.col_indices
        r = np.concatenate([rows, self.col_indices[off]])
        c = np.concatenate([self.col_indices, rows[off]])
        v = np.concatenate([self.values, self.values[off]])
        return SparseSymMatrix.from_coo(self.n, r, c, v, "full")

    # properties ---------------------------------------------------------

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self) -> int:
        """Number of stored entries."""
        return int(self.values.size)

    @property
    def nnz_logical(self) -> int:
        """Nonzeros of the full symmetric matrix, both triangles counted."""
        if self.storage_mode == "full":
            return self.nnz
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        n_diag = int(np.count_nonzero(rows == self.col_indices))
        return 2 * self.nnz - n_diag

    def diagonal(self) -> np.ndarray:
        return self._diag

    def frobenius_norm(self) -> float:
        if self.storage_mode == "full":
            return float(np.linalg.norm(self.values))
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        w = np.where(rows == self.col_indices, 1.0, 2.0)
        return float(np.sqrt(np.sum(w * self.values**2)))

    def norm_bound(self) -> float:
        """Largest absolute row sum, an upper bound on the spectral norm."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        sums = np.zeros(self.n)
        np.add.at(sums, rows, np.abs(self.values))
        if self.storage_mode == "lower":
            off = rows != self.col_indices
            np.add.at(sums, self.col_indices[off], np.abs(self.values[off]))
        return float(sums.max())

    # products -----------------------------------------------------------

    def matvec(self, x) -> np.ndarray:
        return spmv(self, x)

    def matmat(self, X) -> np.ndarray:
        return spmm(self, X)

    def __matmul__(self, other):
        other = np.asarray(other)
        return spmv(self, other) if other.ndim == 1 else spmm(self, other)


def spmv(A: SparseSymMatrix, x) -> np.ndarray:
    """Return ``A @ x`` for a single vector."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has shape {x.shape}")
    y = np.empty(A.n)
    kernel = _kernels.csr_spmv_full if A.storage_mode == "full" else _kernels.csr_spmv_lower
    kernel(A.row_offsets, A.col_indices, A.values, x, y)
    return y


def spmm(A: SparseSymMatrix, X) -> np.ndarray:
    """Return ``A @ X`` for a tall-skinny block; columns match :func:`spmv` bit for bit."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, block has shape {X.shape}")
    Y = np.empty_like(X)
    if X.shape[1] == 0:
        return Y
    kernel = _kernels.csr_spmm_full if A.storage_mode == "full" else _kernels.csr_spmm_lower
    kernel(A.row_offsets, A.col_indices, A.values, X, Y)
    return Y


# Matrix Market ------------------------------------------------------------


def read_matrix_market(path) -> SparseSymMatrix:
    """Read a real coordinate Matrix Market file (``general`` or ``symmetric``).

    Symmetric files load in lower-half mode; general files load in full mode
    and must pass the symmetry check.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
            raise MatrixMarketError(f"{path}: missing %%MatrixMarket header")
        obj, fmt, field_, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError(f"{path}: only 'matrix coordinate' is supported")
        if field_ not in ("real", "integer", "double"):
            raise MatrixMarketError(f"{path}: unsupported field {field_!r}")
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")

        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            line = fh.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise MatrixMarketError(f"{path}: malformed size line {line.strip()!r}") from None
        if nrows != ncols:
            raise MatrixMarketError(f"{path}: matrix is not square ({nrows}x{ncols})")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        k = 0
        for lineno, line in enumerate(fh, start=3):
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            if k >= nnz:
                raise MatrixMarketError(f"{path}:{lineno}: more entries than declared ({nnz})")
            parts = s.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"{path}:{lineno}: expected 'row col value'")
            try:
                i, j, v = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"{path}:{lineno}: cannot parse {s!r}") from None
            if not (0 <= i < nrows and 0 <= j < ncols):
                raise MatrixMarketError(f"{path}:{lineno}: index ({i + 1}, {j + 1}) out of range")
            if symmetry == "symmetric" and j > i:
                raise MatrixMarketError(
                    f"{path}:{lineno}: symmetric file holds upper-triangle entry ({i + 1}, {j + 1})"
                )
            rows[k], cols[k], vals[k] = i, j, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"{path}: expected {nnz} entries, found {k}")

    mode = "lower" if symmetry == "symmetric" else "full"
    try:
        return SparseSymMatrix.from_coo(nrows, rows, cols, vals, mode)
    except ValueError as exc:
        raise MatrixMarketError(f"{path}: {exc}") from None


def write_matrix_market(A: SparseSymMatrix, path) -> None:
    """Write ``A``; lower-half matrices get the ``symmetric`` qualifier."""
    symmetry = "symmetric" if A.storage_mode == "lower" else "general"
    rows = np.repeat(np.arange(A.n), np.diff(A.row_offsets))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {symmetry}\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, v in zip(rows, A.col_indices, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
    os.replace(tmp, path)
