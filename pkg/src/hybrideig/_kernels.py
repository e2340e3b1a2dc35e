"""Compiled CSR kernels.

SpMV and SpMM share one accumulation order (rows outermost, stored entries
in column order, block columns innermost), so each SpMM column is
bit-identical to the SpMV of that column.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def csr_spmv_full(indptr, indices, data, x, y):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc


@numba.njit(cache=True)
def csr_spmm_full(indptr, indices, data, X, Y):
    n = indptr.shape[0] - 1
    b = X.shape[1]
    acc = np.empty(b)
    for i in range(n):
        for j in range(b):
            acc[j] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            v = data[k]
            c = indices[k]
            for j in range(b):
                acc[j] += v * X[c, j]
        for j in range(b):
            Y[i, j] = acc[j]


@numba.njit(cache=True)
def csr_spmv_lower(indptr, indices, data, x, y):
    n = indptr.shape[0] - 1
    for i in range(n):
        y[i] = 0.0
    for i in range(n):
        xi = x[i]
        for k in range(indptr[i], indptr[i + 1]):
            c = indices[k]
            v = data[k]
            y[i] += v * x[c]
            if c != i:
                y[c] += v * xi


@numba.njit(cache=True)
def csr_spmm_lower(indptr, indices, data, X, Y):
    n = indptr.shape[0] - 1
    b = X.shape[1]
    for i in range(n):
        for j in range(b):
            Y[i, j] = 0.0
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            c = indices[k]
            v = data[k]
            for j in range(b):
                Y[i, j] += v * X[c, j]
            if c != i:
                for j in range(b):
                    Y[c, j] += v * X[i, j]
