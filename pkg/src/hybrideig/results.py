"""Solver output container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EigenReport:
    """Approximate eigenpairs in ascending order.

    ``rel_residuals`` are whatever the method uses for its stopping test
    (estimates for the Lanczos family, computed residuals otherwise).
    ``failures[j]`` is ``None`` or a short reason such as ``"maxiter"``.
    """

    method: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rel_residuals: np.ndarray
    converged: np.ndarray
    failures: list = field(default_factory=list)
    status: str = "converged"
    # A @ eigenvectors when the method already has it (not recomputed)
    products: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.rel_residuals = np.asarray(self.rel_residuals, dtype=float)
        self.converged = np.asarray(self.converged, dtype=bool)
        if not self.failures:
            self.failures = [None if c else "unconverged" for c in self.converged]

    @property
    def n_ev(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def relative_residuals(A, thetas, X):
    """Recompute ``|A x - theta x| / |theta|`` from scratch (no accounting)."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    R = A.matmat(np.ascontiguousarray(X)) - X * np.asarray(thetas)[None, :]
    return np.linalg.norm(R, axis=0) / np.maximum(np.abs(thetas), 1e-30)
