"""Operation counters, phase timers, throughput measurement and memory model."""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

TIMING_CATEGORIES = ("spmm", "ortho", "rayleigh_ritz", "other")


@dataclass
class SolveStats:
    """Per-solve accounting.

    ``spmv_actual`` counts single-vector products: an SpMM on ``b`` columns
    adds ``b``.  ``history[i]`` holds ``(thetas, rel_residuals)`` of the
    monitored pairs at iteration ``i + 1``.
    """

    spmv_actual: int = 0
    spmm_calls: int = 0
    phase_marks: list = field(default_factory=list)
    timings: dict = field(default_factory=lambda: dict.fromkeys(TIMING_CATEGORIES, 0.0))
    history: list = field(default_factory=list)
    tau_history: list = field(default_factory=list)
    condition_history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.history)

    def record(self, thetas, rel_residuals):
        self.history.append(
            (np.array(thetas, dtype=float, copy=True), np.array(rel_residuals, dtype=float, copy=True))
        )

    def count(self, ncols, block=True):
        self.spmv_actual += int(ncols)
        if block:
            self.spmm_calls += 1

    @contextmanager
    def timer(self, category):
        if category not in self.timings:
            raise KeyError(f"unknown timing category {category!r}")
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[category] += time.perf_counter() - t0

    @contextmanager
    def wall(self):
        """Time a whole solve; whatever the categories miss lands in ``other``."""
        t0 = time.perf_counter()
        before = sum(v for k, v in self.timings.items() if k != "other")
        try:
            yield
        finally:
            elapsed = time.perf_counter() - t0
            self.wall_time += elapsed
            inside = sum(v for k, v in self.timings.items() if k != "other") - before
            self.timings["other"] += max(elapsed - inside, 0.0)

    def ortho_fraction(self) -> float:
        """Orthogonalization time as a fraction of SpMM time."""
        spmm = self.timings["spmm"]
        return self.timings["ortho"] / spmm if spmm > 0 else math.inf

    def merge(self, other: SolveStats, label: str | None = None) -> None:
        """Append another phase's accounting to this one."""
        offset = self.iterations
        if label is not None:
            self.phase_marks.append((label, offset))
        for lab, it in other.phase_marks:
            self.phase_marks.append((lab, it + offset))
        self.spmv_actual += other.spmv_actual
        self.spmm_calls += other.spmm_calls
        for k, v in other.timings.items():
            self.timings[k] = self.timings.get(k, 0.0) + v
        self.history.extend(other.history)
        self.tau_history.extend(other.tau_history)
        self.condition_history.extend(other.condition_history)
        self.wall_time += other.wall_time

    def to_dict(self) -> dict:
        return {
            "spmv_actual": self.spmv_actual,
            "spmm_calls": self.spmm_calls,
            "iterations": self.iterations,
            "phase_marks": [[lab, int(it)] for lab, it in self.phase_marks],
            "timings": {k: float(v) for k, v in self.timings.items()},
            "tau_history": [float(t) for t in self.tau_history],
            "condition_history": [float(c) for c in self.condition_history],
        }


class MeteredOperator:
    """Wraps a symmetric operator and charges every product to a :class:`SolveStats`.

    The wrapped object needs ``n``, ``matvec``, ``matmat``, ``diagonal`` and
    ``frobenius_norm``; solvers never look at its storage.
    """

    def __init__(self, A, stats: SolveStats):
        self.A = A
        self.stats = stats
        self.n = A.n

    def matvec(self, x):
        with self.stats.timer("spmm"):
            y = self.A.matvec(x)
        self.stats.count(1, block=False)
        return y

    def matmat(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            return self.matvec(X)
        with self.stats.timer("spmm"):
            Y = self.A.matmat(X)
        self.stats.count(X.shape[1])
        return Y

    def diagonal(self):
        return self.A.diagonal()

    def frobenius_norm(self):
        return self.A.frobenius_norm()

    def norm_bound(self):
        nb = getattr(self.A, "norm_bound", None)
        return nb() if nb is not None else self.A.frobenius_norm()


# throughput --------------------------------------------------------------


@dataclass(frozen=True)
class KernelRatio:
    spmv_gflops: float
    spmm_gflops: float
    nb: int

    def __post_init__(self):
        if not (self.spmv_gflops > 0 and self.spmm_gflops > 0 and self.nb > 0):
            raise ValueError("kernel rates and block width must be positive")

    @property
    def ratio(self) -> float:
        return self.spmm_gflops / self.spmv_gflops

    def to_dict(self):
        return {
            "nb": self.nb,
            "ratio": self.ratio,
            "spmm_gflops": self.spmm_gflops,
            "spmv_gflops": self.spmv_gflops,
        }


def effective_spmv(actual, ratio) -> float:
    """SpMV count discounted by the measured SpMM/SpMV throughput ratio."""
    if not ratio > 0:
        raise ValueError("throughput ratio must be positive")
    return actual / ratio


def kernel_flops(nnz_logical, ncols=1) -> int:
    """Flop count of one product: a multiply and an add per logical nonzero per column."""
    return 2 * int(nnz_logical) * int(ncols)


def measure_kernel_ratio(A, nb, repetitions=5, seed=0) -> KernelRatio:
    """Median-of-repetitions GFLOPS for SpMV and SpMM(nb) on random inputs."""
    from hybrideig.sparse import spmm, spmv

    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A.n, nb))
    x = X[:, 0].copy()

    Y = spmm(A, X)
    for j in range(nb):
        if not np.array_equal(Y[:, j], spmv(A, np.ascontiguousarray(X[:, j]))):
            raise RuntimeError("SpMM column disagrees with SpMV; refusing to time")

    def median_time(fn, arg):
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fn(A, arg)
            times.append(time.perf_counter() - t0)
        return float(np.median(times))

    t_spmv = median_time(spmv, x)
    t_spmm = median_time(spmm, X)
    if t_spmv <= 0 or t_spmm <= 0:
        raise RuntimeError("timer resolution too coarse; increase repetitions or problem size")
    nnz = A.nnz_logical
    return KernelRatio(
        spmv_gflops=kernel_flops(nnz, 1) / t_spmv * 1e-9,
        spmm_gflops=kernel_flops(nnz, nb) / t_spmm * 1e-9,
        nb=nb,
    )


# memory model ------------------------------------------------------------


def memory_estimate(method, n, n_b=None, n_ev=None, k=None, s_max=None) -> int:
    """Floating-point values held by each method; small-term constants set to 1."""

    def need(**kw):
        for name, val in kw.items():
            if val is None:
                raise ValueError(f"{method}: parameter {name!r} is required")
            if val <= 0:
                raise ValueError(f"{method}: parameter {name!r} must be positive")

    need(n=n)
    if method == "lanczos":
        need(k=k, n_ev=n_ev)
        return n * (k + n_ev) + k**2
    if method == "block-lanczos":
        need(k=k, n_b=n_b, n_ev=n_ev)
        return n * n_b * (k + n_ev) + (n_b * k) ** 2
    if method == "lobpcg":
        need(n_b=n_b)
        return 7 * n * n_b + 9 * n_b**2
    if method == "chebfsi":
        need(n_b=n_b)
        return 4 * n * n_b + n_b**2
    if method == "rmm-diis":
        need(n_ev=n_ev, s_max=s_max)
        return n * (3 * n_ev + s_max)
    raise ValueError(f"unknown method {method!r}")
