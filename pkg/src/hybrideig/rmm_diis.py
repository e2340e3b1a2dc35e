"""RMM-DIIS refinement of individual eigenvector approximations.

Each target keeps a short history of iterates ``x``, their products ``H x``
and residuals.  Per iteration the history is mixed by DIIS, the mixture is
improved by a 2x2 Rayleigh-Ritz step on ``span{x~, r~}``, and the only
operator application is ``H r~``.  The products of new iterates are linear
combinations of known ones, so each target also carries a first-order bound
on how far its cached ``H x`` may have drifted from a fresh product.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from hybrideig.dense import diis_ls
from hybrideig.instrumentation import MeteredOperator, SolveStats

DEGENERATE_TOL = 1e-14
STAGNATION_WINDOW = 10
STAGNATION_FACTOR = 0.99
# cached residuals are trusted when the drift bound is below this relative level
CACHE_TRUST = 1e-12
_U = np.finfo(float).eps / 2


@dataclass
class DiisHistory:
    """Sliding window of iterates, products ``H x``, residuals, Ritz values and drift bounds."""

    s_max: int
    xs: deque = field(init=False)
    hxs: deque = field(init=False)
    rs: deque = field(init=False)
    thetas: deque = field(init=False)
    errs: deque = field(init=False)

    def __post_init__(self):
        if self.s_max < 1:
            raise ValueError("s_max must be at least 1")
        self.xs, self.hxs, self.rs, self.thetas, self.errs = (deque(maxlen=self.s_max) for _ in range(5))

    def __len__(self):
        return len(self.xs)

    def push(self, x, hx, r, theta, err=0.0):
        self.xs.append(x)
        self.hxs.append(hx)
        self.rs.append(r)
        self.thetas.append(float(theta))
        self.errs.append(float(err))

    def mix(self):
        """DIIS combination ``(x~, Hx~, r~, alpha, err)`` with ``x~`` normalized and ``r~ = sum a_i r_i``."""
        a = diis_ls(np.array(self.rs))
        x = a @ np.array(self.xs)
        hx = a @ np.array(self.hxs)
        r = a @ np.array(self.rs)
        nrm = np.linalg.norm(x)
        abs_a = np.abs(a)
        with np.errstate(over="ignore"):
            # an overflowing bound just means the cache is not trusted
            err = (abs_a @ np.array(self.errs) + _U * (abs_a @ np.linalg.norm(np.array(self.hxs), axis=1))) / nrm
        return x / nrm, hx / nrm, r / nrm, a, err


@dataclass
class RefineOutcome:
    theta: float
    x: np.ndarray
    rel_residual: float
    converged: bool
    iterations: int
    failure: str | None = None

    def __post_init__(self):
        if self.converged and self.failure is not None:
            raise ValueError("a converged outcome cannot carry a failure")


def _rayleigh(x, hx):
    return float(x @ hx) / float(x @ x)


def _rr2(x, r, Hx, Hr, select):
    """Coefficients ``(theta, cx, cr)`` of the selected Ritz vector ``cx x + cr r`` (unit norm), or ``None``."""
    xn, rn = np.linalg.norm(x), np.linalg.norm(r)
    theta0 = _rayleigh(x, Hx)
    if rn <= DEGENERATE_TOL * max(abs(theta0), 1e-300) * xn:
        return None
    W = np.column_stack([x / xn, r / rn])
    HW = np.column_stack([Hx / xn, Hr / rn])
    g, Vg = np.linalg.eigh(W.T @ W)
    if g[0] <= 1e-14 * g[1]:
        # r parallel to x: nothing new to project on
        return None
    Z = Vg / np.sqrt(g)
    M = Z.T @ (W.T @ HW) @ Z
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    k = 0 if select == "lowest" else int(np.argmin(np.abs(w - theta0)))
    c = Z @ U[:, k]
    c = c / np.linalg.norm(W @ c)
    return float(w[k]), c[0] / xn, c[1] / rn


def two_by_two_rr(A, x, r, Hx=None, Hr=None, select="lowest"):
    """Rayleigh-Ritz on ``span{x, r}``; returns ``(theta, x_new, Hx_new)``.

    ``select="lowest"`` keeps the smaller Ritz value; ``"nearest"`` keeps
    the one closest to the Rayleigh quotient of ``x``.  When ``r`` is
    negligible or parallel to ``x`` the normalized input pair is returned.
    Products not supplied are computed with ``A``.
    """
    if select not in ("lowest", "nearest"):
        raise ValueError("select must be 'lowest' or 'nearest'")
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    xn = np.linalg.norm(x)
    if xn == 0:
        raise ValueError("x must be nonzero")
    if Hx is None:
        Hx = A.matvec(x)
    if Hr is None and np.linalg.norm(r) > DEGENERATE_TOL * max(abs(_rayleigh(x, Hx)), 1e-300) * xn:
        Hr = A.matvec(r)
    sol = _rr2(x, r, Hx, Hr, select) if Hr is not None else None
    if sol is None:
        return _rayleigh(x, Hx), x / xn, Hx / xn
    theta, cx, cr = sol
    return theta, cx * x + cr * r, cx * Hx + cr * Hr


@dataclass(eq=False)
class _Target:
    x: np.ndarray | None = None
    hx: np.ndarray | None = None
    err: float = 0.0
    theta: float = 0.0
    r: np.ndarray | None = None
    rel: float = np.inf
    history: DiisHistory | None = None
    best: list = field(default_factory=list)
    iterations: int = 0
    done: bool = False
    converged: bool = False
    # "verify" or "refresh" scheduled for the next iteration
    pending: str | None = None
    failure: str | None = None
    # pending DIIS mix for the current iteration
    xt: np.ndarray | None = None
    hxt: np.ndarray | None = None
    rt: np.ndarray | None = None
    errt: float = 0.0

    def reset(self, x, hx, s_max):
        """Restart from an exact product ``hx = H x``; the DIIS window restarts too."""
        self.x, self.hx, self.err = x, hx, 0.0
        self.theta = _rayleigh(x, hx)
        self.r = hx - self.theta * x
        self.rel = _rel(self.r, self.theta)
        self.history = DiisHistory(s_max)
        self.history.push(x, hx, self.r, self.theta)

    def refresh(self, op):
        """Recompute the products of every iterate in the DIIS window (one SpMM).

        Correcting only the newest entry leaves the window inconsistent, and
        clearing it throws away what keeps the target on its own eigenpair.
        """
        h = self.history
        X = np.array(h.xs).T
        HX = op.matmat(X)
        thetas = np.einsum("ij,ij->j", X, HX) / np.einsum("ij,ij->j", X, X)
        R = HX - X * thetas
        h.hxs, h.rs = deque(HX.T, maxlen=h.s_max), deque(R.T, maxlen=h.s_max)
        h.thetas = deque(thetas.tolist(), maxlen=h.s_max)
        h.errs = deque([0.0] * len(h.xs), maxlen=h.s_max)
        self.hx, self.err = h.hxs[-1], 0.0
        self.theta, self.r = float(thetas[-1]), h.rs[-1]
        self.rel = _rel(self.r, self.theta)

    def trusted(self, spmv_err):
        """Whether the cached residual matches a fresh one to ``CACHE_TRUST`` relative."""
        return self.err + spmv_err <= CACHE_TRUST * max(abs(self.theta), 1e-30)


def parse_batch_mode(batch_mode):
    """Return ``k`` for decoupling after ``k`` finished targets, or ``None`` for always coupled."""
    if batch_mode in ("coupled-spmm", "always-spmm", None):
        return None
    if isinstance(batch_mode, tuple) and len(batch_mode) == 2 and batch_mode[0] == "decouple-after":
        k = batch_mode[1]
    elif isinstance(batch_mode, str) and batch_mode.startswith("decouple-after:"):
        k = batch_mode.split(":", 1)[1]
    else:
        raise ValueError(f"unknown batch mode {batch_mode!r}")
    k = int(k)
    if k < 0:
        raise ValueError("decouple-after needs k >= 0")
    return k


def rmm_diis_refine(
    A,
    X0,
    tol=1e-6,
    maxiter=200,
    s_max=15,
    batch_mode="coupled-spmm",
    *,
    select="lowest",
    residual="combined",
    stagnation=True,
    HX0=None,
    stats: SolveStats | None = None,
):
    """Refine each column of ``X0`` independently by RMM-DIIS.

    ``batch_mode`` is ``"coupled-spmm"`` (one SpMM of width ``n_ev`` per
    iteration, finished targets ride along unchanged) or
    ``("decouple-after", k)`` / ``"decouple-after:k"`` (coupled until ``k``
    targets are done, single SpMVs for the rest afterwards).
    ``residual="combined"`` uses ``r~ = sum a_i r_i``; ``"recomputed"``
    uses ``H x~ - theta~ x~`` built from the cached products.  Both cost one
    product per target per iteration.

    Cached products drift.  A target whose cached residual passes ``tol``
    while its drift bound is too large to trust spends its next product on
    ``H x`` and is converged only if the fresh residual passes too; if it
    does not, the products of its whole DIIS window are recomputed (one
    SpMM of the window width).  ``stagnation=True`` flags a
    target whose residual improves by less than 1% over 10 iterations;
    with it off such a stall triggers the same refresh instead.  ``HX0`` supplies known
    products of the (normalized) starting vectors, which are then trusted
    and not recomputed.

    Returns ``(outcomes, stats)``.
    """
    stats = stats if stats is not None else SolveStats()
    with stats.wall():
        outcomes = _refine(A, X0, tol, maxiter, s_max, batch_mode, select, residual, stagnation, HX0, stats)
    return outcomes, stats


def _refine(A, X0, tol, maxiter, s_max, batch_mode, select, residual, stagnation, HX0, stats):
    if residual not in ("combined", "recomputed"):
        raise ValueError("residual must be 'combined' or 'recomputed'")
    if select not in ("lowest", "nearest"):
        raise ValueError("select must be 'lowest' or 'nearest'")
    if maxiter < 1:
        raise ValueError("maxiter must be positive")
    decouple_k = parse_batch_mode(batch_mode)
    op = MeteredOperator(A, stats)
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim == 1:
        X0 = X0[:, None]
    if X0.shape[0] != op.n:
        raise ValueError("initial guesses must have n rows")
    norms = np.linalg.norm(X0, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise ValueError("initial guesses must be finite and nonzero")
    X0 = X0 / norms
    n_ev = X0.shape[1]
    # rounding of one product with a unit vector, first order
    spmv_err = 4 * _U * op.norm_bound()

    if HX0 is None:
        HX0 = op.matmat(X0)
    else:
        HX0 = np.asarray(HX0, dtype=np.float64).reshape(X0.shape) / norms
    targets = []
    for j in range(n_ev):
        t = _Target()
        t.reset(X0[:, j].copy(), HX0[:, j].copy(), s_max)
        if t.rel < tol:
            t.done, t.converged, t.iterations = True, True, 1
        targets.append(t)
    stats.record([t.theta for t in targets], [t.rel for t in targets])

    coupled = decouple_k is None or decouple_k > 0
    for it in range(1, maxiter + 1):
        active = [t for t in targets if not t.done]
        if not active:
            break
        columns = {}
        for t in active:
            t.iterations = it
            if t.pending == "verify":
                columns[id(t)] = t.x
                continue
            if t.pending:
                continue
            t.xt, t.hxt, t.rt, _, t.errt = t.history.mix()
            if residual == "recomputed":
                th = _rayleigh(t.xt, t.hxt)
                t.rt = t.hxt - th * t.xt
            if not _degenerate(t):
                columns[id(t)] = t.rt
        products = _apply(op, targets, columns, coupled)
        for t in active:
            if t.pending == "verify":
                hx = products[id(t)]
                th = _rayleigh(t.x, hx)
                if _rel(hx - th * t.x, th) < tol:
                    t.hx, t.err, t.theta = hx, 0.0, th
                    t.r = hx - th * t.x
                    t.rel = _rel(t.r, th)
                else:
                    # the cache misled the window: bring all of it up to date
                    t.refresh(op)
                t.pending = None
            elif t.pending:
                t.refresh(op)
                t.pending = None
            else:
                _step(t, products.get(id(t)), select, spmv_err)
            t.best.append(t.rel)
            if t.rel < tol:
                if t.err == 0.0 or t.trusted(spmv_err):
                    t.done, t.converged = True, True
                else:
                    # confirm with a fresh product next iteration
                    t.pending = "verify"
            elif _stagnated(t.best):
                if stagnation:
                    t.done, t.failure = True, "stagnation"
                else:
                    # in long runs a stall on cached data may be drift, so refresh.
                    # Restarting the window instead loses the target to lower pairs.
                    t.pending = "refresh"
                    t.best = []
        stats.record([t.theta for t in targets], [t.rel for t in targets])
        if decouple_k is not None and sum(t.done for t in targets) >= decouple_k:
            coupled = False

    for t in targets:
        if not t.done:
            t.failure = "maxiter"
    # unfinished targets report a residual from a fresh product when the cache is not trusted
    for t in targets:
        if not t.converged and t.err > 0 and not t.trusted(spmv_err):
            t.refresh(op)
    return [RefineOutcome(t.theta, t.x, t.rel, t.converged, t.iterations, t.failure) for t in targets]


def _step(t, Hr, select, spmv_err):
    sol = _rr2(t.xt, t.rt, t.hxt, Hr, select) if Hr is not None else None
    if sol is None:
        t.theta, t.x, t.hx, t.err = _rayleigh(t.xt, t.hxt), t.xt, t.hxt, t.errt
    else:
        t.theta, cx, cr = sol
        t.x = cx * t.xt + cr * t.rt
        t.hx = cx * t.hxt + cr * Hr
        rn = np.linalg.norm(t.rt)
        t.err = (
            abs(cx) * t.errt
            + abs(cr) * spmv_err * rn
            + _U * (abs(cx) * np.linalg.norm(t.hxt) + abs(cr) * np.linalg.norm(Hr))
        )
    t.r = t.hx - t.theta * t.x
    t.rel = _rel(t.r, t.theta)
    t.history.push(t.x, t.hx, t.r, t.theta, t.err)


def _apply(op, targets, columns, coupled):
    """Products for the requested columns: one SpMM of width ``n_ev`` when coupled, else SpMVs."""
    if not columns:
        return {}
    if coupled:
        # passengers keep the block width at n_ev; their products are discarded
        block = np.column_stack([columns.get(id(t), t.x) for t in targets])
        HB = op.matmat(block)
        return {id(t): HB[:, j] for j, t in enumerate(targets) if id(t) in columns}
    return {key: op.matvec(v) for key, v in columns.items()}


def _rel(r, theta):
    return float(np.linalg.norm(r)) / max(abs(theta), 1e-30)


def _degenerate(t):
    return np.linalg.norm(t.rt) <= DEGENERATE_TOL * max(abs(_rayleigh(t.xt, t.hxt)), 1e-300) * np.linalg.norm(t.xt)


def _stagnated(rels):
    """Best residual of the last window improved on the earlier best by less than 1%."""
    if len(rels) <= STAGNATION_WINDOW:
        return False
    before = min(rels[:-STAGNATION_WINDOW])
    return min(rels[-STAGNATION_WINDOW:]) > STAGNATION_FACTOR * before
