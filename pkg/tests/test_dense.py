import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybrideig.dense import (
    NotPositiveDefiniteError,
    NotSymmetricError,
    RankDeficientError,
    block_orthogonalize,
    cholesky,
    cholesky_qr,
    diis_ls,
    estimate_condition,
    jacobi_eig,
    sym_eig,
    sym_gen_eig,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def rand_sym(m, seed):
    M = np.random.default_rng(seed).standard_normal((m, m))
    return M + M.T


def check_eig(T, thetas, U):
    nrm = np.linalg.norm(T, 2)
    assert np.all(np.diff(thetas) >= 0)
    assert np.abs(T @ U - U * thetas).max() <= 1e-10 * max(nrm, 1.0)
    assert np.abs(U.T @ U - np.eye(len(thetas))).max() <= 1e-12


# sym_eig -------------------------------------------------------------------


def test_sym_eig_diagonal():
    thetas, U = sym_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.array_equal(thetas, [1.0, 2.0, 3.0])
    assert np.array_equal(np.abs(U), np.eye(3)[:, [1, 2, 0]])


def test_sym_eig_2x2():
    thetas, _ = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(thetas, [1.0, 3.0], rtol=0, atol=1e-14)


@pytest.mark.parametrize("method", ["auto", "jacobi", "lapack"])
def test_sym_eig_random_20(method):
    T = rand_sym(20, 0)
    check_eig(T, *sym_eig(T, method=method))


def test_sym_eig_large_uses_lapack_and_agrees():
    T = rand_sym(80, 1)
    w, U = sym_eig(T)
    check_eig(T, w, U)
    assert np.allclose(w, jacobi_eig(T)[0], atol=1e-11)


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(NotSymmetricError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotSymmetricError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(ValueError):
        sym_eig(np.eye(2), method="qr")


def test_jacobi_empty():
    w, U = jacobi_eig(np.zeros((0, 0)))
    assert w.size == 0 and U.shape == (0, 0)


def char_poly_roots(T):
    m = T.shape[0]
    if m == 2:
        a, b, d = T[0, 0], T[0, 1], T[1, 1]
        disc = np.sqrt((a - d) ** 2 / 4 + b * b)
        return np.array([(a + d) / 2 - disc, (a + d) / 2 + disc])
    # closed-form trigonometric roots of the depressed cubic
    q = np.trace(T) / 3
    p2 = np.sum((T - q * np.eye(3)) ** 2) / 6
    p = np.sqrt(p2)
    if p == 0:
        return np.full(3, q)
    B = (T - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2, -1, 1)
    phi = np.arccos(r) / 3
    e1 = q + 2 * p * np.cos(phi)
    e3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    return np.sort([e1, 3 * q - e1 - e3, e3])


@given(st.integers(2, 3).flatmap(lambda m: arrays(np.float64, (m, m), elements=finite)))
def test_sym_eig_matches_characteristic_roots(M):
    T = M + M.T
    thetas, _ = sym_eig(T)
    s = max(1.0, np.abs(T).max())
    # the power sums and determinant are well conditioned even for repeated roots
    assert abs(thetas.sum() - np.trace(T)) <= 1e-12 * s
    assert abs(np.sum(thetas**2) - np.sum(T * T)) <= 1e-12 * s**2
    assert abs(np.prod(thetas) - np.linalg.det(T)) <= 1e-11 * s ** T.shape[0]
    roots = char_poly_roots(T)
    # the arccos form loses sqrt(eps) accuracy near a double root
    if np.min(np.diff(roots)) > 1e-3 * s:
        assert np.allclose(thetas, roots, rtol=0, atol=1e-10 * s)


# generalized problem -------------------------------------------------------


def test_sym_gen_eig_identity_reduces():
    A = rand_sym(6, 2)
    w1, _ = sym_gen_eig(A, np.eye(6))
    assert np.allclose(w1, sym_eig(A)[0], atol=1e-12)


def test_sym_gen_eig_2x2():
    thetas, C = sym_gen_eig(np.diag([2.0, 6.0]), np.diag([1.0, 2.0]))
    assert np.allclose(thetas, [2.0, 3.0], atol=1e-14)


def test_sym_gen_eig_random_pencil():
    rng = np.random.default_rng(3)
    A = rand_sym(8, 3)
    G = rng.standard_normal((8, 8))
    B = G @ G.T + 8 * np.eye(8)
    thetas, C = sym_gen_eig(A, B)
    assert np.abs(A @ C - B @ C * thetas).max() <= 1e-9 * np.linalg.norm(A, 2)
    assert np.abs(C.T @ B @ C - np.eye(8)).max() <= 1e-10


def test_sym_gen_eig_not_spd_reports_pivot():
    B = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(NotPositiveDefiniteError) as exc:
        sym_gen_eig(np.eye(4), B)
    assert exc.value.pivot == 3


def test_cholesky_factor():
    B = np.array([[4.0, 2.0], [2.0, 3.0]])
    L = cholesky(B)
    assert np.allclose(L @ L.T, B) and L[0, 1] == 0


# cholesky_qr ---------------------------------------------------------------


def test_cholesky_qr_orthonormal_input():
    X, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((50, 6)))
    Q, R = cholesky_qr(X)
    assert np.abs(Q - X).max() <= 1e-12
    assert np.abs(R - np.eye(6)).max() <= 1e-12


def test_cholesky_qr_single_column():
    Q, R = cholesky_qr(np.array([0.0, 3.0, 4.0]))
    assert np.allclose(Q[:, 0], [0.0, 0.6, 0.8], atol=1e-15)
    assert np.allclose(R, [[5.0]], atol=1e-14)


def test_cholesky_qr_duplicate_columns():
    x = np.random.default_rng(1).standard_normal(20)
    with pytest.raises(RankDeficientError) as exc:
        cholesky_qr(np.column_stack([x, x, np.ones(20)]))
    assert exc.value.rank == 2 and exc.value.ncols == 3


def test_cholesky_qr_second_pass_for_ill_conditioned():
    rng = np.random.default_rng(2)
    U, _ = np.linalg.qr(rng.standard_normal((200, 5)))
    X = U * np.logspace(0, -6, 5)
    Q, R = cholesky_qr(X)
    assert np.abs(Q.T @ Q - np.eye(5)).max() <= 1e-10
    assert np.linalg.norm(X - Q @ R) <= 1e-10 * np.linalg.norm(X)


@given(st.integers(1, 12), st.integers(0, 2**31))
def test_cholesky_qr_reconstruction(b, seed):
    X = np.random.default_rng(seed).standard_normal((60, b))
    Q, R = cholesky_qr(X)
    assert np.linalg.norm(X - Q @ R) <= 1e-10 * np.linalg.norm(X)
    assert np.abs(Q.T @ Q - np.eye(b)).max() <= 1e-10
    assert np.allclose(R, np.triu(R))


# block_orthogonalize -------------------------------------------------------


def test_block_orth_already_orthogonal():
    Q0, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((30, 7)))
    V, W = Q0[:, :4], Q0[:, 4:]
    Q, R, kept = block_orthogonalize(V, W)
    assert kept == 3
    assert np.abs(Q - W).max() <= 1e-12


def test_block_orth_full_deflation():
    rng = np.random.default_rng(1)
    V, _ = np.linalg.qr(rng.standard_normal((40, 5)))
    W = V @ rng.standard_normal((5, 3))
    Q, R, kept = block_orthogonalize(V, W, rng=rng)
    assert kept == 0
    assert np.all(np.diag(R) == 0)
    assert np.abs(Q.T @ Q - np.eye(3)).max() <= 1e-10
    assert np.abs(Q.T @ V).max() <= 1e-10


def test_block_orth_random():
    rng = np.random.default_rng(2)
    V, _ = np.linalg.qr(rng.standard_normal((100, 8)))
    W = rng.standard_normal((100, 8))
    Q, R, kept = block_orthogonalize(V, W)
    assert kept == 8
    B = np.hstack([V, Q])
    assert np.abs(B.T @ B - np.eye(16)).max() <= 1e-10
    Wp = W - V @ (V.T @ W)
    assert np.allclose(Q @ R, Wp, atol=1e-12)


def test_block_orth_no_basis_and_too_wide():
    W = np.random.default_rng(3).standard_normal((10, 4))
    Q, R, kept = block_orthogonalize(None, W)
    assert kept == 4 and np.allclose(Q @ R, W)
    with pytest.raises(ValueError):
        block_orthogonalize(np.eye(10)[:, :8], W)


@given(st.integers(0, 10), st.integers(1, 8), st.integers(0, 3), st.integers(0, 2**31))
def test_block_orth_property(k, b, dup, seed):
    rng = np.random.default_rng(seed)
    V = np.linalg.qr(rng.standard_normal((50, k)))[0] if k else None
    W = rng.standard_normal((50, b))
    for j in range(min(dup, b - 1)):
        W[:, j + 1] = W[:, 0]
    Q, _, _ = block_orthogonalize(V, W, rng=rng)
    B = Q if V is None else np.hstack([V, Q])
    assert np.abs(B.T @ B - np.eye(B.shape[1])).max() <= 1e-10


# diis_ls -------------------------------------------------------------------


def test_diis_single():
    assert np.array_equal(diis_ls([np.array([1.0, 2.0])]), [1.0])


def test_diis_orthogonal_pair():
    a = diis_ls([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.allclose(a, [0.5, 0.5], atol=1e-12)


def test_diis_duplicate_pair_ridge_symmetric():
    r = np.array([0.3, -1.2, 2.0])
    a = diis_ls([r, r])
    assert np.allclose(a, [0.5, 0.5], atol=1e-9)


def test_diis_exact_cancellation():
    r = np.array([1.0, 2.0])
    a = diis_ls([r, -r])
    assert np.allclose(a, [0.5, 0.5], atol=1e-9)
    assert np.linalg.norm(a @ np.array([r, -r])) <= 1e-9


def test_diis_empty_raises():
    with pytest.raises(ValueError):
        diis_ls(np.zeros((0, 3)))


@given(st.integers(1, 15), st.integers(2, 30), st.integers(0, 2**31))
def test_diis_constraint_and_optimality(s, n, seed):
    R = np.random.default_rng(seed).standard_normal((s, n))
    a = diis_ls(R)
    assert a.shape == (s,)
    assert abs(a.sum() - 1.0) <= 1e-10
    # never worse than putting all the weight on the last residual
    assert np.linalg.norm(a @ R) <= np.linalg.norm(R[-1]) * (1 + 1e-9)


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_diis_matches_lagrange_solution(s, seed):
    R = np.random.default_rng(seed).standard_normal((s, 20))
    B = R @ R.T
    K = np.block([[B, np.ones((s, 1))], [np.ones((1, s)), np.zeros((1, 1))]])
    ref = np.linalg.solve(K, np.append(np.zeros(s), 1.0))[:s]
    assert np.allclose(diis_ls(R), ref, atol=1e-7)


# estimate_condition --------------------------------------------------------


def test_condition_orthonormal():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((30, 5)))
    assert abs(estimate_condition(Q) - 1.0) <= 1e-8


def test_condition_singular():
    v = np.random.default_rng(1).standard_normal(30)
    assert estimate_condition(np.column_stack([v, 2 * v])) >= 1e8


def test_condition_scaled():
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((30, 2)))
    assert abs(estimate_condition(Q * [1.0, 10.0]) - 10.0) <= 1e-6


def test_condition_zero_block():
    with pytest.raises(ValueError):
        estimate_condition(np.zeros((5, 2)))


@pytest.mark.parametrize("m", [1, 2, 5, 12])
def test_jacobi_agrees_with_lapack(m):
    for seed in range(3):
        T = rand_sym(m, seed)
        assert np.allclose(jacobi_eig(T)[0], np.linalg.eigvalsh(T), atol=1e-12 * max(1, np.abs(T).max()))


def test_all_permutation_diagonals():
    for perm in itertools.permutations([1.0, 2.0, 3.0]):
        assert np.array_equal(sym_eig(np.diag(perm))[0], [1.0, 2.0, 3.0])
