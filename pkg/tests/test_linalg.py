import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ttpce.errors import FactorizationError, InvalidInputError
from ttpce.linalg import SPDFactor, maxvol, orthonormalize, solve_spd, sym_eig, truncated_svd

seeds = st.integers(0, 2**31 - 1)


def test_qr_identity():
    Q, R = orthonormalize(np.eye(2))
    assert np.allclose(np.abs(Q), np.eye(2)) and np.allclose(np.abs(R), np.eye(2))


def test_qr_column():
    Q, R = orthonormalize(np.array([[3.0], [4.0]]))
    assert np.allclose(np.abs(Q[:, 0]), [0.6, 0.8]) and np.isclose(abs(R[0, 0]), 5.0)


def test_qr_random(rng):
    A = rng.standard_normal((20, 5))
    Q, R = orthonormalize(A)
    assert np.abs(Q @ R - A).max() <= 1e-12
    assert np.linalg.norm(Q.T @ Q - np.eye(5)) <= 1e-12


@given(seeds, st.integers(1, 12), st.integers(1, 12))
def test_qr_orthogonality_property(seed, m, n):
    A = np.random.default_rng(seed).standard_normal((m, n))
    Q, _ = orthonormalize(A)
    assert np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])) <= 1e-12 * Q.shape[1] + 1e-14


def test_qr_rejects_nan():
    with pytest.raises(InvalidInputError):
        orthonormalize(np.array([[np.nan]]))


def test_svd_rank_one(rng):
    A = np.outer(rng.standard_normal(6), rng.standard_normal(4))
    assert truncated_svd(A, 1e-10)[3] == 1


def test_svd_identity():
    U, S, V, r = truncated_svd(np.eye(2), 1e-10)
    assert r == 2 and np.allclose(S, [1, 1])


def test_svd_rank_three(rng):
    A = sum(np.outer(rng.standard_normal(8), rng.standard_normal(7)) for _ in range(3))
    U, S, V, r = truncated_svd(A, 1e-12)
    assert r == 3
    assert np.linalg.norm(U * S @ V.T - A) <= 1e-12 * np.linalg.norm(A)


def test_svd_zero_matrix_keeps_rank_one():
    assert truncated_svd(np.zeros((3, 4)), 0.1)[3] == 1


@given(seeds, st.floats(1e-6, 0.5))
def test_svd_tail_bound(seed, tol):
    A = np.random.default_rng(seed).standard_normal((9, 6)) @ np.diag(0.3 ** np.arange(6))
    U, S, V, r = truncated_svd(A, tol)
    assert np.linalg.norm(A - U * S @ V.T) <= tol * np.linalg.norm(A) * (1 + 1e-12)


def test_eig_diag():
    lam, _ = sym_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(lam, [3, 2, 1])


def test_eig_swap():
    lam, V = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(lam, [1, -1])
    assert np.allclose(np.abs(V), 1 / np.sqrt(2))


def test_eig_spd(rng):
    B = rng.standard_normal((10, 10))
    A = B @ B.T
    lam, V = sym_eig(A)
    assert np.all(lam > 0)
    assert np.abs(A @ V - V * lam).max() <= 1e-9
    assert np.isclose(lam.sum(), np.trace(A), rtol=1e-9)


def test_eig_subset(rng):
    B = rng.standard_normal((12, 12))
    A = B + B.T
    lam, V = sym_eig(A, subset=3)
    assert np.allclose(lam, sym_eig(A)[0][:3])


def test_eig_rejects_nonsymmetric():
    with pytest.raises(InvalidInputError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_maxvol_small():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    assert sorted(maxvol(A, 0.0)) == [0, 1]


def test_maxvol_identity_rows(rng):
    r = 4
    A = np.vstack([np.eye(r), np.zeros((5, r))])
    perm = rng.permutation(len(A))
    idx = maxvol(A[perm], 0.0)
    assert sorted(perm[idx]) == list(range(r))


def test_maxvol_dominance(rng):
    A = rng.standard_normal((50, 6))
    idx = maxvol(A, 0.05)
    B = A @ np.linalg.inv(A[idx])
    assert np.abs(B).max() <= 1.05 + 1e-12
    best = abs(np.linalg.det(A[idx]))
    for _ in range(1000):
        s = rng.choice(50, 6, replace=False)
        assert abs(np.linalg.det(A[s])) <= best * (1 + 1e-12)


@given(seeds, st.integers(1, 6), st.integers(0, 20))
def test_maxvol_postcondition(seed, r, extra):
    A = np.random.default_rng(seed).standard_normal((r + extra, r))
    idx = maxvol(A, 0.05)
    assert len(set(idx)) == r
    assert np.abs(A @ np.linalg.inv(A[idx])).max() <= 1.05 + 1e-9


def test_maxvol_exhaustive_small(rng):
    # with delta = 0 the result is a local optimum; on 4x2 it must be global for this matrix
    A = np.array([[1.0, 0.1], [0.2, 3.0], [2.0, -1.0], [0.5, 0.5]])
    idx = maxvol(A, 0.0)
    best = max(abs(np.linalg.det(A[list(s)])) for s in itertools.combinations(range(4), 2))
    assert np.isclose(abs(np.linalg.det(A[idx])), best)


def test_maxvol_wide_rejected():
    with pytest.raises(InvalidInputError):
        maxvol(np.ones((2, 3)))


def test_spd_identity():
    B = np.arange(6.0).reshape(3, 2)
    assert np.allclose(solve_spd(np.eye(3), B), B)


def test_spd_diag():
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), np.array([[2.0], [8.0]])), [[1], [2]])


def test_spd_random(rng):
    B = rng.standard_normal((12, 12))
    A = B @ B.T + 12 * np.eye(12)
    b = rng.standard_normal(12)
    assert np.abs(A @ solve_spd(A, b) - b).max() <= 1e-10
    assert np.allclose(SPDFactor(A).solve(b), solve_spd(A, b))


def test_spd_rejects_indefinite():
    with pytest.raises(FactorizationError):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
