"""Dense matrix kernels: QR, truncated SVD, symmetric eigensolver, maxvol, SPD solve.

Matrices are 2-D float64 numpy arrays in C order (row-major).  Factorizations
are delegated to LAPACK through numpy/scipy; maxvol is written out here.
"""

import numpy as np
import scipy.linalg as sla

from .errors import FactorizationError, InvalidInputError, SingularSubmatrixError


def _check_finite(A, name="A"):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def orthonormalize(A):
    """Thin QR, A = Q R with orthonormal Q and upper-triangular R.

    Returns Q of shape (m, k) and R of shape (k, n) with k = min(m, n).
    """
    A = _check_finite(A)
    if A.ndim != 2:
        raise InvalidInputError("expected a matrix")
    return np.linalg.qr(A, mode="reduced")


def truncated_svd(A, tol_rel=0.0, rank_max=None):
    """SVD truncated to the smallest rank r with tail norm <= tol_rel * ||A||_F.

    Returns (U, S, V, r) so that A ~= U @ diag(S) @ V.T.  A zero matrix gives
    r = 1 and S = [0] so that a TT rank never drops to 0.
    """
    A = _check_finite(A)
    if not 0.0 <= tol_rel < 1.0:
        raise InvalidInputError(f"tol_rel={tol_rel} outside [0,1)")
    m, n = A.shape
    if rank_max is None:
        rank_max = min(m, n)
    if rank_max < 1:
        raise InvalidInputError("rank_max must be >= 1")
    try:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        U, S, Vt = sla.svd(A, full_matrices=False, lapack_driver="gesvd")
    r = svd_rank(S, tol_rel)
    r = max(1, min(r, rank_max, S.size))
    return U[:, :r], S[:r].copy(), Vt[:r].T, r


def svd_rank(S, tol_rel):
    """Smallest r such that ||S[r:]||_2 <= tol_rel * ||S||_2."""
    total = np.sqrt(np.sum(S**2))
    if total == 0.0:
        return 1
    # tail[k] = norm of S[k:]
    tail = np.sqrt(np.cumsum((S**2)[::-1]))[::-1]
    tail = np.append(tail, 0.0)
    ok = np.nonzero(tail <= tol_rel * total)[0]
    return max(1, int(ok[0]))


def sym_eig(A, subset=None):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    subset=k returns only the k largest pairs.
    """
    A = _check_finite(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("sym_eig needs a square matrix")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > 1e-10 * scale:
        raise InvalidInputError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if subset is None or subset >= n:
        lam, V = np.linalg.eigh(A)
    else:
        lam, V = sla.eigh(A, subset_by_index=[n - subset, n - 1])
    return lam[::-1].copy(), V[:, ::-1].copy()


def _pivoted_rows(A):
    """Row indices chosen by Gaussian elimination with partial pivoting."""
    A = A.copy()
    m, r = A.shape
    perm = np.arange(m)
    scale = np.abs(A).max()
    for k in range(r):
        piv = k + int(np.argmax(np.abs(A[k:, k])))
        if np.abs(A[piv, k]) <= 1e-14 * max(scale, 1e-300):
            raise SingularSubmatrixError("matrix is rank deficient")
        if piv != k:
            A[[k, piv]] = A[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
    return perm[:r]


def maxvol(A, delta=0.05, max_swaps=200):
    """Rows of a tall matrix whose square submatrix has quasi-maximal volume.

    On return every entry of B = A @ inv(A[I]) satisfies |B| <= 1 + delta
    (unless max_swaps runs out first).  Ties resolve to the lowest index.
    """
    A = _check_finite(A)
    m, r = A.shape
    if m < r:
        raise InvalidInputError(f"maxvol needs a tall matrix, got {A.shape}")
    if r == 0:
        return np.zeros(0, dtype=int)
    idx = _pivoted_rows(A)
    try:
        B = np.linalg.solve(A[idx].T, A.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSubmatrixError(str(exc)) from exc
    if not np.all(np.isfinite(B)):
        raise SingularSubmatrixError("singular starting submatrix")
    for _ in range(max_swaps):
        flat = int(np.argmax(np.abs(B)))
        i, j = divmod(flat, r)
        if abs(B[i, j]) <= 1.0 + delta:
            break
        # replace row idx[j] by row i; rank-1 update of B
        bj = B[:, j].copy()
        bi = B[i].copy()
        bi[j] -= 1.0
        B -= np.outer(bj / B[i, j], bi)
        idx[j] = i
    return idx


def solve_spd(A, B):
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    A = _check_finite(A)
    B = _check_finite(B, "B")
    try:
        c = sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"matrix is not SPD: {exc}") from exc
    return sla.cho_solve(c, B, check_finite=False)


class SPDFactor:
    """Reusable Cholesky factor of an SPD matrix."""

    def __init__(self, A):
        A = _check_finite(A)
        try:
            self._c = sla.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"matrix is not SPD: {exc}") from exc
        self.n = A.shape[0]

    def solve(self, B):
        return sla.cho_solve(self._c, B, check_finite=False)
