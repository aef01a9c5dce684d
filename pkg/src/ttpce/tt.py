"""Tensor-train tensors and operators.

Core layout (fixed, C order):

* TTTensor core k has shape (r_k, n_k, r_{k+1}); entry (a, i, b) sits at
  flat position (a * n_k + i) * r_{k+1} + b.
* TTMatrix core k has shape (r_k, m_k, n_k, r_{k+1}) with row index m_k and
  column index n_k.

The border ranks r_0 and r_M may exceed one.  A tensor with r_0 = L stores L
tensors sharing cores 1..M-1; core 0 can equally hold a spatial basis, with r_0
then enumerating something else entirely.  All operations return new objects.
"""

import io

import numpy as np

from .errors import InvalidInputError
from .linalg import orthonormalize, truncated_svd


def _freeze(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class TTTensor:
    """Chain of 3-way cores, core k shaped (r_k, n_k, r_{k+1})."""

    def __init__(self, cores, check=True):
        cores = [_freeze(c) for c in cores]
        if not cores:
            raise InvalidInputError("a TT needs at least one core")
        if check:
            for k, c in enumerate(cores):
                if c.ndim != 3:
                    raise InvalidInputError(f"core {k} has ndim {c.ndim}, expected 3")
                if k and c.shape[0] != cores[k - 1].shape[2]:
                    raise InvalidInputError(
                        f"rank mismatch between cores {k-1} and {k}: "
                        f"{cores[k-1].shape[2]} != {c.shape[0]}")
                if not np.all(np.isfinite(c)):
                    raise InvalidInputError(f"core {k} has non-finite entries")
        self.cores = tuple(cores)

    @property
    def d(self):
        return len(self.cores)

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return tuple([self.cores[0].shape[0]] + [c.shape[2] for c in self.cores])

    @property
    def max_rank(self):
        """Largest interior rank (borders excluded); 1 for a single core."""
        r = self.ranks[1:-1]
        return max(r) if r else 1

    def left_folding(self, k):
        """(r_k * n_k) x r_{k+1} view of core k."""
        c = self.cores[k]
        return c.reshape(c.shape[0] * c.shape[1], c.shape[2])

    def right_folding(self, k):
        """r_k x (n_k * r_{k+1}) view of core k."""
        c = self.cores[k]
        return c.reshape(c.shape[0], c.shape[1] * c.shape[2])

    def full(self, squeeze=True):
        """Dense array of shape (r_0, n_1, ..., n_M, r_M); unit borders dropped."""
        out = self.cores[0]
        for c in self.cores[1:]:
            out = np.tensordot(out, c, axes=(-1, 0))
        if squeeze:
            if out.shape[-1] == 1:
                out = out[..., 0]
            if out.shape[0] == 1:
                out = out[0]
        return out

    def __add__(self, other):
        return tt_add(self, other)

    def __sub__(self, other):
        return tt_add(self, other, 1.0, -1.0)

    def __mul__(self, a):
        return tt_scale(self, a)

    __rmul__ = __mul__

    def __repr__(self):
        return f"TTTensor(mode_sizes={self.mode_sizes}, ranks={self.ranks})"


class TTMatrix:
    """Chain of 4-way cores, core k shaped (r_k, m_k, n_k, r_{k+1})."""

    def __init__(self, cores, check=True):
        cores = [_freeze(c) for c in cores]
        if check:
            for k, c in enumerate(cores):
                if c.ndim != 4:
                    raise InvalidInputError(f"core {k} has ndim {c.ndim}, expected 4")
                if k and c.shape[0] != cores[k - 1].shape[3]:
                    raise InvalidInputError(f"rank mismatch at core {k}")
                if not np.all(np.isfinite(c)):
                    raise InvalidInputError(f"core {k} has non-finite entries")
        self.cores = tuple(cores)

    @property
    def d(self):
        return len(self.cores)

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self):
        return tuple([self.cores[0].shape[0]] + [c.shape[3] for c in self.cores])

    def full(self):
        """Dense matrix (prod m_k) x (prod n_k); requires unit border ranks."""
        if self.ranks[0] != 1 or self.ranks[-1] != 1:
            raise InvalidInputError("full() needs unit border ranks")
        out = self.cores[0][0]                       # (m, n, r)
        rows, cols = self.row_sizes[0], self.col_sizes[0]
        for c in self.cores[1:]:
            out = np.einsum("ijr,rklq->ikjlq", out, c)
            rows *= c.shape[1]
            cols *= c.shape[2]
            out = out.reshape(rows, cols, c.shape[3])
        return out[..., 0]

    def transpose(self):
        return TTMatrix([c.transpose(0, 2, 1, 3) for c in self.cores], check=False)

    def __repr__(self):
        return (f"TTMatrix(row_sizes={self.row_sizes}, "
                f"col_sizes={self.col_sizes}, ranks={self.ranks})")


def rank1(vectors):
    """Rank-1 TT from one vector per mode."""
    return TTTensor([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])


def tt_random(mode_sizes, ranks, rng=None, border=(1, 1)):
    """TT with i.i.d. standard normal cores; ranks lists the interior ranks."""
    rng = np.random.default_rng(rng)
    if np.isscalar(ranks):
        ranks = [ranks] * (len(mode_sizes) - 1)
    r = [border[0]] + list(ranks) + [border[1]]
    return TTTensor([rng.standard_normal((r[k], n, r[k + 1]))
                     for k, n in enumerate(mode_sizes)])


def tt_svd(A, tol_rel=0.0, rank_max=None):
    """TT decomposition of a dense array by sequential truncated SVDs."""
    A = np.asarray(A, dtype=float)
    shape = A.shape
    d = len(shape)
    eps = tol_rel / np.sqrt(max(d - 1, 1))
    cores = []
    r = 1
    C = A.reshape(1, -1)
    for k in range(d - 1):
        C = C.reshape(r * shape[k], -1)
        U, S, V, rn = truncated_svd(C, eps, rank_max)
        cores.append(U.reshape(r, shape[k], rn))
        C = S[:, None] * V.T
        r = rn
    cores.append(C.reshape(r, shape[-1], 1))
    return TTTensor(cores)


def tt_entry(x, idx, border_left=None, border_right=None):
    """Entry of x at multi-index idx.

    With both border indices given (or borders of size one) a float is
    returned, otherwise the r_0 x r_M block (or the relevant row/column).
    """
    idx = [int(i) for i in idx]
    if len(idx) != x.d:
        raise InvalidInputError(f"index has length {len(idx)}, tensor has {x.d} modes")
    for k, (i, n) in enumerate(zip(idx, x.mode_sizes)):
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for mode {k} of size {n}")
    r0, rM = x.ranks[0], x.ranks[-1]
    if border_left is not None and not 0 <= border_left < r0:
        raise IndexError("left border index out of range")
    if border_right is not None and not 0 <= border_right < rM:
        raise IndexError("right border index out of range")
    v = x.cores[0][:, idx[0], :]
    for c, i in zip(x.cores[1:], idx[1:]):
        v = v @ c[:, i, :]
    if border_left is None and r0 == 1:
        border_left = 0
    if border_right is None and rM == 1:
        border_right = 0
    if border_left is not None:
        v = v[border_left]
        return float(v[border_right]) if border_right is not None else v
    return v[:, border_right] if border_right is not None else v


def tt_entries(x, idx):
    """Batched entries: idx (B, M) -> array (B, r_0, r_M)."""
    idx = np.asarray(idx, dtype=int)
    v = np.transpose(x.cores[0][:, idx[:, 0], :], (1, 0, 2))
    for k in range(1, x.d):
        v = np.einsum("bij,bjk->bik", v,
                      np.transpose(x.cores[k][:, idx[:, k], :], (1, 0, 2)))
    return v


def tt_scale(x, a):
    cores = list(x.cores)
    cores[0] = a * cores[0]
    return TTTensor(cores, check=False)


def tt_add(x, y, a=1.0, b=1.0):
    """TT of a*x + b*y by core concatenation; interior ranks add, no rounding."""
    if x.mode_sizes != y.mode_sizes:
        raise InvalidInputError(f"mode sizes differ: {x.mode_sizes} vs {y.mode_sizes}")
    if x.ranks[0] != y.ranks[0] or x.ranks[-1] != y.ranks[-1]:
        raise InvalidInputError("border ranks differ")
    d = x.d
    if d == 1:
        return TTTensor([a * x.cores[0] + b * y.cores[0]], check=False)
    cores = []
    for k, (cx, cy) in enumerate(zip(x.cores, y.cores)):
        if k == 0:
            c = np.concatenate([a * cx, b * cy], axis=2)
        elif k == d - 1:
            c = np.concatenate([cx, cy], axis=0)
        else:
            rx0, n, rx1 = cx.shape
            ry0, _, ry1 = cy.shape
            c = np.zeros((rx0 + ry0, n, rx1 + ry1))
            c[:rx0, :, :rx1] = cx
            c[rx0:, :, rx1:] = cy
        cores.append(c)
    return TTTensor(cores, check=False)


def tt_dot(x, y):
    """Border matrix C[s, t] = sum_alpha x_s(alpha) y_t(alpha).

    The right border index (if larger than one) is summed together with
    alpha.  Returns a float when both left borders are 1.
    """
    if x.mode_sizes != y.mode_sizes:
        raise InvalidInputError(f"mode sizes differ: {x.mode_sizes} vs {y.mode_sizes}")
    if x.ranks[-1] != y.ranks[-1]:
        raise InvalidInputError("right border ranks differ")
    psi = np.eye(x.ranks[-1])
    for cx, cy in zip(reversed(x.cores), reversed(y.cores)):
        t = np.tensordot(cx, psi, axes=(2, 0))            # (a, n, d)
        psi = np.tensordot(t, cy, axes=([1, 2], [1, 2]))  # (a, c)
    if psi.shape == (1, 1):
        return float(psi[0, 0])
    return psi


def tt_norm(x):
    """Frobenius norm over all indices, borders included."""
    g = tt_dot(x, x)
    return float(np.sqrt(max(np.trace(np.atleast_2d(g)), 0.0)))


def tt_orthogonalize_right(x):
    """Right-orthonormal copy: cores 1..M-1 have orthonormal rows."""
    cores = [np.array(c) for c in x.cores]
    for k in range(x.d - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        Q, R = orthonormalize(cores[k].reshape(r0, n * r1).T)
        cores[k] = Q.T.reshape(-1, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    return cores


def tt_round(x, tol_rel=0.0, rank_max=None):
    """Quasi-optimal rank reduction with ||x - y||_F <= tol_rel ||x||_F.

    Right-to-left QR followed by left-to-right truncated SVDs, each at
    tol_rel / sqrt(M - 1).
    """
    if not 0.0 <= tol_rel < 1.0:
        raise InvalidInputError(f"tol_rel={tol_rel} outside [0,1)")
    d = x.d
    if d == 1:
        return TTTensor(x.cores, check=False)
    cores = tt_orthogonalize_right(x)
    eps = tol_rel / np.sqrt(d - 1)
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        U, S, V, r = truncated_svd(cores[k].reshape(r0 * n, r1), eps, rank_max)
        cores[k] = U.reshape(r0, n, r)
        cores[k + 1] = np.tensordot(S[:, None] * V.T, cores[k + 1], axes=(1, 0))
    return TTTensor(cores, check=False)


def ttm_apply(A, x):
    """TT of the matrix-vector product A x; ranks multiply."""
    if A.col_sizes != x.mode_sizes:
        raise InvalidInputError(f"column sizes {A.col_sizes} != mode sizes {x.mode_sizes}")
    cores = []
    for a, c in zip(A.cores, x.cores):
        ra0, m, n, ra1 = a.shape
        rx0, _, rx1 = c.shape
        y = np.einsum("aijb,cjd->acibd", a, c)
        cores.append(y.reshape(ra0 * rx0, m, ra1 * rx1))
    return TTTensor(cores, check=False)


def tt_contract_weights(x, weights):
    """Border matrix sum_alpha x(alpha) prod_k w_k(alpha_k), shape (r_0, r_M)."""
    if len(weights) != x.d:
        raise InvalidInputError("one weight vector per mode expected")
    v = np.eye(x.ranks[-1])
    for c, w in zip(reversed(x.cores), reversed(list(weights))):
        w = np.asarray(w, dtype=float)
        if w.shape != (c.shape[1],):
            raise InvalidInputError(f"weight length {w.shape} != mode size {c.shape[1]}")
        v = np.einsum("anb,n,bc->ac", c, w, v)
    return v


def slice_modes(x, sizes):
    """Restrict mode k to its first sizes[k] indices."""
    return TTTensor([c[:, :n, :] for c, n in zip(x.cores, sizes)], check=False)


def _index_set(s, width):
    if s is None:
        return None
    s = np.asarray(s, dtype=int)
    if s.ndim != 2 or s.shape[1] != width:
        raise InvalidInputError(f"index set must have shape (r, {width}), got {s.shape}")
    return s


def interface_submatrices(x, left_sets, right_sets):
    """Restricted interfaces of a TT with unit borders.

    left_sets[k] is an int array (r_k, k) of multi-indices over modes 0..k-1,
    right_sets[k] an int array (r_k, M-k) over modes k..M-1, for k = 0..M
    (entries with empty index sets are ignored).  Returns two lists: the
    left blocks U_<k[I_k, :] (r_k x r_k) and the right blocks U_>k[:, J_k].
    Interfaces are evaluated directly from the cores by chain products.
    """
    if x.ranks[0] != 1 or x.ranks[-1] != 1:
        raise InvalidInputError("interfaces are defined for unit border ranks")
    d = x.d
    ranks = x.ranks
    left, right = [], []
    for k in range(d + 1):
        I = _index_set(left_sets[k], k)
        J = _index_set(right_sets[k], d - k)
        if I is not None:
            if I.shape[0] != ranks[k]:
                raise InvalidInputError(
                    f"left set {k} has {I.shape[0]} indices, rank is {ranks[k]}")
            v = np.ones((I.shape[0], 1))
            for j in range(k):
                v = np.einsum("br,brs->bs", v,
                              np.transpose(x.cores[j][:, I[:, j], :], (1, 0, 2)))
            left.append(v)
        else:
            left.append(None)
        if J is not None:
            if J.shape[0] != ranks[k]:
                raise InvalidInputError(
                    f"right set {k} has {J.shape[0]} indices, rank is {ranks[k]}")
            v = np.ones((J.shape[0], 1))
            for j in range(d - 1, k - 1, -1):
                v = np.einsum("brs,bs->br",
                              np.transpose(x.cores[j][:, J[:, j - k], :], (1, 0, 2)), v)
            right.append(v.T)
        else:
            right.append(None)
    return left, right


def tt_save(x, path):
    """Write a TT tensor as an npz archive (core arrays in C order)."""
    arrays = {f"core{k}": np.asarray(c) for k, c in enumerate(x.cores)}
    arrays["mode_sizes"] = np.array(x.mode_sizes)
    arrays["ranks"] = np.array(x.ranks)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def tt_load(path):
    with np.load(path) as z:
        d = len(z["mode_sizes"])
        cores = [z[f"core{k}"] for k in range(d)]
        x = TTTensor(cores)
        if tuple(z["ranks"]) != x.ranks:
            raise InvalidInputError("stored ranks disagree with cores")
    return x
