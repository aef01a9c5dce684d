"""Block TT-cross: one shared TT for L tensors from entry evaluations.

A two-site DMRG-style cross for a single tensor is included as a baseline.

Index sets follow one convention throughout: for a chain of M cores,
``I[k]`` is an int array (r_k, k) of multi-indices over modes 0..k-1 and
``J[k]`` is an int array (r_k, M-k) over modes k..M-1.  ``UL[k]`` is the
left interface of cores 0..k-1 restricted to the rows ``I[k]`` and
``UR[k]`` the right interface of cores k..M-1 restricted to the columns
``J[k]``; both are r_k x r_k.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, InvalidInputError, SingularSubmatrixError
from .linalg import maxvol, orthonormalize, truncated_svd
from .tt import TTTensor, tt_add, tt_norm, tt_random, tt_round


class BlockEvaluator:
    """Black box returning L values per multi-index.

    Subclasses implement ``_values(idx)`` for an int array (B, M) returning
    (B, L).  ``evaluate_block`` can be overridden to exploit the product
    structure of a cross block; the default enumerates the block.
    ``n_evals`` counts evaluated multi-indices (each delivering L values).
    """

    def __init__(self, mode_sizes, L=1):
        self.mode_sizes = tuple(int(n) for n in mode_sizes)
        self.L = int(L)
        self.n_evals = 0

    @property
    def d(self):
        return len(self.mode_sizes)

    def _values(self, idx):
        raise NotImplementedError

    def _check(self, vals, idx_of):
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            where = tuple(int(i) for i in idx_of(bad))
            raise EvaluationError(f"non-finite value at index {where}", index=where)
        return vals

    def evaluate(self, idx):
        """Values (B, L) at multi-indices idx (B, M)."""
        idx = np.atleast_2d(np.asarray(idx, dtype=int))
        if idx.shape[1] != self.d:
            raise InvalidInputError(f"index width {idx.shape[1]} != {self.d}")
        self.n_evals += idx.shape[0]
        vals = np.asarray(self._values(idx), dtype=float).reshape(idx.shape[0], self.L)
        return self._check(vals, lambda b: idx[b[0]])

    def evaluate_block(self, left, start, stop, right):
        """Values at {left} x modes start..stop-1 x {right}.

        left (rl, start) and right (rr, M-stop) int arrays; returns an array
        (rl, n_start, ..., n_{stop-1}, rr, L).
        """
        left, right = _as_sets(left, start), _as_sets(right, self.d - stop)
        mid = [np.arange(self.mode_sizes[m]) for m in range(start, stop)]
        grids = np.meshgrid(np.arange(len(left)), *mid, np.arange(len(right)), indexing="ij")
        flat = [g.ravel() for g in grids]
        idx = np.concatenate([left[flat[0]]] + [f[:, None] for f in flat[1:-1]]
                             + [right[flat[-1]]], axis=1)
        vals = self.evaluate(idx)
        shape = (len(left),) + tuple(len(m) for m in mid) + (len(right), self.L)
        return vals.reshape(shape)

    def _count_block(self, left, start, stop, right):
        n = int(np.prod(self.mode_sizes[start:stop]))
        self.n_evals += len(left) * n * len(right)


def _as_sets(a, width):
    a = np.asarray(a, dtype=int)
    if a.ndim != 2 or a.shape[1] != width:
        raise InvalidInputError(f"index set must be (r, {width}), got {a.shape}")
    return a


class FunctionEvaluator(BlockEvaluator):
    """Evaluator from a vectorized function f(idx (B, M)) -> (B,) or (B, L)."""

    def __init__(self, fun, mode_sizes, L=1):
        super().__init__(mode_sizes, L)
        self.fun = fun

    def _values(self, idx):
        return self.fun(idx)


@dataclass
class CrossInfo:
    iterations: int = 0
    converged: bool = False
    n_evals: int = 0
    history: list = field(default_factory=list)   # (iteration, max rank, evals, change, discard)
    left_sets: list = None                         # final I[k], k = 0..M
    right_sets: list = None                        # final J[k]

    def log_lines(self):
        return [f"iter={it} max_rank={r} evals={n} rel_change={c:.3e} svd_discard={s:.3e}"
                for it, r, n, c, s in self.history]


def _safe_maxvol(W, rng, delta):
    try:
        return maxvol(W, delta)
    except SingularSubmatrixError:
        # one retry on a randomly perturbed copy, then give up
        scale = np.abs(W).max() if W.size else 1.0
        return maxvol(W + 1e-12 * scale * rng.standard_normal(W.shape), delta)


def _solve_left(U, Y):
    """U^{-1} applied along axis 0 of Y."""
    try:
        return np.linalg.solve(U, Y.reshape(U.shape[0], -1)).reshape(Y.shape)
    except np.linalg.LinAlgError as exc:
        raise SingularSubmatrixError(f"singular left interface: {exc}") from exc


def _solve_right(Y, U, axis):
    """Y multiplied by U^{-1} along axis (U square)."""
    Ym = np.moveaxis(Y, axis, -1)
    sh = Ym.shape
    try:
        out = np.linalg.solve(U.T, Ym.reshape(-1, sh[-1]).T).T.reshape(sh)
    except np.linalg.LinAlgError as exc:
        raise SingularSubmatrixError(f"singular right interface: {exc}") from exc
    return np.moveaxis(out, -1, axis)


def _enrich(Q, kick, rng):
    """Append kick random orthogonal directions to orthonormal columns Q."""
    m, r = Q.shape
    kick = min(kick, m - r)
    if kick <= 0:
        return Q
    Z = rng.standard_normal((m, kick))
    Q2, _ = orthonormalize(np.hstack([Q, Z]))
    return Q2


def _left_step(k, y_mat, n, state, tol, rank_max, kick, rng, delta):
    """Left-to-right split of the local block; returns discarded fraction."""
    I, UL = state["I"], state["UL"]
    r0 = UL[k].shape[0]
    U, S, V, r = truncated_svd(y_mat, tol, rank_max)
    if kick:
        U = _enrich(U, kick, rng)
    r = U.shape[1]
    core = U.reshape(r0, n, r)
    W = np.einsum("ab,bnc->anc", UL[k], core).reshape(r0 * n, r)
    pos = _safe_maxvol(W, rng, delta)
    I[k + 1] = np.hstack([I[k][pos // n], (pos % n)[:, None]])
    UL[k + 1] = W[pos]
    return core, U, S, V


def _right_step(k, y_mat, n, state, tol, rank_max, kick, rng, delta):
    """Right-to-left split: y_mat is (rows, n * r_{k+1}), new core = right factor."""
    J, UR = state["J"], state["UR"]
    r1 = UR[k + 1].shape[0]
    U, S, V, r = truncated_svd(y_mat, tol, rank_max)
    if kick:
        V = _enrich(V, kick, rng)
    r = V.shape[1]
    core = V.T.reshape(r, n, r1)
    W = np.einsum("anb,bc->anc", core, UR[k + 1]).reshape(r, n * r1)
    pos = _safe_maxvol(W.T, rng, delta)
    J[k] = np.hstack([(pos // r1)[:, None], J[k + 1][pos % r1]])
    UR[k] = W[:, pos]
    return core, U, S, V


def _init_state(d):
    return {"I": [np.zeros((1, 0), dtype=int)] + [None] * d,
            "J": [None] * d + [np.zeros((1, 0), dtype=int)],
            "UL": [np.ones((1, 1))] + [None] * d,
            "UR": [None] * d + [np.ones((1, 1))]}


def _prepare_guess(guess, mode_sizes, rng):
    if guess is None:
        guess = tt_random(mode_sizes, 2, rng)
        guess = TTTensor([c + 0.5 for c in guess.cores], check=False)
    if tuple(guess.mode_sizes) != tuple(mode_sizes):
        raise InvalidInputError("guess mode sizes do not match the evaluator")
    cores = [np.array(c) for c in guess.cores]
    if cores[0].shape[0] != 1:
        cores[0] = cores[0].sum(axis=0, keepdims=True)
    if cores[-1].shape[2] != 1:
        cores[-1] = cores[-1].sum(axis=2, keepdims=True)
    return cores


def warmup_sweep(cores, state, rng=None, delta=0.05):
    """Left-to-right QR of the guess with maxvol index selection.

    Fills I, UL in state and returns the orthonormalized cores.
    """
    rng = np.random.default_rng(rng)
    d = len(cores)
    cores = [np.array(c) for c in cores]
    I, UL = state["I"], state["UL"]
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        Q, R = orthonormalize(cores[k].reshape(r0 * n, r1))
        r = Q.shape[1]
        cores[k] = Q.reshape(r0, n, r)
        cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
        W = np.einsum("ab,bnc->anc", UL[k], cores[k]).reshape(r0 * n, r)
        pos = _safe_maxvol(W, rng, delta)
        I[k + 1] = np.hstack([I[k][pos // n], (pos % n)[:, None]])
        UL[k + 1] = W[pos]
    return cores


def block_cross(evaluator, tol=1e-6, guess=None, n_it_max=10, rank_max=200,
                kickrank=None, seed=0, delta=0.05, round_output=True, log=None):
    """Block TT-cross approximation of the L tensors behind ``evaluator``.

    Returns (tt, info); tt has left border rank L (the tensor index) and
    unit right border.  With L = 1 ranks could never grow, so ``kickrank``
    random directions are appended to every new basis (default 4 for L = 1,
    1 otherwise); the output is rounded at tol to remove them.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    rng = np.random.default_rng(seed)
    ns = evaluator.mode_sizes
    d, L = len(ns), evaluator.L
    if kickrank is None:
        kickrank = 4 if L == 1 else 1
    info = CrossInfo()
    n0 = evaluator.n_evals

    if d == 1:
        Y = evaluator.evaluate_block(np.zeros((1, 0), int), 0, 1, np.zeros((1, 0), int))
        tt = TTTensor([Y[0, :, 0, :].T[:, :, None]])
        info.iterations, info.converged = 1, True
        info.n_evals = evaluator.n_evals - n0
        return tt, info

    cores = _prepare_guess(guess, ns, rng)
    state = _init_state(d)
    eps_loc = tol / np.sqrt(d - 1)
    prev = None
    for it in range(1, n_it_max + 1):
        discard = 0.0
        if it == 1:
            cores = warmup_sweep(cores, state, rng, delta)
        else:
            for k in range(d - 1):
                Y = evaluator.evaluate_block(state["I"][k], k, k + 1, state["J"][k + 1])
                y = _solve_right(_solve_left(state["UL"][k], Y), state["UR"][k + 1], 2)
                r0, n, r1, _ = y.shape
                ymat = y.reshape(r0 * n, r1 * L)
                core, U, S, V = _left_step(k, ymat, n, state, eps_loc, rank_max, kickrank, rng, delta)
                discard = max(discard, _tail(ymat, S))
                cores[k] = core
        for k in range(d - 1, 0, -1):
            Y = evaluator.evaluate_block(state["I"][k], k, k + 1, state["J"][k + 1])
            y = _solve_right(_solve_left(state["UL"][k], Y), state["UR"][k + 1], 2)
            r0, n, r1, _ = y.shape
            ymat = np.transpose(y, (3, 0, 1, 2)).reshape(L * r0, n * r1)
            core, U, S, V = _right_step(k, ymat, n, state, eps_loc, rank_max, kickrank, rng, delta)
            discard = max(discard, _tail(ymat, S))
            cores[k] = core
        Y = evaluator.evaluate_block(state["I"][0], 0, 1, state["J"][1])  # (1, n, r1, L)
        first = _solve_right(Y[0], state["UR"][1], 1)                      # (n, r1, L)
        cores[0] = np.transpose(first, (2, 0, 1))
        tt = TTTensor(cores)
        change = np.inf
        if prev is not None:
            nrm = tt_norm(tt)
            change = tt_norm(tt_add(tt, prev, 1.0, -1.0)) / nrm if nrm > 0 else 0.0
        info.history.append((it, tt.max_rank, evaluator.n_evals - n0, change, discard))
        if log is not None:
            log(info.log_lines()[-1])
        prev = tt
        info.iterations = it
        if change < tol:
            info.converged = True
            break
    info.n_evals = evaluator.n_evals - n0
    info.left_sets, info.right_sets = state["I"], state["J"]
    if round_output:
        prev = tt_round(prev, tol)
    return prev, info


def _tail(A, S):
    """Relative Frobenius norm of what truncation to S dropped."""
    a2 = float(np.sum(A * A))
    if a2 == 0:
        return 0.0
    return float(np.sqrt(max(a2 - np.sum(S * S), 0.0) / a2))


def block_cross_approximate(f, tol_rel=1e-6, guess=None, n_it_max=10, rank_max=200, **kw):
    """TT with left border L from the block evaluator f (see block_cross)."""
    return block_cross(f, tol_rel, guess, n_it_max, rank_max, **kw)[0]


def dmrg_cross(evaluator, tol=1e-6, n_it_max=10, rank_max=200, seed=0, delta=0.05, log=None):
    """Two-site cross for a single tensor (evaluator.L must be 1).

    Each step evaluates the superblock of two neighbouring cores and splits
    it by a truncated SVD; the left/right factors stay orthonormal.
    Returns (tt, info).
    """
    if evaluator.L != 1:
        raise InvalidInputError("dmrg_cross handles a single tensor")
    rng = np.random.default_rng(seed)
    ns = evaluator.mode_sizes
    d = len(ns)
    info = CrossInfo()
    n0 = evaluator.n_evals
    if d == 1:
        return block_cross(evaluator, tol)
    cores = _prepare_guess(None, ns, rng)
    state = _init_state(d)
    # right-to-left initialization of J, UR
    for k in range(d - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        Q, R = orthonormalize(cores[k].reshape(r0, n * r1).T)
        r = Q.shape[1]
        cores[k] = Q.T.reshape(r, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
        W = np.einsum("anb,bc->anc", cores[k], state["UR"][k + 1]).reshape(r, n * r1)
        pos = _safe_maxvol(W.T, rng, delta)
        state["J"][k] = np.hstack([(pos // r1)[:, None], state["J"][k + 1][pos % r1]])
        state["UR"][k] = W[:, pos]
    eps_loc = tol / np.sqrt(d - 1)
    prev = None
    for it in range(1, n_it_max + 1):
        discard = 0.0
        for k in range(d - 1):
            y = _superblock(evaluator, state, k)
            r0, n1, n2, r2 = y.shape
            ymat = y.reshape(r0 * n1, n2 * r2)
            core, U, S, V = _left_step(k, ymat, n1, state, eps_loc, rank_max, 0, rng, delta)
            discard = max(discard, _tail(ymat, S))
            cores[k] = core
            cores[k + 1] = (S[:, None] * V.T).reshape(-1, n2, r2)
        for k in range(d - 2, -1, -1):
            y = _superblock(evaluator, state, k)
            r0, n1, n2, r2 = y.shape
            ymat = y.reshape(r0 * n1, n2 * r2)
            core, U, S, V = _right_step(k + 1, ymat, n2, state, eps_loc, rank_max, 0, rng, delta)
            discard = max(discard, _tail(ymat, S))
            cores[k + 1] = core
            cores[k] = (U * S).reshape(r0, n1, -1)
        tt = TTTensor(cores)
        change = np.inf
        if prev is not None:
            nrm = tt_norm(tt)
            change = tt_norm(tt_add(tt, prev, 1.0, -1.0)) / nrm if nrm > 0 else 0.0
        info.history.append((it, tt.max_rank, evaluator.n_evals - n0, change, discard))
        if log is not None:
            log(info.log_lines()[-1])
        prev = tt
        info.iterations = it
        if change < tol:
            info.converged = True
            break
    info.n_evals = evaluator.n_evals - n0
    info.left_sets, info.right_sets = state["I"], state["J"]
    return prev, info


def _superblock(evaluator, state, k):
    Y = evaluator.evaluate_block(state["I"][k], k, k + 2, state["J"][k + 2])[..., 0]
    return _solve_right(_solve_left(state["UL"][k], Y), state["UR"][k + 2], 3)


def dmrg_cross_baseline(f, tol_rel=1e-6, **kw):
    """Single-tensor two-site cross; returns the TT only."""
    return dmrg_cross(f, tol_rel, **kw)[0]
