"""Alternating TT solver for the stochastic Galerkin system K u = f.

One pass updates the cores left to right: each core is the solution of the
Galerkin system projected onto the current interfaces, then truncated by SVD
and enriched with a few directions of the projected residual (AMEn-style).
The residual is tracked by its own low-rank TT z.  Passes alternate
direction; the chain is simply reversed (cores transposed) between passes so
that one code path handles both directions.

Local systems are solved with PCG preconditioned by the projected mean-field
operator, which is a Kronecker product of three SPD factors, or by a dense
Cholesky solve when small.

Convergence is measured by the mean-field preconditioned residual
||P^{-1}(K u - f)|| / ||P^{-1} f|| with P = K_0 (x) Delta_0, computed exactly
by contracting the TT structure.  The plain residual scales with the
condition number of the FEM matrices and is reported alongside.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import CoercivityError, FactorizationError, InvalidInputError
from .linalg import orthonormalize, solve_spd, truncated_svd
from .tt import TTTensor, tt_add, tt_dot, tt_orthogonalize_right


@dataclass
class SolverOptions:
    tol_rel: float = 1e-4
    max_sweeps: int = 50
    enrichment_rank: int = 3
    rank_max: int = 200
    local_solver: str = "auto"       # "auto", "dense" or "pcg"
    dense_max: int = 800             # largest local system solved densely
    local_tol: float = None          # PCG tolerance, default tol_rel / 100 (plain) or / 10
    svd_tol: float = None            # per-core truncation, default tol_rel / (2 sqrt(d)), /100 for plain
    pcg_maxit: int = 500
    residual: str = "plain"          # stopping measure: "plain" or "preconditioned"
    seed: int = 0

    def __post_init__(self):
        if self.tol_rel <= 0:
            raise InvalidInputError("tol_rel must be positive")
        if self.enrichment_rank < 0:
            raise InvalidInputError("enrichment_rank must be >= 0")
        if self.residual not in ("plain", "preconditioned"):
            raise InvalidInputError(f"unknown residual measure {self.residual!r}")


@dataclass
class SolverResult:
    u: TTTensor
    converged: bool
    residual: float
    sweeps: int
    history: list = field(default_factory=list)   # dicts per pass

    def log_lines(self):
        return [f"sweep={h['sweep']} residual={h['residual']:.3e} max_rank={h['max_rank']} "
                f"energy={h['energy']:.12e} local_residual={h['local_residual']:.3e}"
                for h in self.history]


class _Spatial:
    """Sparse spatial operator core with R channels, at the start or end of the chain."""

    def __init__(self, mats, first=True, lu=None):
        self.mats = mats
        self.first = first
        self._lu = lu

    @property
    def R(self):
        return len(self.mats)

    def flipped(self):
        return _Spatial(self.mats, not self.first, self._lu)

    def mean_solve(self, B):
        if self._lu is None:
            self._lu = splu(sp.csc_matrix(self.mats[0]))
        return self._lu.solve(np.asarray(B, dtype=float))


def _flip_core(c):
    if isinstance(c, _Spatial):
        return c.flipped()
    return c.transpose(3, 1, 2, 0) if c.ndim == 4 else c.transpose(2, 1, 0)


def _apply(XL, A, XR, x):
    """Projected operator applied to a local core x (a, j, b)."""
    if isinstance(A, _Spatial):
        if A.first:
            T = np.tensordot(x[0], XR, axes=(1, 2))             # (j, b, d)
            y = sum(K @ T[:, :, d] for d, K in enumerate(A.mats))
            return XL[0, 0, 0] * y[None]
        T = np.tensordot(XL, x[:, :, 0], axes=(2, 0))            # (a, g, j)
        y = sum((K @ T[:, g, :].T).T for g, K in enumerate(A.mats))
        return XR[0, 0, 0] * y[:, :, None]
    t = np.tensordot(XL, x, axes=(2, 0))                          # (a, g, j, d')
    t = np.tensordot(t, A, axes=([1, 2], [0, 2]))                # (a, d', i, d)
    return np.tensordot(t, XR, axes=([1, 3], [2, 1]))            # (a, i, b)


def _env_next(XL, A, qb, qk):
    """Left environment after one core: bra core qb, ket core qk."""
    if isinstance(A, _Spatial):
        if not A.first:
            raise InvalidInputError("no environment beyond the last core")
        Kq = np.stack([K @ qk[0] for K in A.mats], axis=1)        # (N, R, b')
        return XL[0, 0, 0] * np.tensordot(qb[0], Kq, axes=(0, 0))
    t = np.tensordot(XL, qk, axes=(2, 0))                         # (a, g, j, b')
    t = np.tensordot(t, A, axes=([1, 2], [0, 2]))                # (a, b', i, d)
    return np.tensordot(qb, t, axes=([0, 1], [0, 2])).transpose(0, 2, 1)


def _rhs_local(YL, f, YR):
    return np.tensordot(np.tensordot(YL, f, axes=(1, 0)), YR, axes=(2, 1))


def _rhs_env_next(YL, f, qb):
    return np.tensordot(qb, np.tensordot(YL, f, axes=(1, 0)), axes=([0, 1], [0, 1]))


def _sym_inv_factor(X):
    """Inverse of the symmetric part of a small SPD matrix via eigh."""
    X = 0.5 * (X + X.T)
    lam, V = np.linalg.eigh(X)
    if lam.min() <= 0:
        raise CoercivityError("mean-field environment is not positive definite")
    return (V / lam) @ V.T


class _LocalProblem:
    def __init__(self, XL, A, XR):
        self.XL, self.A, self.XR = XL, A, XR
        self.shape = (XL.shape[0], self._n(), XR.shape[0])
        self.size = int(np.prod(self.shape))
        self._prec = None

    def _n(self):
        if isinstance(self.A, _Spatial):
            return self.A.mats[0].shape[0]
        return self.A.shape[1]

    def matvec(self, x):
        return _apply(self.XL, self.A, self.XR, x)

    def dense(self):
        B = np.einsum("agc,gijd,bde->aibcje", self.XL, self.A, self.XR)
        return B.reshape(self.size, self.size)

    def precondition(self, r):
        if self._prec is None:
            iL = _sym_inv_factor(self.XL[:, 0, :])
            iR = _sym_inv_factor(self.XR[:, 0, :])
            if isinstance(self.A, _Spatial):
                mid = None
            else:
                mid = np.linalg.inv(self.A[0, :, :, 0])
            self._prec = (iL, mid, iR)
        iL, mid, iR = self._prec
        y = np.tensordot(iL, r, axes=(1, 0))
        if mid is None:
            a, n, b = y.shape
            y = self.A.mean_solve(y.transpose(1, 0, 2).reshape(n, a * b))
            y = y.reshape(n, a, b).transpose(1, 0, 2)
        else:
            y = np.tensordot(mid, y, axes=(1, 1)).transpose(1, 0, 2)
        return np.tensordot(y, iR, axes=(2, 1))


def _pcg(prob, g, x0, tol, maxit, plain=False):
    """Preconditioned CG; stops on ||r|| (plain) or on (r, P^-1 r)^(1/2)."""
    x = x0.copy()
    r = g - prob.matvec(x)
    z = prob.precondition(r)
    rz = float(np.vdot(r, z))
    gz = float(np.vdot(g, prob.precondition(g)))
    if gz <= 0:
        return x, 0
    if plain:
        size, target = (lambda: float(np.vdot(r, r))), tol * tol * float(np.vdot(g, g))
    else:
        size, target = (lambda: rz), tol * tol * gz
    p = z.copy()
    it = 0
    while size() > target and it < maxit:
        Ap = prob.matvec(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0:
            raise CoercivityError("local Galerkin system is not positive definite")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        z = prob.precondition(r)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it


def _local_solve(prob, g, x0, opts):
    mode = opts.local_solver
    if mode == "auto":
        mode = "dense" if (prob.size <= opts.dense_max and not isinstance(prob.A, _Spatial)) else "pcg"
    if mode == "dense" and not isinstance(prob.A, _Spatial):
        B = prob.dense()
        B = 0.5 * (B + B.T)
        try:
            x = solve_spd(B, g.ravel())
        except FactorizationError as exc:
            raise CoercivityError(f"local Galerkin system is not SPD: {exc}") from exc
        return x.reshape(prob.shape)
    tol = opts.local_tol
    if tol is None:
        tol = opts.tol_rel / (100 if opts.residual == "plain" else 10)
    x, _ = _pcg(prob, g, x0, tol, opts.pcg_maxit, plain=opts.residual == "plain")
    return x


def _reverse(chain):
    return [_flip_core(c) for c in chain[::-1]]


def _mean_field_inverse_cores(A):
    return [np.linalg.inv(c[0, :, :, 0]) for c in A]


def _gram_env(x, A, W, E):
    """Right environment of <A x, W A x>: E[b,d,e,f] -> E'[a,g,h,c]."""
    t = np.tensordot(x, E, axes=(2, 0))                       # (a, j, d, e, f)
    t = np.tensordot(t, A, axes=([1, 2], [2, 3]))             # (a, e, f, g, i)
    if W is not None:
        t = np.tensordot(t, W, axes=(4, 0))                   # (a, e, f, g, k)
    t = np.tensordot(t, A, axes=([1, 4], [3, 1]))             # (a, f, g, h, l)
    return np.tensordot(t, x, axes=([1, 4], [2, 1]))          # (a, g, h, c)


def _spatial_gram(V, E):
    N = V.shape[0]
    Vm = V.reshape(N, -1)                                     # (N, R*r)
    G = Vm.T @ Vm
    R, r = V.shape[1], V.shape[2]
    G = G.reshape(R, r, R, r).transpose(1, 0, 2, 3)           # (b, g, h, c)
    return float(np.vdot(G, E))


def _spatial_cross(x0, Kg, F3):
    N, R, rg = Kg.shape
    T = (x0.T @ Kg.reshape(N, -1)).reshape(x0.shape[1], R, rg)  # (b, g, c)
    return float(np.vdot(T, F3))


def _cross_env(x, A, y, F):
    """Right environment of <A x, y>: F[b,d,f] -> F'[a,g,c]."""
    t = np.tensordot(x, F, axes=(2, 0))                       # (a, j, d, f)
    t = np.tensordot(t, A, axes=([1, 2], [2, 3]))             # (a, f, g, i)
    return np.tensordot(t, y, axes=([1, 3], [2, 1]))          # (a, g, c)


def preconditioned_residual(op, u, f):
    """Exact ||P^{-1}(K u - f)|| / ||P^{-1} f|| for P the mean-field operator.

    op is a StochasticOperator, u and f TTs with the spatial mode first.
    """
    K0 = _Spatial(op.spatial)
    Pinv = _mean_field_inverse_cores(op.cores)
    W = [Pi.T @ Pi for Pi in Pinv]
    xs = u.cores
    d = u.d
    # <P^-1 K u, P^-1 K u>
    E = np.ones((1, 1, 1, 1))
    for k in range(d - 1, 0, -1):
        A, x = op.cores[k - 1], xs[k]
        E = _gram_env(x, A, W[k - 1], E)
    x0 = xs[0][0]                                                   # (N, r1)
    V = np.stack([K0.mean_solve(K @ x0) for K in op.spatial], axis=1)   # (N, R, r1)
    uu = _spatial_gram(V, E)
    # <P^-1 K u, P^-1 f> = <u, K P^-2 f> with P^-2 f as a TT of the same ranks
    g = [K0.mean_solve(K0.mean_solve(f.cores[0][0]))[None]]
    for k in range(1, d):
        Pi = Pinv[k - 1]
        g.append(np.einsum("ij,ajb->aib", Pi @ Pi, f.cores[k]))
    F3 = np.ones((1, 1, 1))
    for k in range(d - 1, 0, -1):
        F3 = _cross_env(xs[k], op.cores[k - 1], g[k], F3)
    Kg = np.stack([K @ g[0][0] for K in op.spatial], axis=1)         # (N, R, rg)
    uf = _spatial_cross(x0, Kg, F3)
    # <P^-1 f, P^-1 f>
    h = [K0.mean_solve(f.cores[0][0])[None]] + [
        np.einsum("ij,ajb->aib", Pinv[k - 1], f.cores[k]) for k in range(1, d)]
    ht = TTTensor(h, check=False)
    ff = float(np.atleast_2d(tt_dot(ht, ht)).trace())
    val = max(uu - 2.0 * uf + ff, 0.0)
    return float(np.sqrt(val / ff)) if ff > 0 else float(np.sqrt(val))


def plain_residual(op, u, f):
    """||K u - f|| / ||f||, exact, by the same structured contraction."""
    xs = u.cores
    d = u.d
    E = np.ones((1, 1, 1, 1))
    for k in range(d - 1, 0, -1):
        A, x = op.cores[k - 1], xs[k]
        E = _gram_env(x, A, None, E)
    x0 = xs[0][0]
    V = np.stack([K @ x0 for K in op.spatial], axis=1)
    uu = _spatial_gram(V, E)
    F3 = np.ones((1, 1, 1))
    for k in range(d - 1, 0, -1):
        F3 = _cross_env(xs[k], op.cores[k - 1], f.cores[k], F3)
    Kf = np.stack([K @ f.cores[0][0] for K in op.spatial], axis=1)
    uf = _spatial_cross(x0, Kf, F3)
    ff = float(np.atleast_2d(tt_dot(f, f)).trace())
    res = float(np.sqrt(max(uu - 2.0 * uf + ff, 0.0) / ff))
    if res < 1e-6:
        # the Gram expansion cancels near sqrt(eps); orthogonalize the residual TT instead
        return _residual_norm_tt(op, u, f) / np.sqrt(ff)
    return res


def _residual_norm_tt(op, u, f):
    """||K u - f|| via an explicit TT of the residual, right-orthogonalized."""
    x0 = u.cores[0][0]
    first = np.concatenate([K @ x0 for K in op.spatial], axis=1)[None]
    cores = [first]
    for A, x in zip(op.cores, u.cores[1:]):
        c = np.einsum("sabt,pbq->spatq", A, x)
        s, p_, a, t, q = c.shape
        cores.append(c.reshape(s * p_, a, t * q))
    r = tt_add(TTTensor(cores, check=False), f, 1.0, -1.0)
    cores = tt_orthogonalize_right(r)
    return float(np.linalg.norm(cores[0]))


def initial_guess(op, f):
    """(K_0^{-1} f_0) (x) (Delta_0^{-1} f_m) core by core: the mean-field solve of f."""
    sp0 = _Spatial(op.spatial)
    cores = [sp0.mean_solve(f.cores[0][0])[None]]
    for k, c in enumerate(f.cores[1:]):
        Pi = np.linalg.inv(op.cores[k][0, :, :, 0])
        cores.append(np.einsum("ij,ajb->aib", Pi, c))
    return TTTensor(cores, check=False)


def als_solve(op, f, opts=None, x0=None, log=None):
    """Solve op u = f in TT format; returns a SolverResult."""
    if opts is None:
        opts = SolverOptions()
    rng = np.random.default_rng(opts.seed)
    d = len(op.cores) + 1
    if f.d != d or f.mode_sizes != op.mode_sizes:
        raise InvalidInputError(f"rhs modes {f.mode_sizes} != operator modes {op.mode_sizes}")
    x = initial_guess(op, f) if x0 is None else x0
    if x.mode_sizes != op.mode_sizes:
        raise InvalidInputError("initial guess has wrong mode sizes")
    if opts.svd_tol is not None:
        svd_tol = opts.svd_tol
    else:
        # the plain residual carries the FEM conditioning; truncate finer
        svd_tol = opts.tol_rel / (2.0 * np.sqrt(d)) / (100.0 if opts.residual == "plain" else 1.0)
    rz = opts.enrichment_rank

    A = [_Spatial(op.spatial)] + list(op.cores)
    F = [np.asarray(c) for c in f.cores]
    X = [np.array(c) for c in x.cores]
    ns = op.mode_sizes
    if rz > 0:
        zr = [1] + [rz] * (d - 1) + [1]
        Z = [rng.standard_normal((zr[k], ns[k], zr[k + 1])) for k in range(d)]
    else:
        Z = None

    one3 = np.ones((1, 1, 1))
    one2 = np.ones((1, 1))
    XAX = [one3] + [None] * (d - 1) + [one3]
    XY = [one2] + [None] * (d - 1) + [one2]
    ZAX = [one3] + [None] * (d - 1) + [one3]
    ZY = [one2] + [None] * (d - 1) + [one2]

    def reverse_all():
        nonlocal A, F, X, Z, XAX, XY, ZAX, ZY
        A, F, X = _reverse(A), _reverse(F), _reverse(X)
        if Z is not None:
            Z = _reverse(Z)
        XAX, XY, ZAX, ZY = XAX[::-1], XY[::-1], ZAX[::-1], ZY[::-1]

    def orth_pass():
        # left-orthogonalize cores 0..d-2 of the working chain and build envs
        for k in range(d - 1):
            ra, n, rb = X[k].shape
            Q, R = orthonormalize(X[k].reshape(ra * n, rb))
            X[k] = Q.reshape(ra, n, -1)
            X[k + 1] = np.tensordot(R, X[k + 1], axes=(1, 0))
            XAX[k + 1] = _env_next(XAX[k], A[k], X[k], X[k])
            XY[k + 1] = _rhs_env_next(XY[k], F[k], X[k])
            if Z is not None:
                za, _, zb = Z[k].shape
                Qz, Rz = orthonormalize(Z[k].reshape(za * n, zb))
                Z[k] = Qz.reshape(za, n, -1)
                Z[k + 1] = np.tensordot(Rz, Z[k + 1], axes=(1, 0))
                ZAX[k + 1] = _env_next(ZAX[k], A[k], Z[k], X[k])
                ZY[k + 1] = _rhs_env_next(ZY[k], F[k], Z[k])

    # right-orthogonalize: orth pass on the reversed chain, then flip back
    reverse_all()
    orth_pass()
    reverse_all()
    reversed_now = False

    history = []
    best = None
    converged = False
    res = np.inf
    for sweep in range(1, opts.max_sweeps + 1):
        local_res = 0.0
        energy = 0.0
        for k in range(d):
            prob = _LocalProblem(XAX[k], A[k], XAX[k + 1])
            g = _rhs_local(XY[k], F[k], XY[k + 1])
            gnorm = np.linalg.norm(g)
            r_old = np.linalg.norm(g - prob.matvec(X[k]))
            local_res = max(local_res, r_old / gnorm if gnorm > 0 else 0.0)
            xk = _local_solve(prob, g, X[k], opts)
            energy = 0.5 * float(np.vdot(xk, prob.matvec(xk))) - float(np.vdot(xk, g))
            if k == d - 1:
                X[k] = xk
                break
            ra, n, rb = xk.shape
            U, S, V, r = truncated_svd(xk.reshape(ra * n, rb), svd_tol, opts.rank_max)
            carry = S[:, None] * V.T                                   # (r, rb)
            if Z is not None:
                xt = (U @ carry).reshape(ra, n, rb)
                zres = (_rhs_local(ZY[k], F[k], ZY[k + 1])
                        - _apply(ZAX[k], A[k], ZAX[k + 1], xt))
                za = zres.shape[0]
                Uz, _, _, _ = truncated_svd(zres.reshape(za * n, -1), 0.0, rz)
                if Uz.shape[1] < rz:
                    Uz = np.hstack([Uz, rng.standard_normal((za * n, rz - Uz.shape[1]))])
                Qz, _ = orthonormalize(Uz)
                Z[k] = Qz.reshape(za, n, -1)
                # next z core must match the new rank
                zb_old = Z[k + 1].shape[0]
                if Z[k].shape[2] != zb_old:
                    Z[k + 1] = rng.standard_normal((Z[k].shape[2],) + Z[k + 1].shape[1:])
                crs = (_rhs_local(XY[k], F[k], ZY[k + 1])
                       - _apply(XAX[k], A[k], ZAX[k + 1], xt))
                W = np.hstack([U, crs.reshape(ra * n, -1)])
                Q, R2 = orthonormalize(W)
                carry = R2[:, :r] @ carry
                U = Q
            X[k] = U.reshape(ra, n, -1)
            X[k + 1] = np.tensordot(carry, X[k + 1], axes=(1, 0))
            XAX[k + 1] = _env_next(XAX[k], A[k], X[k], X[k])
            XY[k + 1] = _rhs_env_next(XY[k], F[k], X[k])
            if Z is not None:
                ZAX[k + 1] = _env_next(ZAX[k], A[k], Z[k], X[k])
                ZY[k + 1] = _rhs_env_next(ZY[k], F[k], Z[k])

        u = TTTensor(_reverse(X) if reversed_now else X, check=False)
        res_p = preconditioned_residual(op, u, f)
        res_k = plain_residual(op, u, f)
        res = res_k if opts.residual == "plain" else res_p
        rec = {"sweep": sweep, "residual": res, "max_rank": u.max_rank, "energy": energy,
               "local_residual": local_res, "plain": res_k, "preconditioned": res_p}
        history.append(rec)
        if log is not None:
            log(f"sweep={sweep} residual={res_k:.3e} preconditioned={res_p:.3e} "
                f"max_rank={u.max_rank} energy={energy:.12e} local_residual={local_res:.3e}")
        if best is None or res < best[1]:
            best = (u, res)
        if res <= opts.tol_rel:
            converged = True
            break
        # stagnation: the last 3 sweeps improved the best residual by < 1%
        if len(history) > 3:
            recent = min(h["residual"] for h in history[-3:])
            before = min(h["residual"] for h in history[:-3])
            if recent > 0.99 * before:
                break
        reverse_all()
        reversed_now = not reversed_now
    u = best[0] if not converged else u
    res = best[1] if not converged else res
    return SolverResult(u=u, converged=converged, residual=res,
                        sweeps=len(history), history=history)
