"""Gaussian-field KLE, covariance transform and the PCE of kappa = phi(gamma).

The coefficient is kappa(x, omega) = phi(gamma(x, omega)) with gamma a
centred unit-variance Gaussian field.  gamma is expanded as
sum_m g_m(x) theta_m with g_m scaled by the square roots of the KLE
eigenvalues, and the PCE coefficient of H_alpha(theta) is

    kappa_alpha(x) = c_|alpha| * prod_m g_m(x)^alpha_m / alpha_m!,
    c_s = s! phi_s.

The stochastic part of kappa is projected onto the leading L eigenvectors
v_l of the kappa covariance (W-orthonormal, W = lumped weights), giving the
L tensors kappa_l(alpha) = <kappa_alpha, v_l>_W that block cross compresses.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .cross import BlockEvaluator, block_cross
from .errors import DomainError, InvalidInputError
from .hermite import TransformCoefficients, transform_coeffs
from .linalg import sym_eig
from .tt import TTTensor


def gaussian_correlation(nodes, lc):
    """exp(-|x-y|^2 / (2 lc^2)) on all node pairs."""
    if lc <= 0:
        raise InvalidInputError("correlation length must be positive")
    d2 = squareform(pdist(nodes, "sqeuclidean"))
    return np.exp(-d2 / (2.0 * lc * lc))


def _cov_series(coeffs):
    """Coefficients a_i = phi_hat_i^2 (i >= 1) of F(c) = sum a_i c^i, trailing zeros cut."""
    a = np.asarray(coeffs.phi_hat, dtype=float) ** 2
    a[0] = 0.0
    if a.sum() == 0:
        raise DomainError("transform has no stochastic part")
    keep = np.nonzero(a > 1e-32 * a.sum())[0]
    return a[: keep[-1] + 1]


def _horner(a, c):
    f = np.zeros_like(c)
    df = np.zeros_like(c)
    for ai in a[::-1]:
        df = df * c + f
        f = f * c + ai
    return f, df


def gamma_cov_from_kappa_cov(c_kappa, coeffs, tol=1e-13, max_iter=100):
    """Solve F(c_gamma) = c_kappa F(1), F(c) = sum_{i>=1} i! phi_i^2 c^i.

    Vectorized safeguarded Newton with bisection on the bracket [0,1]
    (or [-1,0] for negative targets).
    """
    if not isinstance(coeffs, TransformCoefficients):
        coeffs = TransformCoefficients(np.asarray(coeffs, float),
                                       np.asarray(coeffs, float) * _sqrt_fact(len(coeffs)))
    a = _cov_series(coeffs)
    c_kappa = np.asarray(c_kappa, dtype=float)
    scalar = c_kappa.ndim == 0
    ck = np.atleast_1d(c_kappa).astype(float)
    F1 = a.sum()
    Fm1 = _horner(a, np.array([-1.0]))[0][0]
    target = ck * F1
    bad = (ck > 1 + 1e-12) | (target < min(Fm1, 0.0) - 1e-12 * F1) | ~np.isfinite(ck)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"kappa covariance {ck[i]!r} not attainable (entry {i})")
    pos = target >= 0
    lo = np.where(pos, 0.0, -1.0)
    hi = np.where(pos, 1.0, 0.0)
    c = np.clip(ck, -1.0, 1.0)
    for _ in range(max_iter):
        f, df = _horner(a, c)
        r = f - target
        # F(lo) <= target <= F(hi) holds at both bracket ends
        lo = np.where(r < 0, c, lo)
        hi = np.where(r > 0, c, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            cn = c - r / df
        out = ~np.isfinite(cn) | (cn < lo) | (cn > hi)
        cn = np.where(out, 0.5 * (lo + hi), cn)
        step = np.abs(cn - c)
        c = cn
        if np.all(step <= tol):
            break
    c = np.where(ck >= 1.0, 1.0, c)
    return float(c[0]) if scalar else c.reshape(c_kappa.shape)


def _sqrt_fact(n):
    from math import lgamma
    return np.exp(0.5 * np.array([lgamma(i + 1) for i in range(n)]))


@dataclass(frozen=True)
class KLEResult:
    eigenvalues: np.ndarray     # (M,) descending, clipped at 0
    vectors: np.ndarray         # (M, N) W-orthonormal eigenvectors
    scaled: np.ndarray          # (M, N) vectors * sqrt(eigenvalues)


def discrete_kle(C, weights, M):
    """Leading M eigenpairs of the integral operator with kernel C under lumped quadrature.

    Solves W^{1/2} C W^{1/2} u = lam u and returns v = W^{-1/2} u, which are
    orthonormal in the weighted inner product, plus sqrt(lam) v.
    """
    C = np.asarray(C, dtype=float)
    w = np.asarray(weights, dtype=float)
    N = C.shape[0]
    if C.shape != (N, N) or w.shape != (N,):
        raise InvalidInputError("covariance and weights sizes disagree")
    if M < 1 or M > N:
        raise InvalidInputError(f"M={M} outside 1..{N}")
    if np.any(w <= 0):
        raise InvalidInputError("weights must be positive")
    s = np.sqrt(w)
    lam, U = sym_eig(s[:, None] * C * s[None, :], subset=M)
    lam = np.maximum(lam, 0.0)
    V = (U / s[:, None]).T
    return KLEResult(lam, V, V * np.sqrt(lam)[:, None])


@dataclass
class PCEProblem:
    """Everything needed to evaluate the PCE tensors of kappa.

    n_modes is the per-variable mode size (p+1 for the coefficient itself,
    2p+1 when the tensor feeds the Galerkin operator).
    """
    nodes: np.ndarray
    weights: np.ndarray
    M: int
    p: int
    n_modes: int
    phi: object
    coeffs: TransformCoefficients
    g: np.ndarray               # (M, N)
    v: np.ndarray               # (L, N)
    kappa_mean: np.ndarray      # (N,)
    gamma_eigenvalues: np.ndarray
    kappa_eigenvalues: np.ndarray
    centered: bool = True

    @property
    def L(self):
        return self.v.shape[0]

    @property
    def N(self):
        return len(self.weights)


def build_pce_problem(nodes, weights, M, p, lc, phi, L=None, n_modes=None, centered=True):
    """Assemble the KLE bases and Hermite coefficients of phi.

    The gamma covariance is recovered from the Gaussian kappa correlation by
    the inverse covariance transform.  L defaults to M and n_modes to 2p+1.
    """
    if L is None:
        L = M
    if n_modes is None:
        n_modes = 2 * p + 1
    Q = M * (n_modes - 1) + 1
    coeffs = transform_coeffs(phi, Q, max(64, Q + 1))
    Ck = gaussian_correlation(nodes, lc)
    # distances repeat on structured meshes; transform unique values only
    if np.any(coeffs.phi_hat[1:] != 0):
        uk, inv = np.unique(Ck, return_inverse=True)
        Cg = gamma_cov_from_kappa_cov(uk, coeffs)[inv].reshape(Ck.shape)
    else:
        # deterministic kappa: the gamma field never enters, keep its correlation
        Cg = Ck
    kg = discrete_kle(Cg, weights, M)
    kk = discrete_kle(Ck, weights, L)
    kbar = np.full(len(weights), coeffs.phi[0])
    return PCEProblem(nodes=np.asarray(nodes), weights=np.asarray(weights), M=M, p=p,
                      n_modes=n_modes, phi=phi, coeffs=coeffs, g=kg.scaled, v=kk.vectors,
                      kappa_mean=kbar, gamma_eigenvalues=kg.eigenvalues,
                      kappa_eigenvalues=kk.eigenvalues, centered=centered)


class PCEEvaluator(BlockEvaluator):
    """kappa_l(alpha) = c_|alpha| sum_x w(x) v_l(x) prod_m g_m(x)^alpha_m / alpha_m!.

    With centered=True the alpha = 0 term is dropped, since the mean is carried
    separately.  Cross blocks are evaluated through prefix products of the
    node-wise monomials, so a block of size rl*n*rr costs one matrix product.
    """

    def __init__(self, problem, n_modes=None):
        n = problem.n_modes if n_modes is None else n_modes
        super().__init__([n] * problem.M, problem.L)
        Qmax = problem.M * (n - 1)
        if problem.coeffs.Q < Qmax:
            raise InvalidInputError(f"transform table has Q={problem.coeffs.Q} < {Qmax}")
        a = np.arange(n)
        fact = np.cumprod(np.concatenate([[1.0], np.arange(1, n, dtype=float)]))
        self.G = problem.g[:, None, :] ** a[None, :, None] / fact[None, :, None]  # (M, n, N)
        self.V = (problem.v * problem.weights[None, :])                            # (L, N)
        c = problem.coeffs.multinomial_weights()[: Qmax + 1].copy()
        if problem.centered:
            c[0] = 0.0
        self.c = c

    def _prod(self, sets, modes):
        P = np.ones((len(sets), self.G.shape[2]))
        for j, m in enumerate(modes):
            P *= self.G[m, sets[:, j], :]
        return P

    def _values(self, idx):
        P = self._prod(idx, range(self.d))
        return (P @ self.V.T) * self.c[idx.sum(1)][:, None]

    def evaluate_block(self, left, start, stop, right):
        from .cross import _as_sets
        left, right = _as_sets(left, start), _as_sets(right, self.d - stop)
        Nx = self.G.shape[2]
        A = self._prod(left, range(start))
        deg = left.sum(1)
        for m in range(start, stop):
            A = (A[:, None, :] * self.G[m][None]).reshape(-1, Nx)
            deg = (deg[:, None] + np.arange(self.mode_sizes[m])[None]).ravel()
        B = self._prod(right, range(stop, self.d))
        rdeg = right.sum(1)
        BV = (B[:, None, :] * self.V[None]).reshape(-1, Nx)
        T = (A @ BV.T).reshape(len(deg), len(rdeg), self.L)
        T *= self.c[deg[:, None] + rdeg[None, :]][:, :, None]
        self._count_block(left, start, stop, right)
        mids = tuple(self.mode_sizes[start:stop])
        out = T.reshape((len(left),) + mids + (len(right), self.L))
        return self._check(out, lambda b: b)


def kappa_coefficients_full(problem, n_modes=None):
    """Dense reference kappa_l(alpha) over the whole index box, shape (L, n, ..., n)."""
    ev = PCEEvaluator(problem, n_modes)
    n = ev.mode_sizes[0]
    idx = np.indices([n] * problem.M).reshape(problem.M, -1).T
    return ev._values(idx).T.reshape((problem.L,) + (n,) * problem.M)


def with_mean_channel(coeff_tt):
    """Prepend an e_0 channel: border L -> L+1, interior ranks +1.

    Channel 0 is the unit vector at alpha = 0 (it carries the mean).
    """
    cores = []
    d = coeff_tt.d
    for k, c in enumerate(coeff_tt.cores):
        r0, n, r1 = c.shape
        last = k == d - 1
        out = np.zeros((r0 + 1, n, r1 + (0 if last else 1)))
        out[0, 0, 0] = 1.0
        out[1:, :, (0 if last else 1):] = c
        cores.append(out)
    return TTTensor(cores, check=False)


@dataclass
class KappaTT:
    """Cross results for kappa.

    coeff: TT with left border L (tensors kappa_l(alpha));
    stochastic: same with the mean channel prepended (border L+1);
    spatial: (N, L+1) matrix [kappa_bar, v_1, ..., v_L];
    full: TT with the spatial core in front, kappa(x, alpha).
    """
    coeff: TTTensor
    stochastic: TTTensor
    spatial: np.ndarray
    full: TTTensor
    info: object = None


def build_kappa_tt(problem, tol_rel=1e-4, rank_max=200, seed=0, log=None, **kw):
    """Block cross on the PCE evaluator plus assembly of the full kappa TT."""
    ev = PCEEvaluator(problem)
    coeff, info = block_cross(ev, tol_rel, rank_max=rank_max, seed=seed, log=log, **kw)
    stoch = with_mean_channel(coeff)
    spatial = np.column_stack([problem.kappa_mean, problem.v.T])
    full = TTTensor([spatial[None]] + list(stoch.cores), check=False)
    return KappaTT(coeff, stoch, spatial, full, info)
