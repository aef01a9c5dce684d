"""Statistics of a TT solution u(x, alpha) = sum_alpha u_alpha(x) H_alpha(theta).

The first core is spatial (1, N, r_1); the remaining cores carry the Hermite
orders alpha_m.  H_alpha are the unnormalized products of h_{alpha_m}, so
E[H_alpha H_beta] = alpha! delta.
"""

from dataclasses import dataclass

import numpy as np

from .cross import BlockEvaluator, _as_sets, block_cross
from .hermite import gauss_hermite_rule, hermite_table
from .tt import TTTensor, tt_contract_weights, tt_dot


def _stochastic(u):
    return TTTensor(u.cores[1:], check=False)


def _spatial(u):
    return u.cores[0][0]                                          # (N, r1)


def _chain_at_zero(cores):
    v = np.ones((1,))
    for c in reversed(cores):
        v = c[:, 0, :] @ v
    return v


def mean_field(u):
    """u(x, alpha = 0): the mean, one value per spatial index."""
    return _spatial(u) @ _chain_at_zero(u.cores[1:])


@dataclass
class Covariance:
    """cov(x, y) = U0(x) C U0(y)^T with U0 the spatial core."""
    C: np.ndarray
    U0: np.ndarray
    var: np.ndarray

    def cov(self, i=None, j=None):
        A = self.U0 if i is None else self.U0[np.atleast_1d(i)]
        B = self.U0 if j is None else self.U0[np.atleast_1d(j)]
        return A @ self.C @ B.T


def covariance(u):
    """Covariance via the Hermite mass matrix: scale cores by sqrt(alpha!)."""
    from math import lgamma
    cores = []
    for c in u.cores[1:]:
        n = c.shape[1]
        s = np.exp(0.5 * np.array([lgamma(a + 1) for a in range(n)]))
        cores.append(c * s[None, :, None])
    w = TTTensor(cores, check=False)
    G = np.atleast_2d(tt_dot(w, w))
    w0 = _chain_at_zero(u.cores[1:])
    C = G - np.outer(w0, w0)
    C = 0.5 * (C + C.T)
    U0 = _spatial(u)
    var = np.einsum("ia,ab,ib->i", U0, C, U0)
    if var.min() < -1e-12 * max(var.max(), 1.0):
        raise ArithmeticError(f"negative variance {var.min():.3e}")
    return Covariance(C, U0, np.maximum(var, 0.0))


def stochastic_values(cores, theta):
    """Contract stochastic cores with Hermite vectors: theta (S, M) -> (S, r_1)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    S = theta.shape[0]
    v = np.ones((S, 1))
    for m in range(len(cores) - 1, -1, -1):
        c = cores[m]
        H = hermite_table(c.shape[1] - 1, theta[:, m])          # (S, n)
        t = np.tensordot(c, v, axes=(2, 1))                     # (a, n, S)
        v = np.einsum("ans,sn->sa", t, H)
    return v


def eval_surrogate(u, theta, x=None, modes=None):
    """Values u(x, theta) for samples theta (S, M) or a single theta (M,).

    x selects spatial indices (default all).  modes limits each stochastic
    core to its first `modes` orders (e.g. p+1 for a kappa TT built with
    2p+1 orders).
    """
    single = np.ndim(theta) == 1
    cores = u.cores[1:]
    if modes is not None:
        cores = [c[:, :modes, :] for c in cores]
    v = stochastic_values(cores, theta)
    U0 = _spatial(u) if x is None else _spatial(u)[np.atleast_1d(x)]
    out = v @ U0.T
    if single:
        out = out[0]
    if x is not None and np.ndim(x) == 0:
        out = out[..., 0]
    return out


def argmax_mean(u):
    """Index of the largest mean value (lowest index on ties)."""
    return int(np.argmax(mean_field(u)))


def point_grid_tt(u, x_index, nodes):
    """TT of u(x_index, theta) on a tensor grid of Gauss-Hermite nodes."""
    row = _spatial(u)[x_index]                                  # (r1,)
    cores = []
    for m, c in enumerate(u.cores[1:]):
        H = hermite_table(c.shape[1] - 1, nodes)                # (q, n)
        g = np.einsum("anb,qn->aqb", c, H)
        if m == 0:
            g = np.einsum("a,aqb->qb", row, g)[None]
        cores.append(g)
    return TTTensor(cores, check=False)


class WeightedIndicatorEvaluator(BlockEvaluator):
    """chi(u(q) > threshold) * prod_m w(q_m) on a quadrature grid.

    u is a TT on the grid; cross blocks are evaluated from prefix products
    of its cores, so each block costs O(r) per entry.
    """

    def __init__(self, grid_tt, weights, threshold):
        super().__init__(grid_tt.mode_sizes, 1)
        self.tt = grid_tt
        self.w = np.asarray(weights, dtype=float)
        self.threshold = float(threshold)

    def _left(self, sets):
        v = np.ones((len(sets), 1))
        wt = np.ones(len(sets))
        for j in range(sets.shape[1]):
            c = self.tt.cores[j]
            v = np.einsum("sa,asb->sb", v, c[:, sets[:, j], :])
            wt = wt * self.w[sets[:, j]]
        return v, wt

    def _right(self, sets, start):
        v = np.ones((len(sets), 1))
        wt = np.ones(len(sets))
        for j in range(sets.shape[1] - 1, -1, -1):
            c = self.tt.cores[start + j]
            v = np.einsum("asb,sb->sa", c[:, sets[:, j], :], v)
            wt = wt * self.w[sets[:, j]]
        return v, wt

    def _values(self, idx):
        v, wt = self._left(idx)
        return ((v[:, 0] > self.threshold) * wt)[:, None]

    def evaluate_block(self, left, start, stop, right):
        left, right = _as_sets(left, start), _as_sets(right, self.d - stop)
        Lv, Lw = self._left(left)
        A = Lv
        W = Lw
        for m in range(start, stop):
            c = self.tt.cores[m]
            A = np.einsum("sa,anb->snb", A, c).reshape(-1, c.shape[2])
            W = (W[:, None] * self.w[None, :]).ravel()
        Rv, Rw = self._right(right, stop)
        vals = A @ Rv.T                                          # (rl*n.., rr)
        out = (vals > self.threshold) * (W[:, None] * Rw[None, :])
        self._count_block(left, start, stop, right)
        shape = (len(left),) + tuple(self.mode_sizes[start:stop]) + (len(right), 1)
        return out.reshape(shape)


@dataclass
class ProbabilityResult:
    probability: float
    x_max: int
    u_max: float
    threshold: float
    rank: int
    converged: bool
    n_evals: int
    chi_tt: TTTensor = None


def exceedance_probability(u, tau, n_quad=None, tol_rel=1e-4, rank_max=600,
                           kickrank=8, n_it_max=10, seed=0, x_index=None, log=None):
    """P(u(x_max, theta) > tau * mean(x_max)) by cross on the weighted indicator.

    The indicator times the Gauss-Hermite weights is approximated on an
    n_quad^M grid (default n_quad = p + 3) and summed by contraction with
    all-ones vectors.
    """
    p = u.cores[1].shape[1] - 1
    if n_quad is None:
        n_quad = p + 3
    xm = argmax_mean(u) if x_index is None else int(x_index)
    ubar = float(mean_field(u)[xm])
    rule = gauss_hermite_rule(n_quad)
    grid = point_grid_tt(u, xm, rule.nodes)
    ev = WeightedIndicatorEvaluator(grid, rule.weights, tau * ubar)
    chi, info = block_cross(ev, tol_rel, rank_max=rank_max, kickrank=kickrank,
                            n_it_max=n_it_max, seed=seed, log=log)
    P = float(np.atleast_2d(tt_contract_weights(chi, [np.ones(n_quad)] * chi.d))[0, 0])
    return ProbabilityResult(min(max(P, 0.0), 1.0), xm, ubar, tau * ubar,
                             chi.max_rank, info.converged, info.n_evals, chi)


def grid_probability_mc(u, tau, n_quad, n_samples, seed=0, x_index=None):
    """Monte Carlo estimate of the same grid sum: sample grid points with
    probability prod w(q_m) and average the indicator.  Returns (P, stderr)."""
    xm = argmax_mean(u) if x_index is None else int(x_index)
    ubar = float(mean_field(u)[xm])
    rule = gauss_hermite_rule(n_quad)
    grid = point_grid_tt(u, xm, rule.nodes)
    rng = np.random.default_rng(seed)
    idx = rng.choice(n_quad, size=(n_samples, grid.d), p=rule.weights)
    from .tt import tt_entries
    vals = tt_entries(grid, idx)[:, 0, 0]
    hit = vals > tau * ubar
    P = hit.mean()
    return float(P), float(np.sqrt(P * (1 - P) / n_samples))
