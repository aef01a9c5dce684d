import itertools
from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import hermite_e as He

from ttpce.fem import assemble_load, deterministic_solve
from ttpce.galerkin import assemble_operator_tt, assemble_rhs_tt, spatial_matrices, stochastic_cores
from ttpce.postproc import (argmax_mean, covariance, eval_surrogate, exceedance_probability,
                            mean_field)
from ttpce.solver import SolverOptions, als_solve
from ttpce.tt import TTTensor, tt_random


def e0_core(n):
    c = np.zeros((1, n, 1))
    c[0, 0, 0] = 1.0
    return c


def test_mean_of_rhs():
    f0 = np.arange(1.0, 8.0)
    f = assemble_rhs_tt(f0, 3, 2)
    assert np.array_equal(mean_field(f), f0)


def test_mean_deterministic(small_mesh):
    M, p = 2, 2
    K0 = spatial_matrices(small_mesh, 3.0 * np.ones((small_mesh.n_nodes, 1)))
    mass = stochastic_cores(TTTensor([e0_core(2 * p + 1)]), p)[0]
    op = assemble_operator_tt(K0, [mass] * M)
    f = assemble_rhs_tt(assemble_load(small_mesh, 1.0), M, p)
    u = als_solve(op, f, SolverOptions(tol_rel=1e-10)).u
    ref = deterministic_solve(small_mesh, 3.0 * np.ones(small_mesh.n_nodes))
    assert np.allclose(mean_field(u), ref[small_mesh.interior], rtol=1e-9, atol=1e-14)
    assert np.allclose(covariance(u).var, 0, atol=1e-18)


def test_variance_zero_for_mean_only(rng):
    u = TTTensor([rng.standard_normal((1, 6, 1))] + [e0_core(4)] * 3)
    cv = covariance(u)
    assert np.all(cv.C == 0) and np.all(cv.var == 0)


def test_variance_hand_case(rng):
    s = rng.standard_normal(5)
    c = np.array([0.7, -1.3, 0.4])
    u = TTTensor([s[None, :, None], c[None, :, None]])
    var = s**2 * sum(factorial(a) * c[a] ** 2 for a in (1, 2))
    assert np.allclose(covariance(u).var, var, rtol=1e-13)


def surrogate_by_enumeration(u, theta):
    """sum_alpha u_alpha(x) prod_m He_{alpha_m}(theta_m), all alpha enumerated."""
    F = u.full()
    sizes = u.mode_sizes[1:]
    out = np.zeros(F.shape[0])
    for a in itertools.product(*[range(n) for n in sizes]):
        h = np.prod([He.hermeval(t, np.eye(n)[k]) for t, n, k in zip(theta, sizes, a)])
        out += F[(slice(None),) + a] * h
    return out


def test_covariance_by_enumeration(rng):
    u = tt_random((6, 3, 4, 2), [2, 3, 2], rng)
    F = u.full()
    w = np.array([[factorial(a) * factorial(b) * factorial(c) for c in range(2)]
                  for a in range(3) for b in range(4)]).reshape(3, 4, 2).astype(float)
    w[0, 0, 0] = 0.0
    C = np.einsum("xabc,yabc,abc->xy", F, F, w)
    cv = covariance(u)
    assert np.allclose(cv.cov(), C, rtol=1e-12, atol=1e-14)
    assert np.allclose(np.diag(cv.cov()), cv.var)
    assert np.allclose(cv.cov(2, 4), C[2, 4])


@given(st.integers(0, 10**6))
def test_variance_nonnegative(seed):
    u = tt_random((5, 3, 3, 3), [3, 2, 2], seed)
    cv = covariance(u)
    assert cv.var.min() >= 0
    assert np.allclose(np.diag(cv.cov()), cv.var, rtol=1e-10, atol=1e-12)


def test_eval_surrogate_enumeration(rng):
    u = tt_random((4, 3, 2, 4), [2, 2, 3], rng)
    th = rng.standard_normal((5, 3))
    vals = eval_surrogate(u, th)
    for t, v in zip(th, vals):
        assert np.allclose(v, surrogate_by_enumeration(u, t), rtol=1e-12, atol=1e-12)
    assert np.allclose(eval_surrogate(u, th[0], x=2), vals[0, 2])


def test_eval_at_zero_mean_only(rng):
    u = TTTensor([rng.standard_normal((1, 6, 1))] + [e0_core(3)] * 4)
    assert np.allclose(eval_surrogate(u, np.zeros(4)), mean_field(u))


def test_eval_at_zero_no_shortcut(rng):
    # He_2(0) = -1 contributes at theta = 0
    c = np.array([1.0, 0.0, 2.0])
    u = TTTensor([np.ones((1, 2, 1)), c[None, :, None]])
    assert np.allclose(eval_surrogate(u, [0.0]), 1.0 - 2.0)


def test_linear_recovery(rng):
    a0, a = 0.3, rng.standard_normal(3)
    # u = a0 + sum a_m theta_m as a rank-2 TT with p = 1
    cores = [np.array([[[1.0, a0]]])]
    for m in range(3):
        c = np.zeros((2, 2, 2))
        c[0, 0, 0] = 1.0
        c[1, 0, 1] = 1.0
        c[0, 1, 1] = a[m]
        cores.append(c)
    cores[-1] = cores[-1][:, :, 1:]
    u = TTTensor(cores)
    th = rng.standard_normal((10, 3))
    assert np.allclose(eval_surrogate(u, th)[:, 0], a0 + th @ a, rtol=1e-13)


def grid_probability(u, tau, n_quad):
    """Dense enumeration of the weighted indicator over the full quadrature grid."""
    z, w = He.hermegauss(n_quad)
    w = w / w.sum()
    xm = argmax_mean(u)
    thr = tau * mean_field(u)[xm]
    P = 0.0
    for idx in itertools.product(range(n_quad), repeat=u.d - 1):
        th = z[list(idx)]
        if eval_surrogate(u, th, x=xm) > thr:
            P += np.prod(w[list(idx)])
    return P


def toy_surrogate(rng):
    c0 = np.abs(rng.standard_normal((1, 5, 2))) + 1.0
    return TTTensor([c0, rng.standard_normal((2, 4, 2)) * 0.4, rng.standard_normal((2, 4, 1)) * 0.4])


def test_probability_dense_grid(rng):
    u = toy_surrogate(rng)
    for tau in (1.05, 1.2, 1.5):
        ref = grid_probability(u, tau, 5)
        res = exceedance_probability(u, tau, n_quad=5, tol_rel=1e-12)
        assert abs(res.probability - ref) <= 1e-12


def test_probability_zero_for_large_tau(rng):
    res = exceedance_probability(toy_surrogate(rng), 1e6, n_quad=5)
    assert res.probability == 0.0


def test_probability_monotone(rng):
    u = toy_surrogate(rng)
    P = [exceedance_probability(u, t, n_quad=6, tol_rel=1e-12).probability
         for t in (1.01, 1.1, 1.3, 2.0)]
    assert all(a >= b for a, b in zip(P, P[1:]))
    assert all(0 <= x <= 1 for x in P)


def test_argmax_ties_lowest():
    u = TTTensor([np.array([1.0, 3.0, 3.0, 2.0])[None, :, None], e0_core(2)])
    assert argmax_mean(u) == 1
