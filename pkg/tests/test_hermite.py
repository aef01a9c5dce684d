import itertools

import mpmath
from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import hermite_e as He

from ttpce.hermite import (delta_tensor, gauss_hermite_rule, hermite_eval, hermite_table,
                           hermite_table_normalized, transform_coeffs, triple_delta)

# independent oracle: numpy's HermiteE module, weights normalized to the standard normal
_z20, _w20 = He.hermegauss(20)
_w20 = _w20 / _w20.sum()

mpmath.mp.dps = 40


def _he_mp(i, z):
    h0, h1 = mpmath.mpf(1), z
    if i == 0:
        return h0
    for k in range(1, i):
        h0, h1 = h1, z * h1 - k * h0
    return h1


def _rule_mp(n):
    """n-point rule in extended precision: Newton-polished roots, w = n!/(n He_{n-1})^2 / sqrt(2pi)."""
    nodes = []
    for x0 in He.hermegauss(n)[0]:
        x = mpmath.mpf(x0)
        for _ in range(8):
            x -= _he_mp(n, x) / (n * _he_mp(n - 1, x))
        nodes.append(x)
    w = [mpmath.factorial(n) / (n * _he_mp(n - 1, x)) ** 2 for x in nodes]
    tot = sum(w)
    return nodes, [v / tot for v in w]


_Z20, _W20 = _rule_mp(20)
_H20 = [[_he_mp(i, z) for z in _Z20] for i in range(11)]


def quad_triple(a, b, c):
    return float(sum(w * ha * hb * hc for w, ha, hb, hc in zip(_W20, _H20[a], _H20[b], _H20[c])))


def he(i, z):
    return He.hermeval(z, np.eye(i + 1)[i])


def test_h0_h2():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(2, 1.5) == pytest.approx(1.25)


def test_table_matches_oracle():
    z = np.linspace(-4, 4, 17)
    T = hermite_table(9, z)
    for i in range(10):
        assert np.allclose(T[:, i], he(i, z), rtol=1e-12, atol=1e-10)
    N = hermite_table_normalized(9, z)
    assert np.allclose(N * np.sqrt([factorial(i) for i in range(10)]), T, rtol=1e-12, atol=1e-10)


def test_orthogonality():
    for i in range(9):
        for j in range(9):
            val = np.sum(_w20 * he(i, _z20) * he(j, _z20))
            assert abs(val - (factorial(i) if i == j else 0)) <= 1e-10 * max(1, factorial(i))


def test_rule_small():
    r1 = gauss_hermite_rule(1)
    assert np.allclose(r1.nodes, [0]) and np.allclose(r1.weights, [1])
    r2 = gauss_hermite_rule(2)
    assert np.allclose(sorted(r2.nodes), [-1, 1]) and np.allclose(r2.weights, [0.5, 0.5])


def test_rule_moments():
    r = gauss_hermite_rule(10)
    assert abs(np.sum(r.weights * r.nodes**4) - 3.0) <= 1e-12
    assert np.allclose(np.sort(r.nodes), np.sort(He.hermegauss(10)[0]))


def test_triple_examples():
    assert triple_delta(0, 0, 0) == 1
    assert triple_delta(1, 2, 0) == 0
    assert triple_delta(1, 1, 2) == 2
    assert triple_delta(1, 1, 3) == 0


@given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10))
def test_triple_vs_quadrature(a, b, c):
    ref = quad_triple(a, b, c)
    assert abs(triple_delta(a, b, c) - ref) <= 1e-10 * max(1.0, abs(ref))


@given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 12))
def test_triple_symmetry_parity(a, b, c):
    v = triple_delta(a, b, c)
    assert all(triple_delta(*q) == v for q in itertools.permutations((a, b, c)))
    if (a + b + c) % 2 or c > a + b:
        assert v == 0


@given(st.integers(0, 15), st.integers(0, 15))
def test_triple_mass(a, b):
    assert triple_delta(a, b, 0) == (factorial(a) if a == b else 0)


def test_delta_tensor():
    D = delta_tensor(3, 6)
    assert D.shape == (4, 4, 7)
    for a, b, c in itertools.product(range(4), range(4), range(7)):
        assert D[a, b, c] == triple_delta(a, b, c)


def test_transform_identity():
    c = transform_coeffs(lambda z: z, 6)
    assert abs(c.phi[1] - 1) <= 1e-12
    assert np.abs(np.delete(c.phi, 1)).max() <= 1e-12


def test_transform_exp():
    c = transform_coeffs(np.exp, 10)
    ref = np.exp(0.5) / np.array([factorial(i) for i in range(11)])
    assert np.allclose(c.phi, ref, rtol=1e-10, atol=1e-14)


def test_transform_lognormal():
    s = 0.5
    c = transform_coeffs(lambda z: np.exp(1 + s * z / 2) + 10, 8)
    base = np.exp(1 + s**2 / 8)
    ref = base * (s / 2) ** np.arange(9) / np.array([factorial(i) for i in range(9)])
    ref[0] += 10
    assert np.allclose(c.phi, ref, rtol=1e-10, atol=1e-15)


def test_transform_reconstruction():
    phi = lambda z: np.exp(0.3 * z) + np.sin(z)
    c = transform_coeffs(phi, 20)
    z = np.linspace(-2, 2, 11)
    assert np.abs(c(z) - phi(z)).max() <= 1e-6
    assert np.allclose(c.multinomial_weights(), c.phi * [factorial(i) for i in range(21)])
