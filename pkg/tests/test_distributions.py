import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from ttpce.distributions import (beta52_cdf, beta52_inv, beta_phi, lognormal_phi, make_phi,
                                 std_normal_cdf)
from ttpce.errors import InvalidInputError


def test_lognormal_values():
    phi = lognormal_phi(0.5)
    assert phi(0.0) == pytest.approx(np.e + 10)
    assert phi(2.0) == pytest.approx(np.exp(1.5) + 10)
    assert np.all(phi(np.linspace(-40, 40, 101)) > 10)


def test_lognormal_rejects_sigma():
    with pytest.raises(InvalidInputError):
        lognormal_phi(0.0)


def test_beta_cdf_symbolic():
    t = sympy.symbols("t")
    B = sympy.integrate(30 * t**4 * (1 - t), (t, 0, t))
    assert sympy.simplify(B - (6 * t**5 - 5 * t**6)) == 0
    ts = np.linspace(0, 1, 13)
    assert np.allclose(beta52_cdf(ts), [float(B.subs(t, v)) for v in ts], atol=1e-15)
    assert beta52_cdf(0.0) == 0 and beta52_cdf(1.0) == 1


def test_beta_median_bisection():
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 6 * mid**5 - 5 * mid**6 < 0.5 else (lo, mid)
    assert beta_phi()(0.0) == pytest.approx(lo + 1, abs=1e-12)


def test_beta_tails():
    phi = beta_phi()
    assert phi(-40.0) == pytest.approx(1.0) and phi(40.0) == pytest.approx(2.0)


@given(st.floats(1e-6, 1 - 1e-6))
def test_beta_roundtrip(y):
    assert abs(beta52_cdf(beta52_inv(y)) - y) <= 1e-12


def test_normal_cdf_oracle():
    zs = np.linspace(-6, 6, 20)
    ref = [float(mpmath.ncdf(mpmath.mpf(z))) for z in zs]
    assert np.abs(std_normal_cdf(zs) - ref).max() <= 1e-12


@given(st.sampled_from(["lognormal", "beta"]))
def test_transforms_increasing(name):
    z = np.linspace(-6, 6, 401)
    assert np.all(np.diff(make_phi(name, 0.5)(z)) > 0)


def test_unknown_distribution():
    with pytest.raises(InvalidInputError):
        make_phi("gamma")
