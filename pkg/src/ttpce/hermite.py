"""Probabilists' Hermite polynomials, Gauss-Hermite rules, triple products.

All integrals are taken against the standard normal density
rho(z) = exp(-z^2/2) / sqrt(2 pi), so <h_i, h_j> = i! delta_ij.
"""

from dataclasses import dataclass
import math
from math import lgamma

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import EvaluationError, InvalidInputError

MAX_ORDER = 170
_FACT = np.cumprod(np.concatenate([[1.0], np.arange(1, MAX_ORDER + 1, dtype=float)]))


def factorial(n):
    """Floating-point n! from a table (n <= 170)."""
    return _FACT[np.asarray(n, dtype=int)]


def hermite_eval(i, z):
    """h_i(z) by the recurrence h_{k+1} = z h_k - k h_{k-1}."""
    if i < 0:
        raise InvalidInputError("order must be nonnegative")
    z = np.asarray(z, dtype=float)
    h0, h1 = np.ones_like(z), z.copy()
    if i == 0:
        return h0 if h0.ndim else float(h0)
    for k in range(1, i):
        h0, h1 = h1, z * h1 - k * h0
    return h1 if h1.ndim else float(h1)


def hermite_table(n, z):
    """Array (..., n+1) of h_0(z)..h_n(z)."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = z
    for k in range(1, n):
        out[..., k + 1] = z * out[..., k] - k * out[..., k - 1]
    return out


def hermite_table_normalized(n, z):
    """h_k(z)/sqrt(k!) for k = 0..n, stable for large k."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = z
    for k in range(1, n):
        out[..., k + 1] = (z * out[..., k] - np.sqrt(k) * out[..., k - 1]) / np.sqrt(k + 1)
    return out


@dataclass(frozen=True)
class HermiteRule:
    """Gauss-Hermite nodes and weights for the standard normal (weights sum to 1)."""
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self):
        return len(self.nodes)


def gauss_hermite_rule(n):
    """n-point rule exact for E[z^k], k <= 2n-1, under the standard normal."""
    if n < 1:
        raise InvalidInputError("rule order must be >= 1")
    z, w = roots_hermitenorm(n)
    w = w / w.sum()
    z = np.where(np.abs(z) < 1e-15, 0.0, z)
    return HermiteRule(z, w)


def triple_delta(a, b, c):
    """E[h_a h_b h_c] = a! b! c! / ((s-a)! (s-b)! (s-c)!) with 2s = a+b+c.

    Zero for odd a+b+c or when the triangle inequality fails.
    """
    t = a + b + c
    if t % 2:
        return 0.0
    s = t // 2
    if s < a or s < b or s < c:
        return 0.0
    # exact integer arithmetic keeps the value symmetric in (a, b, c)
    num = math.factorial(a) * math.factorial(b) * math.factorial(c)
    den = math.factorial(s - a) * math.factorial(s - b) * math.factorial(s - c)
    return float(num // den)


def delta_tensor(p, q):
    """Delta[a, b, c] for a, b <= p and c <= q."""
    D = np.zeros((p + 1, p + 1, q + 1))
    for a in range(p + 1):
        for b in range(p + 1):
            for c in range(abs(a - b), min(a + b, q) + 1, 2):
                D[a, b, c] = triple_delta(a, b, c)
    return D


@dataclass(frozen=True)
class TransformCoefficients:
    """Hermite coefficients phi_0..phi_Q of a transform z -> phi(z).

    phi[i] is the coefficient of h_i; phi_hat[i] = sqrt(i!) phi[i] is the
    coefficient of the orthonormal h_i / sqrt(i!), kept for stability at
    large i.
    """
    phi: np.ndarray
    phi_hat: np.ndarray

    @property
    def Q(self):
        return len(self.phi) - 1

    @property
    def tail_ratio(self):
        m = np.abs(self.phi_hat).max()
        return float(abs(self.phi_hat[-1]) / m) if m > 0 else 0.0

    def multinomial_weights(self):
        """c_s = s! phi_s, the factor multiplying prod g^a / a! in a PCE term."""
        s = np.arange(self.Q + 1)
        return np.exp(0.5 * np.array([lgamma(k + 1) for k in s])) * self.phi_hat

    def __call__(self, z):
        """Truncated expansion sum_i phi_i h_i(z)."""
        return hermite_table_normalized(self.Q, z) @ self.phi_hat


def transform_coeffs(phi, Q, n_quad=None):
    """Project phi onto h_0..h_Q with a Gauss-Hermite rule.

    phi_i = (1/i!) E[phi(z) h_i(z)].  n_quad defaults to max(64, Q+1).
    """
    if Q < 0:
        raise InvalidInputError("Q must be >= 0")
    if n_quad is None:
        n_quad = max(64, Q + 1)
    rule = gauss_hermite_rule(n_quad)
    vals = np.asarray(phi(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = rule.nodes[~np.isfinite(vals)][0]
        raise EvaluationError(f"transform is not finite at z={bad}", index=bad)
    H = hermite_table_normalized(Q, rule.nodes)
    phi_hat = H.T @ (rule.weights * vals)
    # quadrature noise below double precision relative to the largest term
    phi_hat = np.where(np.abs(phi_hat) <= 1e-15 * np.abs(phi_hat).max(), 0.0, phi_hat)
    lf = np.array([lgamma(i + 1) for i in range(Q + 1)])
    return TransformCoefficients(phi_hat * np.exp(-0.5 * lf), phi_hat)
