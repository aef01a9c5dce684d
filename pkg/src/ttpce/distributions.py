"""Coefficient transforms: shifted log-normal and a beta(5,2) transform."""

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError


def lognormal_phi(sigma):
    """z -> exp(1 + sigma z / 2) + 10."""
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")

    def phi(z):
        return np.exp(1.0 + 0.5 * sigma * np.asarray(z, dtype=float)) + 10.0

    phi.name = "lognormal"
    return phi


def beta52_cdf(t):
    """CDF of Beta(5,2): 6 t^5 - 5 t^6 on [0,1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**5 * (6.0 - 5.0 * t)


def beta52_pdf(t):
    t = np.asarray(t, dtype=float)
    return 30.0 * t**4 * (1.0 - t)


def beta52_inv(y, tol=1e-13, max_iter=60):
    """Inverse Beta(5,2) CDF by safeguarded Newton, bracket [0,1]."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y).copy()
    if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
        raise InvalidInputError("probabilities must lie in [0,1]")
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    t = np.clip(y ** 0.2, 0.0, 1.0)
    for _ in range(max_iter):
        F = beta52_cdf(t) - y
        lo = np.where(F < 0, t, lo)
        hi = np.where(F > 0, t, hi)
        f = beta52_pdf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - F / f
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        done = np.abs(tn - t) <= tol * np.maximum(t, 1e-300)
        t = tn
        if np.all(done | (hi - lo <= tol)):
            break
    t = np.where(y <= 0, 0.0, np.where(y >= 1, 1.0, t))
    return float(t[0]) if scalar else t


def std_normal_cdf(z):
    """(1 + erf(z / sqrt 2)) / 2."""
    return ndtr(z)


def beta_phi():
    """z -> B52^{-1}(Phi(z)) + 1, values in (1, 2)."""

    def phi(z):
        return beta52_inv(std_normal_cdf(np.asarray(z, dtype=float))) + 1.0

    phi.name = "beta"
    return phi


def make_phi(distribution, sigma=0.5):
    if distribution == "lognormal":
        return lognormal_phi(sigma)
    if distribution == "beta":
        return beta_phi()
    raise InvalidInputError(f"unknown distribution {distribution!r}")
