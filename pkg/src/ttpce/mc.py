"""Monte Carlo reference: sample theta, build kappa* = phi(gamma) exactly,
solve the deterministic problems, and compare with TT surrogates.

Samples are generated in chunks; chunk c uses numpy's Philox generator keyed
by (seed, c), so sample z is reproducible independently of how the run is
partitioned.  Only running sums are kept.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CoercivityError
from .fem import DeterministicSolver
from .postproc import eval_surrogate

CHUNK = 1000


def sample_theta(seed, start, count, M):
    """Standard normal samples z = start..start+count-1, shape (count, M)."""
    out = np.empty((count, M))
    z = start
    while z < start + count:
        c, off = divmod(z, CHUNK)
        gen = np.random.Generator(np.random.Philox(key=[seed, c]))
        block = gen.standard_normal((CHUNK, M))
        take = min(CHUNK - off, start + count - z)
        out[z - start:z - start + take] = block[off:off + take]
        z += take
    return out


@dataclass
class SampleBatch:
    seed: int
    n_mc: int
    M: int

    def chunks(self, size=CHUNK):
        for s in range(0, self.n_mc, size):
            yield s, sample_theta(self.seed, s, min(size, self.n_mc - s), self.M)


def gamma_field(g, theta):
    """gamma(x, theta) = sum_m g_m(x) theta_m for samples theta (S, M)."""
    return np.atleast_2d(theta) @ g


def reference_kappa(g, phi, theta):
    k = phi(gamma_field(g, theta))
    bad = ~(np.isfinite(k).all(1) & (k > 0).all(1))
    if bad.any():
        raise CoercivityError(f"reference coefficient not positive for sample {int(np.argmax(bad))}")
    return k


def reference_fields(batch, g, phi, mesh, f=1.0):
    """Yield (z, theta_z, kappa*_z, u*_z) one sample at a time."""
    solver = DeterministicSolver(mesh, f)
    for start, th in batch.chunks():
        K = reference_kappa(g, phi, th)
        for j in range(len(th)):
            yield start + j, th[j], K[j], solver.solve(K[j])


class RunningMoments:
    """Streaming mean and variance (Welford updates on blocks)."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def update(self, X):
        X = np.atleast_2d(X)
        nb = X.shape[0]
        mb = X.mean(0)
        m2b = ((X - mb) ** 2).sum(0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + m2b + delta**2 * self.n * nb / n
        self.n = n

    @property
    def var(self):
        return self.m2 / self.n if self.n else None


def _rel(a, b, floor=0.0):
    nb = max(np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


@dataclass
class MCResult:
    n_mc: int
    E_kappa: float = np.nan
    E_u: float = np.nan
    E_mean: float = np.nan
    E_var: float = np.nan
    P: float = np.nan
    count: int = 0
    mean: np.ndarray = field(default=None, repr=False)
    var: np.ndarray = field(default=None, repr=False)


def run_monte_carlo(mesh, g, phi, n_mc, seed=0, kappa_tt=None, kappa_modes=None,
                    u_tt=None, x_max=None, threshold=None, u_mean=None, u_var=None,
                    f=1.0, n_error=None):
    """One streaming pass computing every requested metric.

    kappa_tt / u_tt: surrogates (spatial core over all nodes / interior DoF).
    E_kappa and E_u average relative discrete L2 errors over the first
    n_error samples (default all); E_mean, E_var compare u_mean, u_var
    (node values) with the sample statistics; P counts u*(x_max) > threshold
    with x_max a node index (threshold may be an array: P and count follow).
    """
    batch = SampleBatch(seed, n_mc, g.shape[0])
    solver = DeterministicSolver(mesh, f)
    n_error = n_mc if n_error is None else min(n_error, n_mc)
    ek, eu = [], []
    mom = RunningMoments()
    thr = None if threshold is None else np.asarray(threshold, dtype=float)
    count = 0 if thr is None else np.zeros(thr.shape, dtype=int)
    for start, th in batch.chunks():
        K = reference_kappa(g, phi, th)
        U = np.stack([solver.solve(k) for k in K])
        mom.update(U)
        if thr is not None:
            count = count + (U[:, x_max][:, None] > thr.ravel()[None]).sum(0).reshape(thr.shape)
        ne = max(0, min(len(th), n_error - start))
        if ne and kappa_tt is not None:
            Kt = eval_surrogate(kappa_tt, th[:ne], modes=kappa_modes)
            ek.extend(np.linalg.norm(Kt - K[:ne], axis=1) / np.linalg.norm(K[:ne], axis=1))
        if ne and u_tt is not None:
            Ut = eval_surrogate(u_tt, th[:ne])
            Ui = U[:ne][:, mesh.interior]
            eu.extend(np.linalg.norm(Ut - Ui, axis=1) / np.linalg.norm(Ui, axis=1))
    res = MCResult(n_mc=n_mc, mean=mom.mean, var=mom.var)
    if ek:
        res.E_kappa = float(np.mean(ek))
    if eu:
        res.E_u = float(np.mean(eu))
    if u_mean is not None and mom.n:
        res.E_mean = _rel(u_mean, mom.mean)
    if u_var is not None and mom.n:
        # a vanishing variance is measured against the squared mean scale
        res.E_var = _rel(u_var, mom.var, 1e-12 * np.linalg.norm(mom.mean) ** 2)
    if thr is not None:
        if thr.ndim == 0:
            count = int(count)
        res.P, res.count = count / n_mc, count
    return res


def mc_probability(u_samples_at_xmax, threshold):
    """(P*, count) from sampled values u*(x_max, theta_z)."""
    v = np.asarray(u_samples_at_xmax)
    c = int((v > threshold).sum())
    return (c / len(v) if len(v) else 0.0), c


def error_metrics(kappa_tt, u_tt, mesh, g, phi, n_mc, seed=0, kappa_modes=None,
                  u_mean=None, u_var=None):
    """(E_kappa, E_u, E_mean, E_var) against n_mc reference samples."""
    r = run_monte_carlo(mesh, g, phi, n_mc, seed, kappa_tt=kappa_tt, kappa_modes=kappa_modes,
                        u_tt=u_tt, u_mean=u_mean, u_var=u_var)
    return r.E_kappa, r.E_u, r.E_mean, r.E_var
