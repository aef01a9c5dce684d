"""Experiment runner: KLE, cross, Galerkin operator, solve, statistics, MC check."""

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import make_phi
from .errors import InvalidInputError
from .fem import assemble_load, build_lshape_mesh, extend
from .galerkin import assemble_rhs_tt, build_operator
from .mc import run_monte_carlo
from .postproc import covariance, exceedance_probability, mean_field
from .random_field import KappaTT, build_kappa_tt, build_pce_problem, with_mean_channel
from .solver import SolverOptions, als_solve
from .tt import TTTensor, tt_load, tt_save


@dataclass
class ExperimentConfig:
    distribution: str = "lognormal"
    M: int = 20
    p: int = 3
    lc: float = 1.0
    sigma: float = 0.5
    R: int = 1
    eps: float = 1e-4
    tau: float = 1.2
    n_mc: int = 1000
    seed: int = 0
    out: str = "results"
    reuse_kappa: bool = False
    reuse_u: bool = False
    probability: bool = True
    verbose: bool = False

    def __post_init__(self):
        if self.distribution not in ("lognormal", "beta"):
            raise InvalidInputError(f"unknown distribution {self.distribution!r}")
        if self.M < 1 or self.p < 1:
            raise InvalidInputError("M and p must be positive")
        if self.lc <= 0 or self.sigma <= 0 or self.eps <= 0:
            raise InvalidInputError("lc, sigma and eps must be positive")
        if self.tau <= 1:
            raise InvalidInputError("tau must exceed 1")
        if self.n_mc < 0:
            raise InvalidInputError("n_mc must be non-negative")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def kappa_key(self):
        return {k: getattr(self, k) for k in ("distribution", "M", "p", "lc", "sigma", "R", "eps", "seed")}


_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"l_c": "lc", "nmc": "n_mc", "N_mc": "n_mc"}


def _convert(name, text):
    kind = _TYPES[name]
    if kind in (bool, "bool"):
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return str(text).strip()


def parse_overrides(items):
    """{name: value} from (key, text) pairs with aliases and type conversion."""
    out = {}
    for k, v in items:
        k = _ALIASES.get(k.strip(), k.strip())
        if k not in _TYPES:
            raise InvalidInputError(f"unknown config key {k!r}")
        out[k] = _convert(k, v)
    return out


def load_config(path, **overrides):
    """Flat key=value file; '#' starts a comment."""
    items = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"bad config line {line!r}")
        k, v = line.split("=", 1)
        items.append((k, v))
    kw = parse_overrides(items)
    kw.update(overrides)
    return ExperimentConfig(**kw)


# column name -> unit; units end up in the CSV header as "name [unit]"
COLUMNS = [
    ("param", ""), ("value", ""),
    ("T_kappa", "s"), ("T_op", "s"), ("T_u", "s"), ("T_chi", "s"), ("T_mc", "s"),
    ("r_kappa", "1"), ("r_u", "1"), ("r_chi", "1"),
    ("E_kappa", "1"), ("E_u", "1"), ("E_mean", "1"), ("E_var", "1"),
    ("P", "1"), ("P_mc", "1"), ("mc_count", "1"),
    ("residual", "1"), ("sweeps", "1"), ("converged", "bool"), ("error", ""),
]
TIMING_COLUMNS = {"T_kappa", "T_op", "T_u", "T_chi", "T_mc"}


class ResultTable:
    """Rows of named cells; CSV with units in the header."""

    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def __len__(self):
        return len(self.rows)

    def append(self, row):
        unknown = set(row) - {c for c, _ in COLUMNS}
        if unknown:
            raise InvalidInputError(f"unknown columns {sorted(unknown)}")
        self.rows.append(dict(row))

    @staticmethod
    def header():
        return [f"{c} [{u}]" if u else c for c, u in COLUMNS]

    def to_csv(self, path=None, timings=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [(c, h) for (c, _), h in zip(COLUMNS, self.header())
                if timings or c not in TIMING_COLUMNS]
        w.writerow([h for _, h in cols])
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c, _ in cols])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            rd = csv.reader(fh)
            head = [h.split(" [")[0] for h in next(rd)]
            return cls([{h: v for h, v in zip(head, r) if v != ""} for r in rd])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6e}"
    return str(v)


class _Log:
    def __init__(self, path, echo):
        self.fh = open(path, "w")
        self.echo = echo

    def __call__(self, line):
        self.fh.write(line + "\n")
        self.fh.flush()
        if self.echo:
            print(line, flush=True)

    def close(self):
        self.fh.close()


class StageError(RuntimeError):
    def __init__(self, stage, err):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage


def _cached(path, key):
    meta = path.with_suffix(path.suffix + ".key")
    if path.exists() and meta.exists() and json.loads(meta.read_text()) == key:
        return tt_load(path)
    return None


def _store(x, path, key):
    tt_save(x, path)
    path.with_suffix(path.suffix + ".key").write_text(json.dumps(key, sort_keys=True))


def run_experiment(cfg, param=None, value=None, mesh_cache=None):
    """Run the full pipeline for one configuration; returns (row, artifacts)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    row = {"param": param, "value": value}
    art = {}
    cross_log = _Log(out / "cross.log", cfg.verbose)
    solver_log = _Log(out / "solver.log", cfg.verbose)
    stage = "mesh"
    try:
        if mesh_cache is not None and cfg.R in mesh_cache:
            mesh = mesh_cache[cfg.R]
        else:
            mesh = build_lshape_mesh(cfg.R)
            if mesh_cache is not None:
                mesh_cache[cfg.R] = mesh
        stage = "kle"
        phi = make_phi(cfg.distribution, cfg.sigma)
        t = time.perf_counter()
        problem = build_pce_problem(mesh.nodes, mesh.weights, cfg.M, cfg.p, cfg.lc, phi)

        stage = "kappa"
        key = cfg.kappa_key()
        coeff = _cached(out / "kappa.tt", key) if cfg.reuse_kappa else None
        if coeff is None:
            cross_log(f"# kappa cross M={cfg.M} p={cfg.p}")
            kappa = build_kappa_tt(problem, cfg.eps, seed=cfg.seed, log=cross_log)
            coeff = kappa.coeff
            _store(coeff, out / "kappa.tt", key)
        else:
            cross_log("# kappa TT reused from cache")
        stoch = with_mean_channel(coeff)
        spatial = np.column_stack([problem.kappa_mean, problem.v.T])
        kappa_full = TTTensor([spatial[None]] + list(stoch.cores), check=False)
        row["T_kappa"] = time.perf_counter() - t
        row["r_kappa"] = coeff.max_rank

        stage = "operator"
        t = time.perf_counter()
        op = build_operator(mesh, KappaTT(coeff, stoch, spatial, kappa_full), cfg.p)
        f = assemble_rhs_tt(assemble_load(mesh, 1.0), cfg.M, cfg.p)
        row["T_op"] = time.perf_counter() - t

        stage = "solve"
        t = time.perf_counter()
        ukey = dict(key, stage="u")
        u = _cached(out / "u.tt", ukey) if cfg.reuse_u else None
        if u is None:
            res = als_solve(op, f, SolverOptions(tol_rel=cfg.eps, seed=cfg.seed), log=solver_log)
            u = res.u
            row.update(residual=res.residual, sweeps=res.sweeps, converged=res.converged)
            art["solver_history"] = res.history
            _store(u, out / "u.tt", ukey)
        else:
            solver_log("# u TT reused from cache")
            row["converged"] = True
        row["T_u"] = time.perf_counter() - t
        row["r_u"] = u.max_rank

        stage = "statistics"
        mean = extend(mesh, mean_field(u))
        var = extend(mesh, covariance(u).var)
        art.update(mesh=mesh, problem=problem, kappa=kappa_full, u=u, mean=mean, var=var)

        prob = None
        if cfg.probability:
            stage = "probability"
            t = time.perf_counter()
            cross_log(f"# indicator cross tau={cfg.tau}")
            prob = exceedance_probability(u, cfg.tau, tol_rel=cfg.eps, seed=cfg.seed, log=cross_log)
            row.update(T_chi=time.perf_counter() - t, r_chi=prob.rank, P=prob.probability)
            art["probability"] = prob

        if cfg.n_mc > 0:
            stage = "monte_carlo"
            t = time.perf_counter()
            mc = run_monte_carlo(
                mesh, problem.g, phi, cfg.n_mc, cfg.seed, kappa_tt=kappa_full,
                kappa_modes=cfg.p + 1, u_tt=u,
                x_max=None if prob is None else int(mesh.interior[prob.x_max]),
                threshold=None if prob is None else prob.threshold,
                u_mean=mean, u_var=var)
            row.update(T_mc=time.perf_counter() - t, E_kappa=mc.E_kappa, E_u=mc.E_u,
                       E_mean=mc.E_mean, E_var=mc.E_var)
            if prob is not None:
                row.update(P_mc=mc.P, mc_count=mc.count)
            art["mc"] = mc
    except Exception as err:
        raise StageError(stage, err) from err
    finally:
        cross_log.close()
        solver_log.close()
    ResultTable([row]).to_csv(out / "results.csv")
    return row, art


SWEEPABLE = {"p": int, "M": int, "lc": float, "sigma": float, "R": int}


def sweep(cfg, name, values, log=print):
    """One row per value; a failing row is recorded and the sweep continues."""
    name = _ALIASES.get(name, name)
    if name not in SWEEPABLE:
        raise InvalidInputError(f"cannot sweep {name!r}; choose from {sorted(SWEEPABLE)}")
    table = ResultTable()
    meshes = {}
    for v in values:
        v = SWEEPABLE[name](v)
        sub = cfg.replace(**{name: v, "out": str(Path(cfg.out) / f"{name}={v}")})
        try:
            row, _ = run_experiment(sub, name, v, mesh_cache=meshes)
        except StageError as err:
            log(str(err))
            row = {"param": name, "value": v, "converged": False, "error": str(err)}
        table.append(row)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    table.to_csv(Path(cfg.out) / "results.csv")
    return table
