"""Command line entry point: ttpce [--config FILE] [--M 10] ... [--sweep p=1,2,3]."""

import argparse
import sys

from .experiment import ExperimentConfig, StageError, load_config, run_experiment, sweep
from .errors import InvalidInputError

_FLAGS = [
    ("--distribution", "distribution", str), ("--M", "M", int), ("--p", "p", int),
    ("--lc", "lc", float), ("--sigma", "sigma", float), ("--R", "R", int),
    ("--eps", "eps", float), ("--tau", "tau", float), ("--nmc", "n_mc", int),
    ("--seed", "seed", int), ("--out", "out", str),
]


def build_parser():
    ap = argparse.ArgumentParser(prog="ttpce", description=__doc__)
    ap.add_argument("--config", help="flat key=value file")
    for flag, dest, kind in _FLAGS:
        ap.add_argument(flag, dest=dest, type=kind)
    ap.add_argument("--sweep", help="NAME=v1,v2,... over p, M, lc, sigma or R")
    ap.add_argument("--reuse", action="store_true", help="reuse cached kappa.tt / u.tt")
    ap.add_argument("--no-probability", action="store_true")
    ap.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    over = {dest: getattr(args, dest) for _, dest, _ in _FLAGS if getattr(args, dest) is not None}
    if args.reuse:
        over.update(reuse_kappa=True, reuse_u=True)
    if args.no_probability:
        over["probability"] = False
    if args.verbose:
        over["verbose"] = True
    try:
        cfg = load_config(args.config, **over) if args.config else ExperimentConfig(**over)
        if args.sweep:
            name, _, vals = args.sweep.partition("=")
            values = [v for v in vals.split(",") if v.strip()]
            table = sweep(cfg, name.strip(), values)
            print(table.to_csv(), end="")
            return 0 if all(r.get("converged") for r in table.rows) else 1
        row, _ = run_experiment(cfg)
    except (InvalidInputError, StageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(open(f"{cfg.out}/results.csv").read(), end="")
    return 0 if row.get("converged") else 1


if __name__ == "__main__":
    sys.exit(main())
