"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(CFL violation, divergence, non-finite values), 4 missing inputs.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io, pipeline
from .dlmm import EstimatorError
from .fgn import FgnError, FgnSpec, sample_path
from .models import ModelError
from .simulate import EnsembleError
from .solver import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4

log = logging.getLogger("memfpk")


def _common(p: argparse.ArgumentParser, need_config=True) -> None:
    if need_config:
        p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    p.add_argument("--out", type=Path, default=Path("runs/out"), help="run directory")
    p.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap for ensemble simulation")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memfpk", description="Response densities of oscillators driven by fractional Gaussian noise.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [
        ("simulate", "simulate the sample-path ensemble with Malliavin diagonals"),
        ("estimate", "estimate diffusion coefficients from a simulated ensemble"),
        ("solve", "solve the memory-dependent FPK equation"),
        ("analytic", "exact Gaussian response of the linear oscillator"),
        ("compare", "compare solver densities with the configured reference"),
    ]:
        _common(sub.add_parser(name, help=text))
    rp = sub.add_parser("reproduce", help="run a shipped example end to end")
    rp.add_argument("example", choices=cfgmod.EXAMPLES)
    _common(rp, need_config=False)
    sp = sub.add_parser("show-config", help="print a shipped example config")
    sp.add_argument("example", choices=cfgmod.EXAMPLES)
    fp = sub.add_parser("fgn", help="write one fractional Gaussian noise path as CSV")
    fp.add_argument("--hurst", type=float, required=True)
    fp.add_argument("--n", type=int, required=True)
    fp.add_argument("--dt", type=float, default=1.0)
    fp.add_argument("--seed", type=int, default=0)
    fp.add_argument("--out", type=Path, required=True)
    return ap


def _load(args) -> cfgmod.RunConfig:
    if args.command == "reproduce":
        cfg = cfgmod.load_example(args.example, args.scale)
    else:
        cfg = cfgmod.load(args.config, args.scale)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _run(args) -> int:
    if args.command == "show-config":
        sys.stdout.write(cfgmod.example_text(args.example))
        return EXIT_OK
    if args.command == "fgn":
        inc = sample_path(FgnSpec(args.hurst, args.dt, args.n, seed=args.seed,
                                  white_noise=args.hurst == 0.5))
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="\n") as fh:
            fh.write("m,increment\n")
            for m, v in enumerate(inc.values):
                fh.write(f"{m},{io.FMT % v}\n")
        return EXIT_OK

    cfg = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    threads = max(1, args.threads)
    if args.command == "simulate":
        pipeline.run_simulate(cfg, out, threads)
    elif args.command == "estimate":
        pipeline.run_estimate(cfg, out)
    elif args.command == "solve":
        res = pipeline.run_solve(cfg, out)
        for d in res.diagnostics:
            log.info("t=%.3f mass=%.8f min/max=%.3e", d["time"], d["mass"], d["min_over_max"])
    elif args.command == "analytic":
        pipeline.run_analytic(cfg, out)
    elif args.command == "compare":
        for row in pipeline.run_compare(cfg, out):
            print(f"t={row['time']:.3f} max_abs={row['max_abs']:.3e} l1={row['l1']:.3e}")
    elif args.command == "reproduce":
        pipeline.reproduce(cfg, out, threads)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        return _run(args)
    except (cfgmod.ConfigError, ModelError, FgnError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EnsembleError, EstimatorError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
