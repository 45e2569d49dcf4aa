#!/usr/bin/env python3
"""Outer iteration counts with S^-1 replaced by k inner PCG steps on Sigma.

Compares the exact sparse factorization with k = 2, 3 inner iterations
(Chebyshev-preconditioned, nu = 2) and with the bare Chebyshev smoother, on
the instance of the given config.
"""
import argparse
import dataclasses
from pathlib import Path

from mortaraux.experiment import RunConfig, run_instance

ROOT = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--config", type=Path, default=ROOT / "configs" / "inexact_3d.json")
ap.add_argument("--k", type=int, nargs="+", default=[2, 3])
args = ap.parse_args()

base = RunConfig.load(args.config)
variants = [("exact", dataclasses.replace(base, schur="exact"))]
for k in args.k:
    for flexible in (False, True):
        variants.append((f"pcg k={k} {'flexible' if flexible else 'standard'}",
                         dataclasses.replace(base, schur="pcg", inner_iterations=k, flexible=flexible)))
variants.append(("chebyshev", dataclasses.replace(base, schur="chebyshev")))

exact_it = None
print(f"{'S^-1':<24s} {'n_it':>5s} {'ratio':>6s} {'cond':>8s}")
for label, cfg in variants:
    row, rep = run_instance(cfg, cfg.level, cfg.orders[0])
    exact_it = exact_it or row.n_it
    print(f"{label:<24s} {row.n_it:5d} {row.n_it / exact_it:6.2f} {rep.condition:8.3f}")
