#!/usr/bin/env python3
"""Lanczos extreme eigenvalues of the fictitious space preconditioner over refinements.

With the exact constrained inverse on the Element-discontinuous space (no
smoother), the spectrum of B^-1 A should stay bounded as h decreases.
"""
import argparse

from mortaraux.auxspace import fictitious_preconditioner
from mortaraux.experiment import RunConfig, build_problem
from mortaraux.krylov import pcg

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--dim", type=int, default=2)
ap.add_argument("--order", type=int, default=1)
ap.add_argument("--levels", type=int, default=4)
ap.add_argument("--coefficient", default="checkerboard(2)")
ap.add_argument("--contrast", type=float, default=100.0)
args = ap.parse_args()

cfg = RunConfig(dim=args.dim, cells_per_axis=[4] * args.dim, block_shape=[2] * args.dim,
                refinements=args.levels - 1, order=args.order, trace_order=max(args.order - 1, 0),
                coefficient=args.coefficient, contrast=args.contrast, max_dofs=10**6)
cfg.validate()
print(f"{'level':>5s} {'dofs':>8s} {'n_it':>5s} {'lmin':>8s} {'lmax':>8s} {'cond':>8s}")
for level in cfg.levels():
    pb = build_problem(cfg, level)
    B = fictitious_preconditioner(pb.transfer.Pi, pb.preconditioner.inner)
    _, rep = pcg(pb.system.A, B, pb.system.f, tol=1e-10)
    print(f"{level:5d} {pb.system.n:8d} {rep.n_it:5d} {rep.lmin:8.4f} {rep.lmax:8.4f} {rep.condition:8.3f}")
