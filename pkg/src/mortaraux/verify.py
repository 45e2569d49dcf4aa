"""Property checks on a small instance, run by ``mortaraux verify``."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .experiment import RunConfig, build_problem
from .krylov import pcg
from .smoother import ChebyshevSmoother, horner_exact, p_nu_exact_coefficients


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34s} {self.value:.3e} <= {self.tol:.0e}"


def small_config(cfg: Optional[RunConfig] = None) -> RunConfig:
    base = cfg or RunConfig(dim=2)
    cells = [8] * base.dim if base.dim == 2 else [4] * base.dim
    return replace(base, cells_per_axis=cells, block_shape=[2] * base.dim, refinements=0, level=0,
                   order=base.orders[0], study="refinement", schur="exact", max_dofs=10**6)


def _rel(a, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb else float(np.linalg.norm(a))


def check_identities(problem) -> List[CheckResult]:
    A = problem.system.A
    Pi, I = problem.transfer.Pi, problem.transfer.I
    n = A.shape[0]
    nA = abs(A).max()
    local_sum = problem.blocks.local.assemble(problem.system.dof_to_free, n)
    return [
        CheckResult("Pi I = I", abs(Pi @ I - sp.eye(n)).max(), 1e-12),
        CheckResult("I^T A_ee I = A", abs(I.T @ problem.blocks.A_ee @ I - A).max() / nA, 1e-12),
        CheckResult("sum_T A_T = A", abs(local_sum - A).max() / nA, 1e-12),
    ]


def check_schur(problem) -> List[CheckResult]:
    b = problem.blocks
    K = b.matrix().toarray()
    nr = b.n_r
    dense = K[nr:, nr:] - K[nr:, :nr] @ np.linalg.solve(K[:nr, :nr], K[:nr, nr:])
    S = problem.schur.matrix.toarray()
    out = [CheckResult("Sigma = dense Schur complement", abs(S - dense).max() / abs(dense).max(), 1e-10)]
    try:
        np.linalg.cholesky(S)
        spd = 0.0
    except np.linalg.LinAlgError:
        spd = np.inf
    out.append(CheckResult("Sigma Cholesky", spd, 0.0))
    return out


def check_spd(problem, probes: int = 100, seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    n = problem.system.n
    out = []
    for mode in ("add", "mult"):
        B = replace(problem.preconditioner, mode=mode)
        worst_sym, worst_pos = 0.0, 0.0
        for _ in range(probes):
            u, v = rng.standard_normal(n), rng.standard_normal(n)
            sym = abs(u @ B(v) - v @ B(u)) / (np.linalg.norm(u) * np.linalg.norm(v))
            worst_sym = max(worst_sym, sym)
            if u @ B(u) <= 0:
                worst_pos = np.inf
        out.append(CheckResult(f"B_{mode} symmetry", worst_sym, 1e-12))
        out.append(CheckResult(f"B_{mode} positivity", worst_pos, 0.0))
    return out


def check_smoother(problem, nus=(1, 2, 3, 4, 5), seed: int = 0) -> List[CheckResult]:
    A = problem.system.A
    rng = np.random.default_rng(seed)
    out = []
    sm = ChebyshevSmoother(A, 1)
    s = 1.0 / np.sqrt(sm.w)
    H = (s[:, None] * A.toarray()) * s[None, :]
    lam, V = np.linalg.eigh(H)
    out.append(CheckResult("lambda_max(W^-1 A) - 1", max(lam[-1] - 1.0, 0.0), 1e-8))
    worst = 0.0
    for nu in nus:
        sm = ChebyshevSmoother(A, nu)
        c = p_nu_exact_coefficients(nu)
        pl = np.array([horner_exact(c, t) for t in lam])
        e = rng.standard_normal(A.shape[0])
        # p(W^-1 A) = W^-1/2 p(H) W^1/2
        ref = s * (V @ (pl * (V.T @ (e / s))))
        worst = max(worst, np.linalg.norm(sm.error_map(e) - ref) / np.linalg.norm(e))
        if len(sm.roots) != 3 * nu + 1 or horner_exact(c, 0.0) != 1.0:
            worst = np.inf
    out.append(CheckResult("smoother = p_nu(W^-1 A) (Horner)", worst, 1e-10))
    return out


def check_full_trace(cfg: RunConfig) -> List[CheckResult]:
    d = cfg.dim
    cells = [8] * d if d == 2 else [4] * d
    block = list(cells)
    block[-1] = 2  # slabs: Faces without cross-points
    slab = replace(cfg, cells_per_axis=cells, block_shape=block, trace_order="full", mode="mult")
    problem = build_problem(slab, 0, cfg.orders[0])
    A = problem.system.A
    lu = spla.splu(A.tocsc())
    rng = np.random.default_rng(1)
    err = 0.0
    for _ in range(10):
        r = rng.standard_normal(A.shape[0])
        err = max(err, _rel(problem.preconditioner(r), lu.solve(r)))
    _, rep = pcg(A, problem.preconditioner, problem.system.f, tol=cfg.tol)
    return [
        CheckResult("full trace: B_mult^-1 = A^-1", err, 1e-8),
        CheckResult("full trace: PCG iterations - 1", abs(rep.n_it - 1), 0),
    ]


def run_verification(cfg: Optional[RunConfig] = None) -> List[CheckResult]:
    small = small_config(cfg)
    problem = build_problem(small, 0, small.orders[0])
    return (check_identities(problem) + check_schur(problem) + check_spd(problem)
            + check_smoother(problem) + check_full_trace(small))
