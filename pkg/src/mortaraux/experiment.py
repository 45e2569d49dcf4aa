"""Configuration-driven refinement and polynomial-order studies."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .assembly import (
    AssembledSystem,
    CoefficientField,
    agglomerate_stiffness,
    apply_dirichlet,
    assemble_global,
    write_coo,
)
from .auxspace import MODES, AuxSpacePreconditioner
from .clone import FULL_TRACE, build_clone_map, build_face_trace_bases, build_transfer
from .errors import ConfigurationError, SolverFailure
from .krylov import SolveReport, pcg
from .mesh import agglomerate_structured, attach_topology, build_structured_mesh, dump_topology
from .mortar import (
    CondensedInverse,
    assemble_mortar_blocks,
    assemble_schur,
    factor_local_saddles,
    make_schur_solver,
    oc_metrics,
)
from .smoother import ChebyshevSmoother

log = logging.getLogger(__name__)

CSV_COLUMNS = ("level", "dofs", "bdofs", "oc_m", "oc_aux", "oc_orig", "n_it", "lmin", "lmax", "seconds")
SCHUR_SOLVERS = ("exact", "pcg", "chebyshev")


@dataclass
class RunConfig:
    """All knobs of one experiment; every field has a JSON key of the same name.

    ``order`` is an int, or a list of ints for the order study. ``trace_order``
    is an int, ``"full"``, or ``"auto"`` (p - 1, at least 0).
    ``cells_per_axis`` describes the coarsest mesh; level l multiplies it by 2^l
    while ``block_shape`` (cells per Element) stays fixed.
    """

    name: str = "run"
    study: str = "refinement"
    dim: int = 3
    cells_per_axis: List[int] = field(default_factory=lambda: [16, 16, 16])
    refinements: int = 2
    level: int = 0
    order: Union[int, List[int]] = 1
    trace_order: Union[int, str] = "auto"
    block_shape: List[int] = field(default_factory=lambda: [2, 2, 2])
    coefficient: str = "checkerboard(2)"
    contrast: float = 100.0
    nu: int = 4
    inner_nu: int = 2
    smoother_diagonal: str = "l1"
    mode: str = "mult"
    schur: str = "exact"
    inner_iterations: int = 2
    flexible: Union[bool, str] = "auto"
    tol: float = 1e-8
    max_it: int = 500
    max_dofs: int = 300_000
    report_wall_time: bool = False
    dump_topology: bool = False
    dump_matrices: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = cls(**data)
        try:
            cfg.validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed configuration value: {exc}") from exc
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def orders(self) -> List[int]:
        return list(self.order) if isinstance(self.order, (list, tuple)) else [int(self.order)]

    @property
    def use_flexible(self) -> bool:
        return self.schur == "pcg" if self.flexible == "auto" else bool(self.flexible)

    def trace_for(self, p: int):
        if self.trace_order == "auto":
            return max(p - 1, 0)
        return self.trace_order

    def cells_at(self, level: int) -> List[int]:
        return [c * 2 ** level for c in self.cells_per_axis]

    def levels(self) -> List[int]:
        return list(range(self.refinements + 1))

    def instances(self):
        """(level, order) pairs visited by ``study``."""
        if self.study == "refinement":
            return [(lv, self.orders[0]) for lv in self.levels()]
        return [(self.level, p) for p in self.orders]

    def validate(self) -> None:
        def bad(msg):
            raise ConfigurationError(msg)

        if self.study not in ("refinement", "order"):
            bad(f"study must be 'refinement' or 'order', got {self.study!r}")
        if self.dim not in (2, 3):
            bad("dim must be 2 or 3")
        for key in ("cells_per_axis", "block_shape"):
            v = getattr(self, key)
            if not isinstance(v, (list, tuple)) or len(v) != self.dim or any(int(c) != c or c < 1 for c in v):
                bad(f"{key} must list {self.dim} positive integers")
        if any(c % b for c, b in zip(self.cells_per_axis, self.block_shape)):
            bad("block_shape must divide cells_per_axis")
        if self.refinements < 0 or self.level < 0:
            bad("refinements and level must be >= 0")
        if not self.orders or any(int(p) != p or p < 1 for p in self.orders):
            bad("order must be a positive integer or a list of them")
        if self.study == "refinement" and len(self.orders) != 1:
            bad("a refinement study uses a single order")
        if self.mode not in MODES:
            bad(f"mode must be one of {MODES}")
        if self.schur not in SCHUR_SOLVERS:
            bad(f"schur must be one of {SCHUR_SOLVERS}")
        if self.inner_iterations < 1 or self.nu < 1 or self.inner_nu < 1:
            bad("nu, inner_nu and inner_iterations must be >= 1")
        if self.smoother_diagonal not in ("l1", "jacobi"):
            bad("smoother_diagonal must be 'l1' or 'jacobi'")
        if self.flexible not in (True, False, "auto"):
            bad("flexible must be true, false or \"auto\"")
        if not (0 < self.tol < 1):
            bad("tol must lie in (0, 1)")
        if self.max_it < 1:
            bad("max_it must be >= 1")
        if not (self.contrast > 0 and math.isfinite(self.contrast)):
            bad("contrast must be positive")
        if self.trace_order not in ("auto", FULL_TRACE) and (int(self.trace_order) != self.trace_order
                                                          or self.trace_order < 0):
            bad("trace_order must be a non-negative integer, 'full' or 'auto'")
        CoefficientField.parse(self.coefficient)
        for level, p in self.instances():
            cells = self.cells_at(level)
            n_dofs = int(np.prod([c * p + 1 for c in cells]))
            if n_dofs > self.max_dofs:
                bad(f"level {level}, order {p}: {n_dofs} dofs exceeds max_dofs={self.max_dofs}")
            self._check_traces(cells, p)

    def _check_traces(self, cells, p) -> None:
        q = self.trace_for(p)
        n_blocks = [c // b for c, b in zip(cells, self.block_shape)]
        if q == FULL_TRACE:
            if sum(n > 1 for n in n_blocks) > 1:
                raise ConfigurationError(
                    "the full trace space needs Faces without cross-points; "
                    "split Elements along a single axis"
                )
            return
        m_F = math.comb(int(q) + self.dim - 1, self.dim - 1)
        for axis in range(self.dim):
            if n_blocks[axis] == 1:
                continue  # no Faces normal to this axis
            n_min = 1
            for k in range(self.dim):
                if k != axis:
                    ends = 2 if n_blocks[k] == 1 else 1
                    n_min *= self.block_shape[k] * p + 1 - ends
            if m_F >= n_min:
                raise ConfigurationError(
                    f"trace order {q} gives {m_F} basis functions but some Face has only {n_min} bdofs "
                    "(over-constrained); lower trace_order or enlarge block_shape"
                )


@dataclass
class Problem:
    """Everything built for one (level, order) instance."""

    config: RunConfig
    level: int
    order: int
    mesh: object
    layout: object
    topo: object
    system: AssembledSystem
    clone: object
    basis: object
    blocks: object
    factors: object
    schur: object
    schur_solver: object
    transfer: object
    smoother: ChebyshevSmoother
    preconditioner: AuxSpacePreconditioner
    setup_seconds: float


def build_problem(cfg: RunConfig, level: int = 0, order: Optional[int] = None) -> Problem:
    t0 = time.perf_counter()
    p = cfg.orders[0] if order is None else int(order)
    mesh, layout = build_structured_mesh(cfg.dim, cfg.cells_at(level), order=p)
    topo = agglomerate_structured(mesh, cfg.block_shape)
    layout = attach_topology(layout, mesh, topo)
    coef = CoefficientField.from_spec(mesh, cfg.coefficient, cfg.contrast)
    system = apply_dirichlet(assemble_global(mesh, layout, coef), layout.essential_dofs)
    local = agglomerate_stiffness(mesh, layout, topo, coef, keep=layout.free_mask)
    clone = build_clone_map(layout, topo, system.dof_to_free)
    basis = build_face_trace_bases(mesh, layout, topo, clone, system.D, cfg.trace_for(p), system.free_dofs)
    blocks = assemble_mortar_blocks(local, clone, basis, system.dof_to_free)
    factors = factor_local_saddles(blocks)
    schur = assemble_schur(factors, blocks)
    solver = make_schur_solver(schur.matrix, cfg.schur, cfg.inner_iterations, cfg.inner_nu)
    transfer = build_transfer(clone)
    smoother = ChebyshevSmoother(system.A, cfg.nu, cfg.smoother_diagonal)
    prec = AuxSpacePreconditioner(system.A, smoother, transfer.Pi, CondensedInverse(blocks, factors, solver), cfg.mode)
    return Problem(cfg, level, p, mesh, layout, topo, system, clone, basis, blocks, factors, schur, solver,
                   transfer, smoother, prec, time.perf_counter() - t0)


@dataclass
class ReportRow:
    level: int
    dofs: int
    bdofs: int
    oc_m: float
    oc_aux: float
    oc_orig: float
    n_it: int
    lmin: float
    lmax: float
    seconds: float

    def as_csv(self) -> list:
        floats = [repr(float(v)) for v in (self.oc_m, self.oc_aux, self.oc_orig, self.lmin, self.lmax, self.seconds)]
        return [int(self.level), int(self.dofs), int(self.bdofs), *floats[:3], int(self.n_it), *floats[3:]]

    @classmethod
    def from_csv(cls, rec: dict) -> "ReportRow":
        return cls(int(rec["level"]), int(rec["dofs"]), int(rec["bdofs"]), float(rec["oc_m"]),
                   float(rec["oc_aux"]), float(rec["oc_orig"]), int(rec["n_it"]), float(rec["lmin"]),
                   float(rec["lmax"]), float(rec["seconds"]))


def solve_problem(problem: Problem) -> SolveReport:
    cfg = problem.config
    A = problem.system.A
    _, report = pcg(A, problem.preconditioner, problem.system.f, tol=cfg.tol, max_it=cfg.max_it,
                    flexible=cfg.use_flexible, config=cfg.to_dict())
    return report


def run_instance(cfg: RunConfig, level: int, order: int, out_dir: Optional[Path] = None):
    """Build and solve one instance; returns (ReportRow, SolveReport)."""
    t0 = time.perf_counter()
    problem = build_problem(cfg, level, order)
    report = solve_problem(problem)
    if not report.converged:
        raise SolverFailure(
            f"PCG did not converge in {cfg.max_it} iterations (level {level}, order {order}, "
            f"relative measure {report.relative_residual:.3e})"
        )
    seconds = time.perf_counter() - t0
    oc_m, oc_aux, oc_orig = oc_metrics(problem.system.A, problem.schur.matrix)
    key = level if cfg.study == "refinement" else order
    row = ReportRow(key, problem.system.n, problem.blocks.n_B, oc_m, oc_aux, oc_orig, report.n_it,
                    report.lmin, report.lmax, seconds)
    log.info("%s %d: dofs=%d Bdofs=%d OC_m=%.4f n_it=%d (%.2fs)", cfg.study, key, row.dofs, row.bdofs,
             oc_m, report.n_it, seconds)
    if out_dir is not None:
        tag = f"{cfg.name}_L{level}_p{order}"
        if cfg.dump_topology:
            dump_topology(problem.topo, out_dir / f"{tag}_topology.txt")
        if cfg.dump_matrices:
            write_coo(problem.system.A, out_dir / f"{tag}_A.coo")
            write_coo(problem.schur.matrix, out_dir / f"{tag}_Sigma.coo")
    return row, report


def run_refinement_study(cfg: RunConfig, out_dir: Optional[Path] = None) -> List[ReportRow]:
    return [run_instance(cfg, lv, cfg.orders[0], out_dir)[0] for lv in cfg.levels()]


def run_order_study(cfg: RunConfig, out_dir: Optional[Path] = None) -> List[ReportRow]:
    if cfg.dim != 2:
        log.warning("order studies are designed for 2D meshes; running dim=%d anyway", cfg.dim)
    return [run_instance(cfg, cfg.level, p, out_dir)[0] for p in cfg.orders]


def run_study(cfg: RunConfig, out_dir: Optional[Path] = None) -> List[ReportRow]:
    return run_refinement_study(cfg, out_dir) if cfg.study == "refinement" else run_order_study(cfg, out_dir)


# --------------------------------------------------------------------------- reporting


def rows_to_csv(rows: List[ReportRow], wall_time: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        rec = r.as_csv()
        if not wall_time:
            rec[-1] = "nan"
        w.writerow(rec)
    return buf.getvalue()


def read_csv(path) -> List[ReportRow]:
    with open(path, newline="") as fh:
        return [ReportRow.from_csv(rec) for rec in csv.DictReader(fh)]


def format_table(rows: List[ReportRow], first: str = "Refs") -> str:
    header = [first, "# dofs", "# Bdofs", "OC_m", "n_it"]
    body = [[str(r.level), str(r.dofs), str(r.bdofs), f"{r.oc_m:.3f}", str(r.n_it)] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def emit_report(rows: List[ReportRow], out_dir, name: str = "results", study: str = "refinement",
                wall_time: bool = False):
    """Write ``<name>.csv`` and ``<name>.txt`` into ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out / f"{name}.csv", out / f"{name}.txt"
    csv_path.write_text(rows_to_csv(rows, wall_time))
    txt_path.write_text(format_table(rows, "Refs" if study == "refinement" else "Order"))
    return csv_path, txt_path
