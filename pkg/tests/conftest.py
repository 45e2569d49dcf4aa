from types import SimpleNamespace

import numpy as np
import pytest

from mortaraux.assembly import CoefficientField, agglomerate_stiffness, apply_dirichlet, assemble_global
from mortaraux.auxspace import AuxSpacePreconditioner
from mortaraux.clone import build_clone_map, build_face_trace_bases, build_transfer
from mortaraux.mesh import agglomerate_structured, attach_topology, build_structured_mesh
from mortaraux.mortar import (
    CondensedInverse,
    assemble_mortar_blocks,
    assemble_schur,
    factor_local_saddles,
    make_schur_solver,
)
from mortaraux.smoother import ChebyshevSmoother

ACCEPTANCE_LINES = []


def build_pipeline(dim=2, cells=(8, 8), block=(2, 2), p=1, q=0, coefficient="constant", contrast=1.0,
                   schur="exact", nu=4, mode="mult", inner_iterations=2):
    """Hand-wired pipeline (independent of RunConfig) returning every stage."""
    mesh, layout = build_structured_mesh(dim, cells, order=p)
    topo = agglomerate_structured(mesh, block)
    layout = attach_topology(layout, mesh, topo)
    coef = CoefficientField.from_spec(mesh, coefficient, contrast)
    system = apply_dirichlet(assemble_global(mesh, layout, coef), layout.essential_dofs)
    local = agglomerate_stiffness(mesh, layout, topo, coef, keep=layout.free_mask)
    clone = build_clone_map(layout, topo, system.dof_to_free)
    basis = build_face_trace_bases(mesh, layout, topo, clone, system.D, q, system.free_dofs)
    blocks = assemble_mortar_blocks(local, clone, basis, system.dof_to_free)
    factors = factor_local_saddles(blocks)
    sigma = assemble_schur(factors, blocks)
    solver = make_schur_solver(sigma.matrix, schur, inner_iterations)
    transfer = build_transfer(clone)
    smoother = ChebyshevSmoother(system.A, nu)
    inner = CondensedInverse(blocks, factors, solver)
    prec = AuxSpacePreconditioner(system.A, smoother, transfer.Pi, inner, mode)
    return SimpleNamespace(mesh=mesh, layout=layout, topo=topo, coef=coef, system=system, A=system.A,
                           local=local, clone=clone, basis=basis, blocks=blocks, factors=factors,
                           schur=sigma, solver=solver, transfer=transfer, smoother=smoother, inner=inner,
                           prec=prec)


@pytest.fixture(scope="session")
def pipeline():
    return build_pipeline


@pytest.fixture(scope="session")
def small2d():
    return build_pipeline(2, (8, 8), (2, 2), p=2, q=1, coefficient="checkerboard(2)", contrast=10.0)


@pytest.fixture(scope="session")
def small3d():
    return build_pipeline(3, (4, 4, 4), (2, 2, 2), p=1, q=0, coefficient="layers(2)", contrast=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
