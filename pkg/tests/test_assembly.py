import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mortaraux.assembly import (
    CoefficientField,
    agglomerate_stiffness,
    apply_dirichlet,
    assemble_global,
    element_stiffness,
    read_coo,
    weighted_l1_diagonal,
    write_coo,
)
from mortaraux.errors import ConfigurationError, DataError, GeometryError
from mortaraux.mesh import agglomerate_structured, attach_topology, build_structured_mesh, gll_nodes


def _loop_stiffness(h, p):
    """Independent oracle: 1D bases from numpy polyfit, pointwise quadrature loops."""
    nodes = gll_nodes(p)
    polys = [np.poly1d(np.polyfit(nodes, np.eye(p + 1)[j], p)) for j in range(p + 1)]
    dpolys = [q.deriv() for q in polys]
    xq, wq = np.polynomial.legendre.leggauss(p + 3)
    xq, wq = 0.5 * (xq + 1), 0.5 * wq
    d = len(h)
    locs = list(itertools.product(range(p + 1), repeat=d))  # C-order local numbering
    n = len(locs)
    K = np.zeros((n, n))
    for qi in itertools.product(range(len(xq)), repeat=d):
        w = np.prod([wq[i] * h[k] for k, i in enumerate(qi)])
        x = [xq[i] for i in qi]
        grads = np.zeros((n, d))
        for a, loc in enumerate(locs):
            for k in range(d):
                g = dpolys[loc[k]](x[k]) / h[k]
                for j in range(d):
                    if j != k:
                        g *= polys[loc[j]](x[j])
                grads[a, k] = g
        K += w * grads @ grads.T
    return K


def test_q1_square_reference():
    K, load = element_stiffness([1.0, 1.0], 1.0, 1)
    # local order (0,0), (0,1), (1,0), (1,1)
    ref = np.array([[4, -1, -1, -2], [-1, 4, -2, -1], [-1, -2, 4, -1], [-2, -1, -1, 4]]) / 6.0
    assert np.allclose(K, ref, atol=1e-14)
    assert np.allclose(load, 0.25)


def test_q1_cube_reference():
    K, _ = element_stiffness([1.0, 1.0, 1.0], 1.0, 1)
    locs = list(itertools.product(range(2), repeat=3))
    for a, la in enumerate(locs):
        for b, lb in enumerate(locs):
            dist = sum(x != y for x, y in zip(la, lb))
            expected = {0: 1 / 3, 1: 0.0, 2: -1 / 12, 3: -1 / 12}[dist]
            assert K[a, b] == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("dim,p", [(2, 2), (2, 3), (2, 4), (3, 2)])
def test_stiffness_matches_loop_oracle(dim, p):
    h = [0.3, 0.7, 0.5][:dim]
    K, _ = element_stiffness(h, 2.5, p)
    assert np.allclose(K, 2.5 * _loop_stiffness(h, p), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_constants_in_kernel_and_load_sums_to_volume(p):
    h = [0.5, 0.25]
    K, load = element_stiffness(h, 1.0, p)
    assert np.abs(K @ np.ones(len(K))).max() < 1e-12
    assert load.sum() == pytest.approx(0.125)


def test_degenerate_geometry():
    with pytest.raises(GeometryError):
        element_stiffness([1.0, 0.0], 1.0, 1)


def test_bilinear_energy_exact():
    # u = x y is in Q1: u^T A u = int |grad u|^2 = int (y^2 + x^2) = 2/3
    mesh, layout = build_structured_mesh(2, (5, 3), order=1)
    A = assemble_global(mesh, layout, CoefficientField.constant(mesh)).A
    x, y = layout.dof_coords.T
    u = x * y
    assert u @ A @ u == pytest.approx(2 / 3, rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_patch_test_linear_field(p):
    mesh, layout = build_structured_mesh(3, (2, 3, 2), order=p)
    A = assemble_global(mesh, layout, CoefficientField.checkerboard(mesh, 2, 7.0)).A
    u = layout.dof_coords @ np.array([1.0, -2.0, 0.5])
    interior = np.setdiff1d(np.arange(layout.n_dofs), layout.essential_dofs)
    # a linear field is discretely harmonic at interior nodes only when kappa is constant
    A1 = assemble_global(mesh, layout, CoefficientField.constant(mesh)).A
    assert np.abs((A1 @ u)[interior]).max() < 1e-11
    assert np.abs(A @ np.ones(layout.n_dofs)).max() < 1e-11


def test_dirichlet_elimination_is_spd():
    mesh, layout = build_structured_mesh(2, (4, 4), order=2)
    system = apply_dirichlet(assemble_global(mesh, layout, CoefficientField.constant(mesh)), layout.essential_dofs)
    assert system.n == 7 * 7
    np.linalg.cholesky(system.A.toarray())
    assert np.all(system.dof_to_free[system.free_dofs] == np.arange(system.n))
    assert np.all(system.dof_to_free[layout.essential_dofs] == -1)


def test_dirichlet_everything_rejected():
    mesh, layout = build_structured_mesh(2, (1, 1), order=1)
    with pytest.raises(ConfigurationError):
        apply_dirichlet(assemble_global(mesh, layout, CoefficientField.constant(mesh)), layout.essential_dofs)


@pytest.mark.parametrize("pattern", ["constant", "checkerboard(2)", "layers(3)"])
def test_local_stiffness_sums_to_global(pattern):
    mesh, layout = build_structured_mesh(2, (6, 4), order=2)
    topo = agglomerate_structured(mesh, (3, 2))
    layout = attach_topology(layout, mesh, topo)
    coef = CoefficientField.from_spec(mesh, pattern, 5.0)
    system = apply_dirichlet(assemble_global(mesh, layout, coef), layout.essential_dofs)
    local = agglomerate_stiffness(mesh, layout, topo, coef, keep=layout.free_mask)
    assert abs(local.assemble(system.dof_to_free, system.n) - system.A).max() < 1e-13
    f = np.bincount(system.dof_to_free[local.dofs], weights=local.loads, minlength=system.n)
    assert np.allclose(f, system.f)


def test_coefficient_patterns():
    mesh, _ = build_structured_mesh(2, (4, 4))
    cb = CoefficientField.from_spec(mesh, "checkerboard(2)", 9.0).values.reshape(4, 4)
    assert cb[0, 0] == 1.0 and cb[0, 2] == 9.0 and cb[2, 2] == 1.0 and cb[1, 1] == 1.0
    lay = CoefficientField.from_spec(mesh, "layers(4)", 3.0).values.reshape(4, 4)
    assert lay[:, 0].tolist() == [1.0] * 4 and lay[:, 1].tolist() == [3.0] * 4
    for bad in ("stripes(2)", "checkerboard(x)", "checkerboard(0)"):
        with pytest.raises(ConfigurationError):
            CoefficientField.from_spec(mesh, bad, 2.0)
    with pytest.raises(DataError):
        CoefficientField(np.array([1.0, -1.0]))


def test_coefficient_invariant_under_refinement():
    coarse, _ = build_structured_mesh(2, (4, 4))
    fine, _ = build_structured_mesh(2, (8, 8))
    c = CoefficientField.checkerboard(coarse, 2, 5.0).values.reshape(4, 4)
    f = CoefficientField.checkerboard(fine, 2, 5.0).values.reshape(8, 8)
    assert np.array_equal(np.repeat(np.repeat(c, 2, 0), 2, 1), f)


def test_weighted_l1_rejects_nonpositive_diagonal():
    with pytest.raises(DataError):
        weighted_l1_diagonal(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]])))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**31 - 1))
def test_weighted_l1_bounds_energy(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = G @ G.T + 1e-3 * np.eye(n)
    w = weighted_l1_diagonal(sp.csr_matrix(A))
    # v^T A v <= v^T W v, i.e. lambda_max(W^-1/2 A W^-1/2) <= 1
    s = 1 / np.sqrt(w)
    assert np.linalg.eigvalsh(s[:, None] * A * s[None, :]).max() <= 1 + 1e-12


def test_coo_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    M = sp.random(9, 7, density=0.3, random_state=4, format="csr")
    M.data = rng.standard_normal(M.nnz) * 10.0 ** rng.integers(-8, 8, M.nnz)
    write_coo(M, tmp_path / "m.coo")
    lines = (tmp_path / "m.coo").read_text().splitlines()
    assert lines[0] == f"9 7 {M.nnz}"
    assert all(len(line.split()) == 3 for line in lines[1:])
    back = read_coo(tmp_path / "m.coo")
    assert (back != M).nnz == 0
