import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mortaraux.clone import (
    FULL_TRACE,
    apply_averaging,
    apply_injection,
    apply_QF,
    build_face_trace_bases,
    face_trace_basis,
    monomial_exponents,
)
from mortaraux.errors import ConfigurationError


def test_clone_counts_match_cell_oracle(small2d):
    """|J_l| is the number of Elements whose cells touch dof l."""
    pb = small2d
    cell_T = pb.topo.elements_to_T
    owners = {}
    for c, dofs in enumerate(pb.layout.cell_dofs):
        for d in dofs:
            owners.setdefault(int(d), set()).add(int(cell_T[c]))
    sizes = pb.clone.J_sizes()
    for free, dof in enumerate(pb.system.free_dofs):
        assert sizes[free] == len(owners[int(dof)])
    assert pb.clone.n_edof == sum(len(owners[int(d)]) for d in pb.system.free_dofs)


def test_edof_ordering_is_element_major(small2d):
    cl = small2d.clone
    assert np.all(np.diff(cl.edof_T) >= 0)
    for T in range(cl.n_T):
        assert np.all(np.diff(cl.edof_dof[cl.T_edofs(T)]) > 0)
    for F in range(cl.n_F):
        b = cl.F_bdofs(F)
        assert np.all(cl.bdof_F[b] == F)
        tm, tp = cl.F_neighbors[F]
        assert np.all(cl.edof_T[cl.bdof_edof[b, 0]] == tm)
        assert np.all(cl.edof_T[cl.bdof_edof[b, 1]] == tp)
        assert np.all(cl.edof_dof[cl.bdof_edof[b, 0]] == cl.bdof_dof[b])


@pytest.mark.parametrize("fixture", ["small2d", "small3d"])
def test_transfer_identities(fixture, request):
    pb = request.getfixturevalue(fixture)
    Pi, I = pb.transfer.Pi, pb.transfer.I
    n = pb.system.n
    assert abs(Pi @ I - sp.eye(n)).max() == 0.0
    assert abs(I.T @ pb.blocks.A_ee @ I - pb.A).max() <= 1e-12 * abs(pb.A).max()
    # rows of Pi are averages: entries 1/|J_l| summing to one
    assert np.allclose(np.asarray(Pi.sum(axis=1)).ravel(), 1.0)


def test_averaging_and_injection(small2d, rng):
    tr = small2d.transfer
    v = rng.standard_normal(small2d.system.n)
    assert np.array_equal(apply_averaging(tr, apply_injection(tr, v)), v)
    ve = rng.standard_normal(small2d.clone.n_edof)
    avg = apply_averaging(tr, ve)
    for l in (0, 5, 17):
        assert avg[l] == pytest.approx(ve[small2d.clone.J(l)].mean())
    with pytest.raises(ValueError):
        apply_averaging(tr, v)


@pytest.mark.parametrize("k,q", [(1, 0), (1, 3), (2, 0), (2, 1), (2, 3)])
def test_monomial_count(k, q):
    exps = monomial_exponents(k, q)
    assert len(exps) == math.comb(q + k, k)
    assert len(set(exps)) == len(exps)
    assert exps[0] == (0,) * k


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 20), q=st.integers(0, 2), seed=st.integers(0, 2**31 - 1))
def test_trace_basis_orthonormal_and_reproducing(n, q, seed):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1, 1, size=(n, 2))
    d = rng.uniform(0.5, 3.0, size=n)
    if math.comb(q + 2, 2) >= n:
        with pytest.raises(ConfigurationError):
            face_trace_basis(xi, d, q)
        return
    P = face_trace_basis(xi, d, q)
    assert np.allclose(P.T @ (d[:, None] * P), np.eye(P.shape[1]), atol=1e-10)
    # Q_F reproduces every monomial of degree <= q and is idempotent
    for e in monomial_exponents(2, q):
        v = xi[:, 0] ** e[0] * xi[:, 1] ** e[1]
        assert np.allclose(apply_QF(P, d, v), v, atol=1e-9)
    w = rng.standard_normal(n)
    Qw = apply_QF(P, d, w)
    assert np.allclose(apply_QF(P, d, Qw), Qw, atol=1e-10)


def test_full_trace_is_identity_projection():
    d = np.array([1.0, 2.0, 4.0])
    P = face_trace_basis(np.zeros((3, 1)), d, FULL_TRACE)
    v = np.array([3.0, -1.0, 2.0])
    assert np.allclose(apply_QF(P, d, v), v)


def test_rank_deficient_points_warn():
    xi = np.zeros((5, 2))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        P = face_trace_basis(xi, np.ones(5), 1)
    assert P.shape[1] == 1
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_constant_basis_fast_path_matches_general(small3d):
    pb = small3d
    fast = pb.basis
    slow = build_face_trace_bases(pb.mesh, pb.layout, pb.topo, pb.clone, pb.system.D,
                                  [0] * pb.clone.n_F, pb.system.free_dofs)
    assert np.array_equal(fast.m, slow.m)
    assert np.allclose(fast.P_values, slow.P_values, rtol=1e-13)


def test_overconstrained_face_rejected(pipeline):
    # 1-cell blocks in 2D with p = 1: interior Faces carry a single bdof
    with pytest.raises(ConfigurationError):
        pipeline(2, (3, 3), (1, 1), p=1, q=0)
    with pytest.raises(ConfigurationError):
        pipeline(2, (4, 4), (2, 2), p=1, q=2)
