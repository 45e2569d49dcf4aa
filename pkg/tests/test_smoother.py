import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mortaraux.errors import ConfigurationError
from mortaraux.smoother import (
    ChebyshevSmoother,
    chebyshev_roots,
    clenshaw_apply,
    horner_apply,
    horner_exact,
    leja_order,
    p_nu,
    p_nu_chebyshev_coefficients,
    p_nu_exact_coefficients,
    p_nu_power_coefficients,
    power_iteration,
)


def _laplace_2d(n):
    T = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n))
    return sp.csr_matrix(sp.kron(T, sp.eye(n)) + sp.kron(sp.eye(n), T))


def _spectral_oracle(A, w):
    s = 1.0 / np.sqrt(w)
    lam, V = np.linalg.eigh(s[:, None] * A.toarray() * s[None, :])
    return s, lam, V


def test_roots_nu1():
    assert np.allclose(chebyshev_roots(1), [1.0, 0.75, 0.25, 0.25])
    numeric = np.sort(np.roots(p_nu_power_coefficients(1)[::-1]).real)
    assert np.allclose(numeric, [0.25, 0.25, 0.75, 1.0], atol=1e-6)


@pytest.mark.parametrize("nu", [1, 2, 3, 4, 5])
def test_root_count_and_normalization(nu):
    roots = chebyshev_roots(nu)
    assert len(roots) == 3 * nu + 1
    assert np.all(np.diff(roots) <= 0) and roots[0] == 1.0 and roots[-1] > 0
    assert horner_exact(p_nu_exact_coefficients(nu), 0.0) == 1.0
    assert p_nu(nu, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert len(p_nu_exact_coefficients(nu)) == 3 * nu + 2
    t = np.linspace(0, 1, 2001)
    product = np.prod([1 - t / r for r in roots], axis=0)
    assert np.allclose(product, p_nu(nu, t), atol=1e-13)
    assert np.all(np.abs(p_nu(nu, t)) <= 1 + 1e-12)


@pytest.mark.parametrize("nu", [1, 2])
def test_float_horner_agrees_for_low_degree(nu):
    t = np.linspace(0, 1, 101)
    c = p_nu_power_coefficients(nu)
    vals = np.array([horner_apply(c, lambda v, s=s: s * v, np.ones(1))[0] for s in t])
    assert np.allclose(vals, p_nu(nu, t), atol=1e-12)


@pytest.mark.parametrize("nu", [1, 2, 3, 4, 5])
def test_error_map_matches_horner(nu, rng):
    A = _laplace_2d(9)
    sm = ChebyshevSmoother(A, nu)
    s, lam, V = _spectral_oracle(A, sm.w)
    coeffs = p_nu_exact_coefficients(nu)
    p_lam = np.array([horner_exact(coeffs, x) for x in lam])
    e = rng.standard_normal(A.shape[0])
    ref = s * (V @ (p_lam * (V.T @ (e / s))))
    assert np.linalg.norm(sm.error_map(e) - ref) <= 1e-10 * np.linalg.norm(e)
    cl = clenshaw_apply(p_nu_chebyshev_coefficients(nu), sm.scaled_operator, e)
    assert np.linalg.norm(sm.error_map(e) - cl) <= 1e-10 * np.linalg.norm(e)


def test_lambda_max_bound_with_l1_weights():
    A = _laplace_2d(12)
    sm = ChebyshevSmoother(A, 2)
    _, lam, _ = _spectral_oracle(A, sm.w)
    assert lam[-1] <= 1 + 1e-8
    assert power_iteration(A, sm.w, 500) <= lam[-1] + 1e-12


def test_fixed_point_and_symmetry(rng):
    A = _laplace_2d(7)
    sm = ChebyshevSmoother(A, 4)
    x = rng.standard_normal(A.shape[0])
    assert np.allclose(sm.apply(A @ x, x), x, atol=1e-12)
    u, v = rng.standard_normal((2, A.shape[0]))
    assert abs(u @ sm(v) - v @ sm(u)) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)
    assert sm.n_sweeps == 13


def test_leja_order_is_a_permutation_starting_at_one():
    for nu in range(1, 6):
        roots = chebyshev_roots(nu)
        lj = leja_order(roots)
        assert lj[0] == 1.0
        assert np.array_equal(np.sort(lj), np.sort(roots))


def test_leja_order_keeps_smoother_symmetric(rng):
    A = _laplace_2d(10)
    u, v = rng.standard_normal((2, A.shape[0]))
    scale = np.linalg.norm(u) * np.linalg.norm(v)
    gaps = {}
    for order in ("leja", "decreasing"):
        sm = ChebyshevSmoother(A, 5, root_order=order)
        gaps[order] = abs(u @ sm(v) - v @ sm(u)) / scale
    assert gaps["leja"] <= 1e-13
    assert gaps["leja"] <= gaps["decreasing"]


def test_energy_contraction(rng):
    A = _laplace_2d(8)
    sm = ChebyshevSmoother(A, 3)
    for _ in range(100):
        e = rng.standard_normal(A.shape[0])
        e2 = sm.error_map(e)
        assert e2 @ A @ e2 <= e @ A @ e


def test_jacobi_variant(rng):
    A = _laplace_2d(6)
    sm = ChebyshevSmoother(A, 2, diagonal="jacobi")
    _, lam, _ = _spectral_oracle(A, sm.w)
    assert lam[-1] <= 1.0
    assert sm.b == pytest.approx(1.1 * np.linalg.eigvalsh(A.toarray() / 4.0).max(), rel=1e-3)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_invalid_degree(bad):
    with pytest.raises(ConfigurationError):
        chebyshev_roots(bad)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 15), nu=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_smoother_spd_on_random_spd(n, nu, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = sp.csr_matrix(G @ G.T + 0.1 * np.eye(n))
    sm = ChebyshevSmoother(A, nu)
    Minv = np.column_stack([sm(col) for col in np.eye(n)])
    assert np.allclose(Minv, Minv.T, atol=1e-8 * abs(Minv).max())
    assert np.linalg.eigvalsh(0.5 * (Minv + Minv.T)).min() > 0
