import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mortaraux.errors import IndefiniteOperatorError
from mortaraux.krylov import fixed_pcg, lanczos_estimates, pcg


def _lap1d(n):
    return sp.csr_matrix(sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n)))


def test_exact_preconditioner_one_iteration(rng):
    A = _lap1d(30)
    Ainv = np.linalg.inv(A.toarray())
    f = rng.standard_normal(30)
    x, rep = pcg(A, lambda r: Ainv @ r, f)
    assert rep.n_it == 1 and rep.converged
    assert np.allclose(x, Ainv @ f)
    assert rep.lmin == pytest.approx(1.0, abs=1e-8) and rep.lmax == pytest.approx(1.0, abs=1e-8)


def test_stopping_measure_and_history(rng):
    A = _lap1d(50)
    f = rng.standard_normal(50)
    _, rep = pcg(A, lambda r: r / 2.0, f, tol=1e-8)
    assert rep.converged
    assert rep.history[-1] <= 1e-16 * rep.history[0]
    assert all(h > 1e-16 * rep.history[0] for h in rep.history[:-1])
    assert len(rep.history) == rep.n_it + 1


def test_ritz_values_converge_to_spectrum():
    lam = np.arange(1.0, 21.0)
    A = sp.diags(lam, format="csr")
    _, rep = pcg(A, lambda r: r, np.ones(20), tol=1e-14)
    assert rep.lmin == pytest.approx(1.0, rel=1e-8)
    assert rep.lmax == pytest.approx(20.0, rel=1e-8)
    assert rep.condition == pytest.approx(20.0, rel=1e-8)


def test_energy_error_monotone(rng):
    A = _lap1d(40) + sp.diags(rng.uniform(0, 1, 40))
    Ad = A.toarray()
    f = rng.standard_normal(40)
    xs = np.linalg.solve(Ad, f)
    errs = []
    pcg(A, lambda r: r / Ad.diagonal(), f, callback=lambda x: errs.append((x - xs) @ Ad @ (x - xs)))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(errs, errs[1:]))


def test_indefinite_matrix_detected():
    A = sp.diags([1.0, -1.0, 2.0], format="csr")
    with pytest.raises(IndefiniteOperatorError):
        pcg(A, lambda r: r, np.array([1.0, 1.0, 1.0]))


def test_indefinite_preconditioner_detected():
    A = sp.eye(3, format="csr")
    with pytest.raises(IndefiniteOperatorError):
        pcg(A, lambda r: -r, np.ones(3))


def test_non_convergence_reported(rng):
    A = _lap1d(200)
    _, rep = pcg(A, lambda r: r, rng.standard_normal(200), max_it=5)
    assert not rep.converged and rep.n_it == 5


def test_zero_rhs():
    x, rep = pcg(sp.eye(4, format="csr"), lambda r: r, np.zeros(4))
    assert rep.n_it == 0 and rep.converged and not x.any()


def test_lanczos_unavailable_marker():
    lmin, lmax = lanczos_estimates([0.5, 0.4], [0.1], converged=False)
    assert np.isnan(lmin) and np.isnan(lmax)
    assert all(np.isnan(lanczos_estimates([], [])))


def test_fixed_pcg_is_exact_after_n_steps(rng):
    A = _lap1d(6)
    b = rng.standard_normal(6)
    assert np.allclose(fixed_pcg(A, lambda r: r, b, 6), np.linalg.solve(A.toarray(), b))
    x1 = fixed_pcg(A, lambda r: r, b, 1)
    alpha = (b @ b) / (b @ A @ b)
    assert np.allclose(x1, alpha * b)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 2**31 - 1))
def test_flexible_matches_standard_for_linear_preconditioner(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    A = sp.csr_matrix(G @ G.T + n * np.eye(n))
    d = A.diagonal()
    f = rng.standard_normal(n)
    x1, r1 = pcg(A, lambda r: r / d, f, tol=1e-10)
    x2, r2 = pcg(A, lambda r: r / d, f, tol=1e-10, flexible=True)
    assert r1.converged and r2.converged
    assert abs(r1.n_it - r2.n_it) <= 1
    xs = np.linalg.solve(A.toarray(), f)
    assert np.linalg.norm(x1 - xs) <= 1e-6 * np.linalg.norm(xs)
