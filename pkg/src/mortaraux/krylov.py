"""Preconditioned conjugate gradients and Lanczos eigenvalue estimates."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import IndefiniteOperatorError


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # numpy's pairwise reduction is serial and independent of the BLAS thread count
    return float(np.add.reduce(a * b))


def lanczos_estimates(alphas, betas, converged: bool = True):
    """Extreme Ritz values of B^{-1}A from the PCG coefficients.

    ``alphas[j]`` are the step lengths and ``betas[j]`` the direction update
    factors (one fewer than alphas). Returns (nan, nan) when fewer than three
    steps were taken, unless the iteration converged (the Krylov space was
    then invariant and the Ritz values are exact).
    """
    a = np.asarray(alphas, float)
    b = np.asarray(betas, float)[: max(len(a) - 1, 0)]
    k = len(a)
    if k == 0 or (k < 3 and not converged):
        return float("nan"), float("nan")
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(np.abs(b)) / a[:-1]
    ev = eigh_tridiagonal(diag, off, eigvals_only=True)
    return float(ev[0]), float(ev[-1])


@dataclass
class SolveReport:
    """Outcome of one PCG solve. ``history`` holds r^T B^{-1} r, starting with r_0."""

    n_it: int
    converged: bool
    history: list
    alphas: list
    betas: list
    seconds: float
    tol: float
    max_it: int
    lmin: float = float("nan")
    lmax: float = float("nan")
    config: dict = field(default_factory=dict)

    @property
    def condition(self) -> float:
        return self.lmax / self.lmin if self.lmin > 0 else float("nan")

    @property
    def relative_residual(self) -> float:
        h0 = self.history[0] if self.history else 0.0
        return float(np.sqrt(self.history[-1] / h0)) if h0 > 0 else 0.0


def pcg(
    A,
    apply_B: Callable[[np.ndarray], np.ndarray],
    f: np.ndarray,
    tol: float = 1e-8,
    max_it: int = 500,
    x0: Optional[np.ndarray] = None,
    flexible: bool = False,
    callback: Optional[Callable[[np.ndarray], None]] = None,
    config: Optional[dict] = None,
):
    """Solve A u = f by PCG; stop once r^T B^{-1} r <= tol^2 r_0^T B^{-1} r_0.

    ``flexible=True`` uses the Polak-Ribiere direction update, which tolerates
    preconditioners that are not exactly linear (such as a fixed number of
    inner CG steps).

    Returns ``(u, SolveReport)``. Raises IndefiniteOperatorError on
    non-positive curvature or a negative preconditioned residual norm.
    """
    t0 = time.perf_counter()
    f = np.asarray(f, float)
    x = np.zeros_like(f) if x0 is None else np.array(x0, float, copy=True)
    r = f - A @ x if x0 is not None else f.copy()
    z = apply_B(r)
    rz = _dot(r, z)
    if rz < 0:
        raise IndefiniteOperatorError(f"preconditioner is indefinite: r^T B^-1 r = {rz:.3e}")
    history, alphas, betas = [rz], [], []
    target = tol * tol * rz
    p = z.copy()
    n_it = 0
    converged = rz == 0.0
    while not converged and n_it < max_it:
        Ap = A @ p
        pAp = _dot(p, Ap)
        if pAp <= 0:
            raise IndefiniteOperatorError(f"non-positive curvature p^T A p = {pAp:.3e} at iteration {n_it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        n_it += 1
        alphas.append(alpha)
        if callback is not None:
            callback(x)
        z_old = z
        z = apply_B(r)
        rz_new = _dot(r, z)
        if rz_new < 0:
            raise IndefiniteOperatorError(f"preconditioner is indefinite: r^T B^-1 r = {rz_new:.3e}")
        history.append(rz_new)
        if rz_new <= target:
            converged = True
            break
        beta = (rz_new - _dot(r, z_old)) / rz if flexible else rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    lmin, lmax = lanczos_estimates(alphas, betas, converged)
    report = SolveReport(
        n_it=n_it,
        converged=converged,
        history=history,
        alphas=alphas,
        betas=betas,
        seconds=time.perf_counter() - t0,
        tol=tol,
        max_it=max_it,
        lmin=lmin,
        lmax=lmax,
        config=dict(config or {}),
    )
    return x, report


def fixed_pcg(A, apply_M: Callable[[np.ndarray], np.ndarray], b: np.ndarray, iterations: int) -> np.ndarray:
    """Exactly ``iterations`` PCG steps from a zero guess (fewer only on an exact solve)."""
    b = np.asarray(b, float)
    x = np.zeros_like(b)
    r = b.copy()
    z = apply_M(r)
    rz = _dot(r, z)
    p = z.copy()
    for k in range(iterations):
        if rz <= 0.0:
            break
        Ap = A @ p
        pAp = _dot(p, Ap)
        if pAp <= 0:
            raise IndefiniteOperatorError(f"non-positive curvature in inner PCG: {pAp:.3e}")
        alpha = rz / pAp
        x += alpha * p
        if k == iterations - 1:
            break
        r -= alpha * Ap
        z = apply_M(r)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x
