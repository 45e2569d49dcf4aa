"""Chebyshev polynomial smoother.

For nu >= 1 the smoother is defined through its error propagation
I - M^{-1} A = p_nu(W^{-1} A), with

    p_nu(t) = (1 - T_{2nu+1}(sqrt t)^2) * (-1)^nu / (2nu+1) * T_{2nu+1}(sqrt t) / sqrt t,

a polynomial of degree 3nu+1 with p_nu(0) = 1. Since p_nu is the product of
(1 - t/t_k) over its roots, M^{-1} is applied as 3nu+1 damped Jacobi sweeps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as C

from .assembly import weighted_l1_diagonal
from .errors import ConfigurationError, DataError


def _check_nu(nu: int) -> int:
    if int(nu) != nu or nu < 1:
        raise ConfigurationError(f"smoother degree parameter must be an integer >= 1, got {nu!r}")
    return int(nu)


def chebyshev_roots(nu: int) -> np.ndarray:
    """Roots of p_nu in decreasing order, repeated by multiplicity (3nu+1 values)."""
    nu = _check_nu(nu)
    n = 2 * nu + 1
    j = np.arange(1, nu + 1)
    simple = np.cos((2 * j - 1) * np.pi / (2 * n)) ** 2
    double = np.cos(j * np.pi / n) ** 2
    roots = np.concatenate([simple, [1.0], double, double])
    return np.sort(roots)[::-1]


def leja_order(roots) -> np.ndarray:
    """Reorder roots so each maximizes the product of distances to those already chosen.

    Starts from the largest root. Repeated roots are ordered in a second pass
    over the remaining copies, so every distinct root is swept once before any
    is repeated. The order is deterministic and keeps partial products of the
    sweep factors (1 - t/t_k) small, which limits rounding growth.
    """
    remaining = sorted((float(r) for r in roots), reverse=True)
    out = []
    while remaining:
        distinct, rest = [], []
        for r in remaining:
            (rest if distinct and r == distinct[-1] else distinct).append(r)
        chosen = [distinct.pop(0)]
        while distinct:
            scores = [np.prod([abs(r - c) for c in chosen]) for r in distinct]
            chosen.append(distinct.pop(int(np.argmax(scores))))
        out.extend(chosen)
        remaining = rest
    return np.array(out)


def p_nu(nu: int, t) -> np.ndarray:
    """Closed-form p_nu(t) on [0, 1] (trigonometric evaluation, stable for all nu)."""
    nu = _check_nu(nu)
    n = 2 * nu + 1
    t = np.asarray(t, float)
    x = np.sqrt(np.clip(t, 0.0, None))
    Tn = np.cos(n * np.arccos(np.clip(x, -1.0, 1.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(x > 0, Tn / np.where(x > 0, x, 1.0), n * (-1.0) ** nu)
    return (1.0 - Tn ** 2) * (-1.0) ** nu / n * ratio


def p_nu_power_coefficients(nu: int) -> np.ndarray:
    """Monomial coefficients of p_nu in t, lowest degree first."""
    nu = _check_nu(nu)
    n = 2 * nu + 1
    c = C.cheb2poly(np.eye(n + 1)[n])
    Q = Polynomial(c[1::2])  # T_n(x) = x Q(x^2)
    t = Polynomial([0.0, 1.0])
    return ((1 - t * Q ** 2) * Q * ((-1.0) ** nu / n)).coef


def p_nu_exact_coefficients(nu: int) -> list:
    """Monomial coefficients of p_nu in t as exact fractions, lowest degree first."""
    nu = _check_nu(nu)
    n = 2 * nu + 1
    prev, cur = [1], [0, 1]  # integer power coefficients of T_0, T_1
    for _ in range(n - 1):
        nxt = [0] + [2 * c for c in cur]
        for i, c in enumerate(prev):
            nxt[i] -= c
        prev, cur = cur, nxt
    Q = cur[1::2]
    tQ2 = [0] * (2 * len(Q))
    for i, a in enumerate(Q):
        for j, b in enumerate(Q):
            tQ2[i + j + 1] += a * b
    first = [1 - c if i == 0 else -c for i, c in enumerate(tQ2)]
    out = [Fraction(0)] * (len(first) + len(Q) - 1)
    scale = Fraction((-1) ** nu, n)
    for i, a in enumerate(first):
        for j, b in enumerate(Q):
            out[i + j] += scale * a * b
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def horner_exact(coeffs, t) -> float:
    """Horner's rule in exact rational arithmetic at a float point ``t``."""
    t = Fraction(float(t))
    y = Fraction(0)
    for c in reversed(coeffs):
        y = y * t + c
    return float(y)


def p_nu_chebyshev_coefficients(nu: int) -> np.ndarray:
    """Coefficients of p_nu in the basis T_k(2t - 1), obtained by interpolation."""
    nu = _check_nu(nu)
    deg = 3 * nu + 1
    return Chebyshev.interpolate(lambda t: p_nu(nu, t), deg, domain=[0.0, 1.0]).coef


def horner_apply(coeffs: np.ndarray, op: Callable, e: np.ndarray) -> np.ndarray:
    """sum_k coeffs[k] op^k e by Horner's rule."""
    y = coeffs[-1] * e
    for c in coeffs[-2::-1]:
        y = op(y) + c * e
    return y


def clenshaw_apply(coeffs: np.ndarray, op: Callable, e: np.ndarray) -> np.ndarray:
    """sum_k coeffs[k] T_k(2 op - I) e by Clenshaw's recurrence."""
    def S(v):
        return 2.0 * op(v) - v

    b1 = np.zeros_like(e)
    b2 = np.zeros_like(e)
    for c in coeffs[:0:-1]:
        b1, b2 = c * e + 2.0 * S(b1) - b2, b1
    return coeffs[0] * e + S(b1) - b2


def power_iteration(A, w: np.ndarray, iterations: int = 200, seed: int = 0) -> float:
    """Estimate lambda_max(W^{-1} A) on the symmetric form W^{-1/2} A W^{-1/2}."""
    n = A.shape[0]
    if n == 0:
        return 0.0
    s = 1.0 / np.sqrt(w)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        y = s * (A @ (s * v))
        lam = float(v @ y)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        v = y / nrm
    return lam


@dataclass
class ChebyshevSmoother:
    """M^{-1} with I - M^{-1}A = p_nu(W^{-1}A).

    ``diagonal="l1"`` uses the weighted l1 diagonal, for which b = 1 is valid.
    ``diagonal="jacobi"`` uses W = b D with b = 1.1 times a power-iteration
    estimate of lambda_max(D^{-1}A).

    ``root_order="leja"`` (default) sweeps the roots in Leja order;
    ``"decreasing"`` sweeps them largest first, which is mathematically the
    same operator but amplifies rounding by up to about 1e4 for nu >= 4.
    """

    A: sp.spmatrix
    nu: int = 4
    diagonal: str = "l1"
    b: float = field(default=1.0)
    w: Optional[np.ndarray] = None
    root_order: str = "leja"
    roots: np.ndarray = field(init=False)

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.nu = _check_nu(self.nu)
        if self.root_order == "leja":
            self.roots = leja_order(chebyshev_roots(self.nu))
        elif self.root_order == "decreasing":
            self.roots = chebyshev_roots(self.nu)
        else:
            raise ConfigurationError(f"unknown root order {self.root_order!r}")
        if self.w is None:
            if self.diagonal == "l1":
                self.w = weighted_l1_diagonal(self.A)
            elif self.diagonal == "jacobi":
                d = self.A.diagonal()
                if np.any(d <= 0):
                    raise DataError("Jacobi smoother needs a strictly positive diagonal")
                self.b = 1.1 * power_iteration(self.A, d)
                self.w = self.b * d
            else:
                raise ConfigurationError(f"unknown smoother diagonal {self.diagonal!r}")
        self._winv = 1.0 / self.w

    @property
    def n_sweeps(self) -> int:
        return len(self.roots)

    def apply(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        """Run all sweeps x <- x + W^{-1}(rhs - A x) / t_k; with x0 = 0 this is M^{-1} rhs."""
        rhs = np.asarray(rhs, float)
        if x0 is None:
            x = (self._winv / self.roots[0]) * rhs
            roots = self.roots[1:]
        else:
            x = np.array(x0, float, copy=True)
            roots = self.roots
        for t in roots:
            x += (self._winv / t) * (rhs - self.A @ x)
        return x

    __call__ = apply

    def error_map(self, e: np.ndarray) -> np.ndarray:
        """p_nu(W^{-1}A) e, computed by the sweeps themselves."""
        return self.apply(np.zeros_like(e, dtype=float), e)

    def scaled_operator(self, v: np.ndarray) -> np.ndarray:
        return self._winv * (self.A @ v)
