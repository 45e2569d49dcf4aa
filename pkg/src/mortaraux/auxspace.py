"""Additive and multiplicative auxiliary space preconditioners for A.

The auxiliary space is the Element-discontinuous space of edofs; residuals
move there with Pi^T and corrections come back with Pi (the per-dof average).
The auxiliary operator is any object with ``apply_ee(g_e)`` returning the
edof part of the mortar solve with right-hand side (g_e, 0, 0), for example
``mortar.CondensedInverse``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .smoother import ChebyshevSmoother

MODES = ("add", "mult")


class AuxiliaryInverse(Protocol):
    def apply_ee(self, g_e: np.ndarray) -> np.ndarray: ...


@dataclass
class AuxSpacePreconditioner:
    A: sp.csr_matrix
    smoother: ChebyshevSmoother
    Pi: sp.csr_matrix
    inner: AuxiliaryInverse
    mode: str = "mult"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"preconditioner mode must be one of {MODES}, got {self.mode!r}")
        if self.Pi.shape[0] != self.A.shape[0]:
            raise ConfigurationError("transfer and operator sizes differ")
        self.Pi = sp.csr_matrix(self.Pi)
        self._PiT = self.Pi.T.tocsr()

    def correction(self, r: np.ndarray) -> np.ndarray:
        """Pi B^{-1} Pi^T r restricted to the edof block."""
        return self.Pi @ self.inner.apply_ee(self._PiT @ r)

    def apply_add(self, r: np.ndarray) -> np.ndarray:
        return self.smoother.apply(r) + self.correction(r)

    def apply_mult(self, r: np.ndarray) -> np.ndarray:
        A, M = self.A, self.smoother
        v1 = M.apply(r)
        v2 = v1 + self.correction(r - A @ v1)
        # M is symmetric, so the post-smoother M^{-T} is M^{-1}
        return v2 + M.apply(r - A @ v2)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, float)
        if r.shape[0] != self.A.shape[0]:
            raise ValueError(f"residual has length {r.shape[0]}, expected {self.A.shape[0]}")
        return self.apply_add(r) if self.mode == "add" else self.apply_mult(r)

    __call__ = apply

    def apply_operator_form(self, r: np.ndarray) -> np.ndarray:
        """Closed-form B^{-1} r: Mbar^{-1} r plus the (projected) auxiliary correction.

        Mbar^{-1} = M^{-T}(M + M^T - A)M^{-1} = M^{-1} + M^{-T} - M^{-T} A M^{-1}.
        Used to cross-check the step-by-step ``apply``.
        """
        A, M = self.A, self.smoother
        Mr = M.apply(r)
        if self.mode == "add":
            return Mr + self.correction(r)
        mbar = 2.0 * Mr - M.apply(A @ Mr)
        c = self.correction(r - A @ Mr)
        return mbar + c - M.apply(A @ c)


def fictitious_preconditioner(Pi: sp.spmatrix, inner: AuxiliaryInverse):
    """r -> Pi B_ee^{-1} Pi^T r, without a smoother."""
    Pi = sp.csr_matrix(Pi)
    PiT = Pi.T.tocsr()

    def apply(r: np.ndarray) -> np.ndarray:
        return Pi @ inner.apply_ee(PiT @ np.asarray(r, float))

    return apply


class DenseEdofInverse:
    """Wrap a dense or callable B_ee^{-1} on edofs as an auxiliary inverse."""

    def __init__(self, op):
        self.op = op

    def apply_ee(self, g_e: np.ndarray) -> np.ndarray:
        return self.op @ g_e if not callable(self.op) else self.op(g_e)
