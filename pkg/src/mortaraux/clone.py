"""Element- and Face-discontinuous spaces obtained by cloning dofs.

Every Element owns a copy (edof) of each free dof in its closure and every
Face owns a copy (bdof) of each free dof in its closure, so neither edofs nor
bdofs are shared between entities. The coarse trace space on a Face is spanned
by low-order monomials in Face-local coordinates.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GeometryError
from .mesh import AgglomerateTopology, DofLayout, StructuredMesh, _ptr_from_counts

FULL_TRACE = "full"


@dataclass(frozen=True)
class CloneMap:
    """Numbering of edofs (Element-major, then dof id) and bdofs (Face-major, then dof id).

    All dof ids here are *free* dof indices (rows of the reduced A).

    Attributes
    ----------
    edof_T, edof_dof : per-edof owner Element and free dof
    T_edof_ptr : edofs of T are ``T_edof_ptr[T]:T_edof_ptr[T+1]``
    J_ptr, J_edofs : CSR list of the edofs cloned from each free dof
    bdof_F, bdof_dof : per-bdof owner Face and free dof
    F_bdof_ptr : bdofs of F are ``F_bdof_ptr[F]:F_bdof_ptr[F+1]``
    bdof_edof : (n_bdof, 2) edof of the same dof in T- and T+ of the Face
    edof_is_s : True for edofs that map to at least one bdof
    """

    n_free: int
    edof_T: np.ndarray
    edof_dof: np.ndarray
    T_edof_ptr: np.ndarray
    J_ptr: np.ndarray
    J_edofs: np.ndarray
    bdof_F: np.ndarray
    bdof_dof: np.ndarray
    F_bdof_ptr: np.ndarray
    bdof_edof: np.ndarray
    edof_is_s: np.ndarray
    F_neighbors: np.ndarray

    @property
    def n_edof(self) -> int:
        return len(self.edof_T)

    @property
    def n_bdof(self) -> int:
        return len(self.bdof_F)

    @property
    def n_T(self) -> int:
        return len(self.T_edof_ptr) - 1

    @property
    def n_F(self) -> int:
        return len(self.F_bdof_ptr) - 1

    def J(self, l: int) -> np.ndarray:
        return self.J_edofs[self.J_ptr[l]:self.J_ptr[l + 1]]

    def J_sizes(self) -> np.ndarray:
        return np.diff(self.J_ptr)

    def T_edofs(self, T: int) -> np.ndarray:
        return np.arange(self.T_edof_ptr[T], self.T_edof_ptr[T + 1])

    def F_bdofs(self, F: int) -> np.ndarray:
        return np.arange(self.F_bdof_ptr[F], self.F_bdof_ptr[F + 1])


def build_clone_map(layout: DofLayout, topo: AgglomerateTopology, dof_to_free: np.ndarray) -> CloneMap:
    """Clone the free dofs into edofs and bdofs.

    ``dof_to_free`` maps layout dof ids to free indices (-1 for essential dofs).
    """
    if layout.dof_T_incidence is None:
        raise ConfigurationError("attach_topology() must be called before cloning")
    n_free = int((dof_to_free >= 0).sum())

    dT = layout.dof_T_incidence.tocoo()
    fd = dof_to_free[dT.row]
    keep = fd >= 0
    eT, edof_dof = dT.col[keep].astype(np.int64), fd[keep]
    o = np.lexsort((edof_dof, eT))
    eT, edof_dof = eT[o], edof_dof[o]
    T_edof_ptr = _ptr_from_counts(np.bincount(eT, minlength=topo.n_T))

    oj = np.argsort(edof_dof, kind="stable")
    J_ptr = _ptr_from_counts(np.bincount(edof_dof, minlength=n_free))

    dF = layout.dof_F_incidence.tocoo()
    fd = dof_to_free[dF.row]
    keep = fd >= 0
    bF, bdof_dof = dF.col[keep].astype(np.int64), fd[keep]
    o = np.lexsort((bdof_dof, bF))
    bF, bdof_dof = bF[o], bdof_dof[o]
    F_bdof_ptr = _ptr_from_counts(np.bincount(bF, minlength=topo.n_F))

    ekey = eT * n_free + edof_dof
    bdof_edof = np.empty((len(bF), 2), dtype=np.int64)
    for side in (0, 1):
        key = topo.F_neighbors[bF, side] * n_free + bdof_dof
        pos = np.searchsorted(ekey, key)
        if len(key) and (np.any(pos >= len(ekey)) or np.any(ekey[np.minimum(pos, len(ekey) - 1)] != key)):
            raise GeometryError("a Face dof is not contained in its adjacent Element")
        bdof_edof[:, side] = pos
    is_s = np.zeros(len(eT), dtype=bool)
    is_s[bdof_edof.ravel()] = True

    return CloneMap(
        n_free=n_free,
        edof_T=eT,
        edof_dof=edof_dof,
        T_edof_ptr=T_edof_ptr,
        J_ptr=J_ptr,
        J_edofs=oj.astype(np.int64),
        bdof_F=bF,
        bdof_dof=bdof_dof,
        F_bdof_ptr=F_bdof_ptr,
        bdof_edof=bdof_edof,
        edof_is_s=is_s,
        F_neighbors=topo.F_neighbors,
    )


# --------------------------------------------------------------------------- transfers


@dataclass(frozen=True)
class TransferOps:
    """Averaging Pi_{h,e} (edofs -> dofs) and injection I_{h,e} (dofs -> edofs)."""

    Pi: sp.csr_matrix
    I: sp.csr_matrix

    @property
    def Pi_H(self) -> sp.csr_matrix:
        # fine-scale edof space: the coarse prolongator is the identity
        return self.Pi


def build_transfer(clone: CloneMap) -> TransferOps:
    sizes = clone.J_sizes()
    e = np.arange(clone.n_edof)
    Pi = sp.csr_matrix(
        (1.0 / sizes[clone.edof_dof], (clone.edof_dof, e)), shape=(clone.n_free, clone.n_edof)
    )
    I = sp.csr_matrix((np.ones(clone.n_edof), (e, clone.edof_dof)), shape=(clone.n_edof, clone.n_free))
    return TransferOps(Pi=Pi, I=I)


def _check_len(v, n, what):
    v = np.asarray(v, float)
    if v.shape[0] != n:
        raise ValueError(f"{what} vector has length {v.shape[0]}, expected {n}")
    return v


def apply_averaging(transfer: TransferOps, v_e) -> np.ndarray:
    """Per-dof arithmetic mean of the edof values cloned from it."""
    return transfer.Pi @ _check_len(v_e, transfer.Pi.shape[1], "edof")


def apply_injection(transfer: TransferOps, v) -> np.ndarray:
    """Copy each dof value to all of its edofs."""
    return transfer.I @ _check_len(v, transfer.I.shape[1], "dof")


# --------------------------------------------------------------------------- coarse traces


@dataclass(frozen=True)
class FaceTraceBasis:
    """D_F-orthonormal coarse trace bases for all Faces, stored ragged.

    The basis of Face F is the (n_F x m_F) row-major block
    ``P_values[P_ptr[F]:P_ptr[F+1]]``; its Bdofs (coarse trace unknowns) are
    ``B_ptr[F]:B_ptr[F+1]``. ``gram`` holds P_F^T D_F P_F per Face (identity up
    to rounding after orthonormalization).
    """

    order: Union[int, str]
    m: np.ndarray
    n_loc: np.ndarray
    P_ptr: np.ndarray
    P_values: np.ndarray
    B_ptr: np.ndarray
    G_ptr: np.ndarray
    gram: np.ndarray
    D_b: np.ndarray
    F_bdof_ptr: np.ndarray

    @property
    def n_F(self) -> int:
        return len(self.m)

    @property
    def n_B(self) -> int:
        return int(self.B_ptr[-1])

    def P(self, F: int) -> np.ndarray:
        return self.P_values[self.P_ptr[F]:self.P_ptr[F + 1]].reshape(self.n_loc[F], self.m[F])

    def D(self, F: int) -> np.ndarray:
        return self.D_b[self.F_bdof_ptr[F]:self.F_bdof_ptr[F + 1]]

    def G(self, F: int) -> np.ndarray:
        m = self.m[F]
        return self.gram[self.G_ptr[F]:self.G_ptr[F + 1]].reshape(m, m)


def monomial_exponents(n_vars: int, q: int):
    """Exponent tuples of all monomials of total degree <= q, ordered by degree."""
    exps = [e for e in itertools.product(range(q + 1), repeat=n_vars) if sum(e) <= q]
    return sorted(exps, key=lambda e: (sum(e), tuple(-x for x in e)))


def face_trace_basis(xi: np.ndarray, d_F: np.ndarray, q, rank_tol: float = 1e-10):
    """Coarse trace basis on one Face.

    Parameters
    ----------
    xi : (n, k) array
        Face-local coordinates in [-1, 1] of the Face's bdofs.
    d_F : (n,) array
        Positive weights (diagonal of A at those dofs).
    q : int or "full"
        Total degree of the monomials, or the whole fine trace space.

    Returns
    -------
    P : (n, m) array with P^T diag(d_F) P = I
    """
    d_F = np.asarray(d_F, float)
    n = len(d_F)
    if q == FULL_TRACE:
        return np.diag(1.0 / np.sqrt(d_F))
    if int(q) < 0:
        return np.zeros((n, 0))
    exps = monomial_exponents(xi.shape[1], int(q))
    if len(exps) >= n:
        raise ConfigurationError(
            f"trace order {q} gives {len(exps)} basis functions on a Face with only {n} bdofs "
            "(over-constrained)"
        )
    V = np.ones((n, len(exps)))
    for j, e in enumerate(exps):
        for k, ek in enumerate(e):
            V[:, j] *= xi[:, k] ** ek
    s = np.sqrt(d_F)
    Q, R = np.linalg.qr(s[:, None] * V)
    r = np.abs(np.diag(R))
    if r.min() > rank_tol * r.max():
        # fix the sign so the constant column stays positive
        sign = np.where(np.diag(R) < 0, -1.0, 1.0)
        return (Q * sign) / s[:, None]
    U, sv, _ = np.linalg.svd(s[:, None] * V, full_matrices=False)
    keep = sv > rank_tol * sv[0]
    warnings.warn(
        f"trace basis of order {q} is rank deficient on a Face; reduced to {keep.sum()} columns",
        RuntimeWarning,
        stacklevel=2,
    )
    return U[:, keep] / s[:, None]


def apply_QF(P: np.ndarray, d_F: np.ndarray, v: np.ndarray) -> np.ndarray:
    """D_F-orthogonal projection P (P^T D P)^{-1} P^T D v onto range(P)."""
    if P.shape[1] == 0:
        return np.zeros_like(np.asarray(v, float))
    Dv = d_F * v if np.ndim(v) == 1 else d_F[:, None] * v
    G = P.T @ (d_F[:, None] * P)
    return P @ np.linalg.solve(G, P.T @ Dv)


def _face_local_coords(mesh, layout, topo, clone, F, coords):
    axes = np.unique(mesh.face_axis[topo.faces_F(F)])
    if len(axes) != 1:
        raise GeometryError(f"Face {F} is not planar; polynomial trace spaces need a planar Face")
    inplane = [k for k in range(mesh.dim) if k != axes[0]]
    closure = layout.face_dofs[topo.faces_F(F)].ravel()
    box = layout.dof_coords[closure][:, inplane]
    lo, hi = box.min(axis=0), box.max(axis=0)
    return 2.0 * (coords[:, inplane] - lo) / (hi - lo) - 1.0


def build_face_trace_bases(
    mesh: StructuredMesh,
    layout: DofLayout,
    topo: AgglomerateTopology,
    clone: CloneMap,
    D: np.ndarray,
    q,
    free_dofs: np.ndarray,
) -> FaceTraceBasis:
    """Trace bases for every Face with weights D_F taken from the diagonal of global A.

    ``q`` is a polynomial order (int), ``"full"`` for the complete fine trace
    space, or a per-Face sequence of either.
    """
    n_F = clone.n_F
    n_loc = np.diff(clone.F_bdof_ptr)
    D_b = np.asarray(D, float)[clone.bdof_dof]
    per_face = not (isinstance(q, (int, np.integer, str)))
    if not per_face and q != FULL_TRACE and int(q) < 0:
        raise ConfigurationError("trace order must be >= 0")

    if not per_face and q == 0:
        # one constant column per Face, vectorized
        m = np.ones(n_F, dtype=np.int64)
        if n_F and np.any(n_loc <= 1):
            raise ConfigurationError(
                "trace order 0 over-constrains a Face with a single bdof; use larger Elements"
            )
        tot = np.add.reduceat(D_b, clone.F_bdof_ptr[:-1]) if n_F else np.zeros(0)
        P_values = 1.0 / np.sqrt(np.repeat(tot, n_loc))
        gram = np.ones(n_F)
        P_ptr = clone.F_bdof_ptr.copy()
    else:
        blocks, grams, m = [], [], np.zeros(n_F, dtype=np.int64)
        coords = layout.dof_coords[free_dofs]
        for F in range(n_F):
            qF = q[F] if per_face else q
            sl = slice(clone.F_bdof_ptr[F], clone.F_bdof_ptr[F + 1])
            dF = D_b[sl]
            if qF == FULL_TRACE or int(qF) <= 0:
                xi = np.zeros((len(dF), mesh.dim - 1))
            else:
                xi = _face_local_coords(mesh, layout, topo, clone, F, coords[clone.bdof_dof[sl]])
            P = face_trace_basis(xi, dF, qF)
            m[F] = P.shape[1]
            blocks.append(P.ravel())
            grams.append((P.T @ (dF[:, None] * P)).ravel())
        P_values = np.concatenate(blocks) if blocks else np.zeros(0)
        gram = np.concatenate(grams) if grams else np.zeros(0)
        P_ptr = _ptr_from_counts(n_loc * m)
    return FaceTraceBasis(
        order=q if not per_face else "mixed",
        m=m,
        n_loc=n_loc,
        P_ptr=P_ptr,
        P_values=P_values,
        B_ptr=_ptr_from_counts(m),
        G_ptr=_ptr_from_counts(m * m),
        gram=gram,
        D_b=D_b,
        F_bdof_ptr=clone.F_bdof_ptr,
    )
