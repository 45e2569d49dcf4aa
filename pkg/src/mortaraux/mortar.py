"""Modified mortar saddle-point system, local factorizations and static condensation.

Unknowns are ordered (edofs, multipliers, Bdofs). Multipliers come in one
block of length m_F per (Element, Face) pair, pairs sorted by (T, F); Bdofs
are the coarse trace unknowns ordered by (F, basis index). With this ordering
the leading 2x2 block is block diagonal over Elements, so everything except
the Schur complement solve is Element-local.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .assembly import LocalStiffness, _block_coords
from .clone import FULL_TRACE, CloneMap, FaceTraceBasis
from .errors import ConfigurationError, DataError, SingularElementError
from .mesh import _ptr_from_counts

log = logging.getLogger(__name__)


def _ragged_index(sizes):
    """For ragged blocks of ``sizes`` entries: owner block and offset of every entry."""
    total = int(np.sum(sizes))
    owner = np.repeat(np.arange(len(sizes)), sizes)
    start = _ptr_from_counts(sizes)[:-1]
    return owner, np.arange(total) - start[owner]


@dataclass
class MortarBlocks:
    """Sparse blocks of the mortar matrix

        [[A_ee, C^T,  0 ],
         [C,    0,   -X ],
         [0,   -X^T,  0 ]]

    plus the Element-local pieces needed to factor the leading 2x2 block.
    """

    local: LocalStiffness
    clone: CloneMap
    basis: FaceTraceBasis
    C: sp.csr_matrix
    X: sp.csr_matrix
    pair_T: np.ndarray
    pair_F: np.ndarray
    pair_side: np.ndarray
    mult_ptr: np.ndarray
    T_mult_ptr: np.ndarray
    T_B_ptr: np.ndarray
    T_B: np.ndarray
    Cloc_ptr: np.ndarray
    Cloc: np.ndarray
    f_e: np.ndarray
    _A_ee: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def n_T(self) -> int:
        return self.clone.n_T

    @property
    def n_edof(self) -> int:
        return self.clone.n_edof

    @property
    def n_mult(self) -> int:
        return int(self.mult_ptr[-1])

    @property
    def n_B(self) -> int:
        return self.basis.n_B

    @property
    def n_r(self) -> int:
        return self.n_edof + self.n_mult

    @property
    def n_total(self) -> int:
        return self.n_r + self.n_B

    def n_e(self, T: int) -> int:
        return int(self.clone.T_edof_ptr[T + 1] - self.clone.T_edof_ptr[T])

    def m_T(self, T: int) -> int:
        return int(self.T_mult_ptr[T + 1] - self.T_mult_ptr[T])

    @property
    def A_ee(self) -> sp.csr_matrix:
        """blockdiag(A_T) in edof numbering (built on first use)."""
        if self._A_ee is None:
            # edofs are the concatenated local dof lists, so block positions are edof ids
            rows, cols = _block_coords(self.local.dof_ptr, np.diff(self.local.dof_ptr))
            self._A_ee = sp.csr_matrix((self.local.values, (rows, cols)), shape=(self.n_edof,) * 2)
        return self._A_ee

    def A_local(self, T: int) -> np.ndarray:
        return self.local.matrix(T)

    def C_local(self, T: int) -> np.ndarray:
        return self.Cloc[self.Cloc_ptr[T]:self.Cloc_ptr[T + 1]].reshape(self.m_T(T), self.n_e(T))

    def X_local(self, T: int) -> np.ndarray:
        """X_T: multipliers of T x Bdofs of T (block diagonal of Gram blocks)."""
        rows = np.arange(self.T_mult_ptr[T], self.T_mult_ptr[T + 1])
        cols = self.T_B[self.T_B_ptr[T]:self.T_B_ptr[T + 1]]
        return self.X[rows][:, cols].toarray()

    def T_Bdofs(self, T: int) -> np.ndarray:
        return self.T_B[self.T_B_ptr[T]:self.T_B_ptr[T + 1]]

    def saddle_local(self, T: int) -> np.ndarray:
        """Dense [[A_T, C_T^T], [C_T, 0]]."""
        A = self.A_local(T)
        Ct = self.C_local(T)
        n, m = A.shape[0], Ct.shape[0]
        K = np.zeros((n + m, n + m))
        K[:n, :n] = A
        K[n:, :n] = Ct
        K[:n, n:] = Ct.T
        return K

    def matrix(self) -> sp.csr_matrix:
        """The full (symmetric indefinite) mortar matrix, for small instances."""
        return sp.bmat(
            [
                [self.A_ee, self.C.T, None],
                [self.C, None, -self.X],
                [None, -self.X.T, None],
            ],
            format="csr",
        ) if self.n_mult else self.A_ee.copy()

    def constraint_residual(self, v_e: np.ndarray, rho: Optional[np.ndarray] = None) -> np.ndarray:
        """C v - X rho (one-sided constraints); ``rho=None`` eliminates the Face unknowns."""
        if rho is None:
            return self.jump_residual(v_e)
        return self.C @ v_e - self.X @ rho

    def jump_residual(self, v_e: np.ndarray) -> np.ndarray:
        """P_F^T D_F (v_{T+}|_F - v_{T-}|_F) for every Face, stacked by Bdof."""
        cl = self.clone
        jump = v_e[cl.bdof_edof[:, 1]] - v_e[cl.bdof_edof[:, 0]]
        out = np.zeros(self.n_B)
        for F in range(cl.n_F):
            sl = slice(cl.F_bdof_ptr[F], cl.F_bdof_ptr[F + 1])
            out[self.basis.B_ptr[F]:self.basis.B_ptr[F + 1]] = self.basis.P(F).T @ (self.basis.D(F) * jump[sl])
        return out


def assemble_mortar_blocks(local: LocalStiffness, clone: CloneMap, basis: FaceTraceBasis,
                           dof_to_free: Optional[np.ndarray] = None) -> MortarBlocks:
    """Assemble C, X and the per-Element dense constraint blocks.

    ``local`` must be restricted to the free dofs; if ``dof_to_free`` is given
    its numbering is checked against the clone map.
    """
    if local.n_T != clone.n_T:
        raise ConfigurationError("local stiffness and clone map disagree on the number of Elements")
    if len(local.dofs) != clone.n_edof:
        raise ConfigurationError("local stiffness must be restricted to the free dofs")
    if dof_to_free is not None and not np.array_equal(dof_to_free[local.dofs], clone.edof_dof):
        raise ConfigurationError("local stiffness dof maps do not match the edof numbering")
    n_loc = np.diff(clone.F_bdof_ptr)
    if isinstance(basis.order, (int, np.integer)) and clone.n_F and np.any(basis.m >= n_loc):
        F = int(np.flatnonzero(basis.m >= n_loc)[0])
        raise ConfigurationError(
            f"Face {F} has {basis.m[F]} trace basis functions but only {n_loc[F]} bdofs (over-constrained)"
        )

    nF = clone.n_F
    pair_T = np.concatenate([clone.F_neighbors[:, 0], clone.F_neighbors[:, 1]]).astype(np.int64)
    pair_F = np.concatenate([np.arange(nF)] * 2).astype(np.int64)
    pair_side = np.repeat([0, 1], nF)
    o = np.lexsort((pair_F, pair_T))
    pair_T, pair_F, pair_side = pair_T[o], pair_F[o], pair_side[o]
    m_pair = basis.m[pair_F]
    mult_ptr = _ptr_from_counts(m_pair)
    T_mult_ptr = _ptr_from_counts(np.bincount(pair_T, weights=m_pair, minlength=clone.n_T).astype(np.int64))

    # C: rows (T,F,i), cols edofs of T on F, value P_F[k,i] * d_k
    cnt = n_loc[pair_F] * m_pair
    owner, j = _ragged_index(cnt)
    pf = pair_F[owner]
    mF = basis.m[pf]
    k, i = j // np.maximum(mF, 1), j % np.maximum(mF, 1)
    bdof = clone.F_bdof_ptr[pf] + k
    vals = basis.P_values[basis.P_ptr[pf] + k * mF + i] * basis.D_b[bdof]
    c_rows = mult_ptr[owner] + i
    c_cols = clone.bdof_edof[bdof, pair_side[owner]]
    C = sp.csr_matrix((vals, (c_rows, c_cols)), shape=(int(mult_ptr[-1]), clone.n_edof))

    # X: rows (T,F,i), cols Bdofs (F,j), value gram_F[i,j]
    owner, j = _ragged_index(m_pair * m_pair)
    pf = pair_F[owner]
    mF = basis.m[pf]
    i, jj = j // np.maximum(mF, 1), j % np.maximum(mF, 1)
    X = sp.csr_matrix(
        (basis.gram[basis.G_ptr[pf] + i * mF + jj], (mult_ptr[owner] + i, basis.B_ptr[pf] + jj)),
        shape=(int(mult_ptr[-1]), basis.n_B),
    )

    # Bdofs of each Element, in pair order
    T_B_ptr = T_mult_ptr.copy()
    owner, j = _ragged_index(m_pair)
    T_B = basis.B_ptr[pair_F[owner]] + j

    # ragged dense C_T
    n_e = np.diff(clone.T_edof_ptr)
    m_T = np.diff(T_mult_ptr)
    Cloc_ptr = _ptr_from_counts(m_T * n_e)
    rT = pair_T[np.searchsorted(mult_ptr, c_rows, side="right") - 1]
    pos = Cloc_ptr[rT] + (c_rows - T_mult_ptr[rT]) * n_e[rT] + (c_cols - clone.T_edof_ptr[rT])
    Cloc = np.bincount(pos, weights=vals, minlength=int(Cloc_ptr[-1]))

    return MortarBlocks(
        local=local,
        clone=clone,
        basis=basis,
        C=C,
        X=X,
        pair_T=pair_T,
        pair_F=pair_F,
        pair_side=pair_side,
        mult_ptr=mult_ptr,
        T_mult_ptr=T_mult_ptr,
        T_B_ptr=T_B_ptr,
        T_B=T_B.astype(np.int64),
        Cloc_ptr=Cloc_ptr,
        Cloc=Cloc,
        f_e=local.loads.copy(),
    )


# --------------------------------------------------------------------------- local factorizations


@dataclass
class SaddleGroup:
    """Elements sharing the local sizes (n_e, m); ``inv`` is stacked (g, n, n)."""

    elements: np.ndarray
    n_e: int
    m: int
    idx: np.ndarray
    inv: np.ndarray


@dataclass
class LocalSaddleFactor:
    """Inverses of the local saddle matrices [[A_T, C_T^T], [C_T, 0]].

    Each matrix is factored with the Bunch-Kaufman LDL^T of LAPACK (sytrf);
    the explicit inverse is then formed from the factors so that all Elements
    of equal size can be applied in one batched product.
    """

    groups: list
    rcond: np.ndarray
    n_r: int
    element_group: np.ndarray
    element_pos: np.ndarray

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Apply the block-diagonal inverse to a vector over (edofs, multipliers)."""
        r = np.asarray(r, float)
        out = np.zeros_like(r)
        for g in self.groups:
            out[g.idx] = np.matmul(g.inv, r[g.idx][..., None])[..., 0]
        return out

    def inverse(self, T: int) -> np.ndarray:
        return self.groups[self.element_group[T]].inv[self.element_pos[T]]


def factor_local_saddles(blocks: MortarBlocks, rcond_tol: float = 1e-13) -> LocalSaddleFactor:
    """Factor every local saddle matrix; raise SingularElementError on failure."""
    n_T = blocks.n_T
    n_e = np.diff(blocks.clone.T_edof_ptr)
    m_T = np.diff(blocks.T_mult_ptr)
    keys = n_e * (int(m_T.max(initial=0)) + 1) + m_T
    uniq, grp = np.unique(keys, return_inverse=True)
    groups = []
    element_pos = np.zeros(n_T, dtype=np.int64)
    for gi in range(len(uniq)):
        Ts = np.flatnonzero(grp == gi)
        ne, m = int(n_e[Ts[0]]), int(m_T[Ts[0]])
        e0 = blocks.clone.T_edof_ptr[Ts][:, None] + np.arange(ne)[None, :]
        m0 = blocks.n_edof + blocks.T_mult_ptr[Ts][:, None] + np.arange(m)[None, :]
        groups.append(SaddleGroup(Ts, ne, m, np.concatenate([e0, m0], axis=1),
                                  np.empty((len(Ts), ne + m, ne + m))))
        element_pos[Ts] = np.arange(len(Ts))

    rcond = np.empty(n_T)
    for T in range(n_T):
        K = blocks.saddle_local(T)
        n = K.shape[0]
        g = groups[grp[T]]
        if n == 0:
            rcond[T] = 1.0
            continue
        lu, piv, info = lapack.dsytrf(K, lower=1)
        if info > 0:
            raise SingularElementError(T, 0.0)
        rc, _ = lapack.dsycon(lu, piv, np.abs(K).sum(axis=0).max(), lower=1)
        rcond[T] = rc
        if rc < rcond_tol:
            raise SingularElementError(T, rc)
        inv, info = lapack.dsytrs(lu, piv, np.eye(n), lower=1)
        g.inv[element_pos[T]] = 0.5 * (inv + inv.T)
    return LocalSaddleFactor(groups=groups, rcond=rcond, n_r=blocks.n_r,
                             element_group=grp.astype(np.int64), element_pos=element_pos)


def local_schur(factors: LocalSaddleFactor, X_T: np.ndarray, T: int) -> np.ndarray:
    """Sigma_T = -X_T^T (inverse)_{mu mu} X_T for one Element."""
    g = factors.groups[factors.element_group[T]]
    Z = g.inv[factors.element_pos[T]][g.n_e:, g.n_e:]
    return -X_T.T @ Z @ X_T


# --------------------------------------------------------------------------- Schur complement


@dataclass
class SchurComplement:
    """Local Sigma_T (ragged dense, over ``blocks.T_Bdofs(T)``) and assembled Sigma."""

    local_ptr: np.ndarray
    local_values: np.ndarray
    T_B_ptr: np.ndarray
    matrix: sp.csr_matrix

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def local(self, T: int) -> np.ndarray:
        n = int(self.T_B_ptr[T + 1] - self.T_B_ptr[T])
        return self.local_values[self.local_ptr[T]:self.local_ptr[T + 1]].reshape(n, n)


def assemble_schur(factors: LocalSaddleFactor, blocks: MortarBlocks) -> SchurComplement:
    """Form every Sigma_T from the local inverses and assemble Sigma Element by Element."""
    m_T = np.diff(blocks.T_B_ptr)
    local_ptr = _ptr_from_counts(m_T * m_T)
    values = np.empty(int(local_ptr[-1]))
    identity = _identity_gram(blocks)
    for g in factors.groups:
        if g.m == 0:
            continue
        Z = g.inv[:, g.n_e:, g.n_e:]
        Xs = None if identity else np.stack([blocks.X_local(T) for T in g.elements])
        S = -Z if Xs is None else -np.matmul(np.transpose(Xs, (0, 2, 1)), np.matmul(Z, Xs))
        S = 0.5 * (S + np.transpose(S, (0, 2, 1)))
        for a, T in enumerate(g.elements):
            values[local_ptr[T]:local_ptr[T + 1]] = S[a].ravel()
    rows, cols = _block_coords(blocks.T_B_ptr, m_T)
    Sigma = sp.csr_matrix((values, (blocks.T_B[rows], blocks.T_B[cols])), shape=(blocks.n_B,) * 2)
    Sigma.sum_duplicates()
    Sigma.sort_indices()
    return SchurComplement(local_ptr=local_ptr, local_values=values, T_B_ptr=blocks.T_B_ptr, matrix=Sigma)


def _identity_gram(blocks: MortarBlocks) -> bool:
    # X_T blocks are Gram matrices of D_F-orthonormal bases; skip the products when exact
    g = blocks.basis
    if not g.n_F:
        return True
    ref = {int(m): np.eye(m).ravel() for m in np.unique(g.m)}
    return all(
        np.allclose(g.gram[g.G_ptr[F]:g.G_ptr[F + 1]], ref[int(g.m[F])], rtol=0, atol=1e-14)
        for F in range(g.n_F)
    )


# --------------------------------------------------------------------------- Schur solvers


class ExactSchurSolver:
    """Sparse symmetric factorization of Sigma with an SPD check.

    SuperLU is run without numerical pivoting on a symmetric fill-reducing
    ordering, which makes it a (square-root free) Cholesky: the pivots are the
    diagonal of D in Sigma = L D L^T and must all be positive.
    """

    name = "exact"

    def __init__(self, Sigma: sp.spmatrix):
        Sigma = sp.csc_matrix(Sigma)
        self.n = Sigma.shape[0]
        self._lu = None
        if self.n == 0:
            return
        self._lu = spla.splu(
            Sigma,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
        pivots = self._lu.U.diagonal()
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c) or np.any(pivots <= 0):
            raise DataError("Schur complement is not symmetric positive definite")
        self.fill_nnz = int(self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        return self._lu.solve(np.asarray(b, float))


class InnerPCGSchurSolver:
    """A fixed number of PCG steps on Sigma, preconditioned by its Chebyshev smoother.

    CG with a fixed step count is not a linear map of the right-hand side,
    which is why the outer iteration should use the flexible update.
    """

    name = "pcg"

    def __init__(self, Sigma: sp.spmatrix, iterations: int = 2, nu: int = 2):
        from .smoother import ChebyshevSmoother

        if iterations < 1:
            raise ConfigurationError("inner PCG needs at least one iteration")
        self.Sigma = sp.csr_matrix(Sigma)
        self.iterations = int(iterations)
        self.smoother = ChebyshevSmoother(self.Sigma, nu) if self.Sigma.shape[0] else None

    def solve(self, b: np.ndarray) -> np.ndarray:
        from .krylov import fixed_pcg

        if self.Sigma.shape[0] == 0:
            return np.zeros(0)
        return fixed_pcg(self.Sigma, self.smoother.apply, b, self.iterations)


class ChebyshevSchurSolver:
    """S^{-1} = Chebyshev polynomial smoother of Sigma (a fixed SPD linear operator)."""

    name = "chebyshev"

    def __init__(self, Sigma: sp.spmatrix, nu: int = 2):
        from .smoother import ChebyshevSmoother

        self.Sigma = sp.csr_matrix(Sigma)
        self.smoother = ChebyshevSmoother(self.Sigma, nu) if self.Sigma.shape[0] else None

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.Sigma.shape[0] == 0:
            return np.zeros(0)
        return self.smoother.apply(b)


def make_schur_solver(Sigma, kind: str = "exact", iterations: int = 2, nu: int = 2):
    if kind == "exact":
        return ExactSchurSolver(Sigma)
    if kind == "pcg":
        return InnerPCGSchurSolver(Sigma, iterations, nu)
    if kind == "chebyshev":
        return ChebyshevSchurSolver(Sigma, nu)
    raise ConfigurationError(f"unknown Schur solver {kind!r}")


# --------------------------------------------------------------------------- block solves


class CondensedInverse:
    """Action of B_sc^{-1}: local eliminations around one Schur complement solve.

    With an exact Schur solver this is the exact inverse of the mortar matrix.
    """

    def __init__(self, blocks: MortarBlocks, factors: LocalSaddleFactor, schur_solver):
        self.blocks = blocks
        self.factors = factors
        self.schur = schur_solver
        self.X = blocks.X.tocsr()
        self.XT = blocks.X.T.tocsr()

    def apply(self, rhs: np.ndarray) -> np.ndarray:
        b = self.blocks
        rhs = np.asarray(rhs, float)
        if rhs.shape[0] != b.n_total:
            raise ValueError(f"right-hand side has length {rhs.shape[0]}, expected {b.n_total}")
        y = self.factors.solve(rhs[:b.n_r])
        # g_b - Y y with Y = [0, -X^T]
        z = self.schur.solve(rhs[b.n_r:] + self.XT @ y[b.n_edof:])
        back = np.zeros(b.n_r)
        back[b.n_edof:] = self.X @ z
        x_r = y + self.factors.solve(back)
        return np.concatenate([x_r, z])

    def apply_ee(self, g_e: np.ndarray) -> np.ndarray:
        """Edof part of the action on (g_e, 0, 0)."""
        b = self.blocks
        r = np.zeros(b.n_r)
        r[:b.n_edof] = g_e
        y = self.factors.solve(r)
        z = self.schur.solve(self.XT @ y[b.n_edof:])
        back = np.zeros(b.n_r)
        back[b.n_edof:] = self.X @ z
        return (y + self.factors.solve(back))[:b.n_edof]


def apply_cA_inverse(blocks: MortarBlocks, factors: LocalSaddleFactor, schur_solver, rhs) -> np.ndarray:
    return CondensedInverse(blocks, factors, schur_solver).apply(rhs)


def oc_metrics(A, Sigma, hierarchy: Sequence = ()):
    """Operator complexities (OC_m, OC_aux, OC_orig); ``hierarchy`` lists coarse Sigma^l."""
    nnz_A = sp.csr_matrix(A).nnz
    nnz_S = sp.csr_matrix(Sigma).nnz if Sigma is not None else 0
    oc_m = 1.0 + nnz_S / nnz_A
    oc_aux = 1.0 + (sum(sp.csr_matrix(S).nnz for S in hierarchy) / nnz_S if nnz_S else 0.0)
    oc_orig = 1.0 + oc_aux * (oc_m - 1.0)
    return oc_m, oc_aux, oc_orig
