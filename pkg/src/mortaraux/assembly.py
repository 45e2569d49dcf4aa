"""Conforming Q_p assembly of -div(kappa grad u) = f on structured meshes.

Local (per-Element) stiffness blocks are stored in a ragged dense buffer; the
global matrix is CSR. Essential boundary conditions are imposed by elimination.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DataError, GeometryError
from .mesh import AgglomerateTopology, DofLayout, StructuredMesh, _ptr_from_counts, gll_nodes


# --------------------------------------------------------------------------- coefficient


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise constant, positive coefficient, one value per fine cell."""

    values: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise DataError("coefficient must be finite and positive on every element")

    @classmethod
    def constant(cls, mesh: StructuredMesh, value: float = 1.0):
        return cls(np.full(mesh.n_cells, float(value)), "constant")

    @classmethod
    def checkerboard(cls, mesh: StructuredMesh, k: int, contrast: float):
        """kappa = contrast on the 'odd' squares of a k^d checkerboard of the box, 1 elsewhere."""
        x = mesh.cell_centroids() / np.asarray(mesh.extents)
        parity = np.floor(x * k).astype(int).sum(axis=1) % 2
        return cls(np.where(parity == 1, float(contrast), 1.0), f"checkerboard({k})")

    @classmethod
    def layers(cls, mesh: StructuredMesh, k: int, contrast: float, axis: int = -1):
        """k horizontal layers along ``axis``, alternating between 1 and contrast."""
        x = mesh.cell_centroids()[:, axis] / mesh.extents[axis]
        parity = np.floor(x * k).astype(int) % 2
        return cls(np.where(parity == 1, float(contrast), 1.0), f"layers({k})")

    @staticmethod
    def parse(pattern: str):
        """Split ``"constant"``, ``"checkerboard(k)"`` or ``"layers(k)"`` into (name, k)."""
        m = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*(\d+)\s*\))?\s*", str(pattern))
        if m is None:
            raise ConfigurationError(f"cannot parse coefficient pattern {pattern!r}")
        name, k = m.group(1), m.group(2)
        if name == "constant":
            return name, None
        if name in ("checkerboard", "layers"):
            k = int(k) if k is not None else 2
            if k < 1:
                raise ConfigurationError("pattern repetition count must be >= 1")
            return name, k
        raise ConfigurationError(f"unknown coefficient pattern {name!r}")

    @classmethod
    def from_spec(cls, mesh: StructuredMesh, pattern: str, contrast: float = 1.0):
        name, k = cls.parse(pattern)
        if name == "constant":
            return cls.constant(mesh, 1.0)
        return getattr(cls, name)(mesh, k, contrast)


# --------------------------------------------------------------------------- element level


def lagrange_1d(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the Lagrange basis on ``nodes`` at points ``x``.

    Returns arrays of shape (len(x), len(nodes)).
    """
    nodes = np.asarray(nodes, float)
    x = np.asarray(x, float)
    n = len(nodes)
    V = np.ones((len(x), n))
    dV = np.zeros((len(x), n))
    for j in range(n):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        terms = x[:, None] - others[None, :]
        V[:, j] = np.prod(terms, axis=1) / denom
        for m in range(n - 1):
            dV[:, j] += np.prod(np.delete(terms, m, axis=1), axis=1) / denom
    return V, dV


def element_stiffness(h, kappa: float, order: int, n_quad: Optional[int] = None):
    """Stiffness matrix and unit-source load of one axis-aligned box element.

    Parameters
    ----------
    h : sequence of float
        Edge lengths of the box (one per axis); the box Jacobian is diag(h).
    kappa : float
        Coefficient value on the element.
    order : int
        Polynomial degree p of the tensor-product Lagrange space (GLL nodes).
    n_quad : int, optional
        Gauss-Legendre points per axis, default p + 1 (exact for degree 2p + 1).

    Returns
    -------
    K : (n_loc, n_loc) ndarray
    load : (n_loc,) ndarray
        Integral of each basis function times f = 1 (independent of kappa).
    """
    h = np.asarray(h, float)
    if np.any(h <= 0):
        raise GeometryError(f"non-positive Jacobian for element with edge lengths {h}")
    p = int(order)
    nq = p + 1 if n_quad is None else int(n_quad)
    xq, wq = np.polynomial.legendre.leggauss(nq)
    xq, wq = 0.5 * (xq + 1.0), 0.5 * wq
    V, dV = lagrange_1d(gll_nodes(p), xq)
    d = len(h)
    detJ = float(np.prod(h))

    def kron_all(mats):
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    W = kron_all([wq] * d) * detJ
    K = np.zeros(((p + 1) ** d,) * 2)
    for k in range(d):
        G = kron_all([dV / h[j] if j == k else V for j in range(d)])
        K += G.T @ (W[:, None] * G)
    load = kron_all([V] * d).T @ W
    # exact symmetry keeps every assembled matrix bitwise symmetric
    K = 0.5 * (K + K.T)
    return float(kappa) * K, load


# --------------------------------------------------------------------------- global systems


@dataclass(frozen=True)
class AssembledSystem:
    """Global system over free dofs (or over all dofs before elimination).

    ``free_dofs[i]`` is the layout dof id of row i; ``dof_to_free`` is -1 for
    eliminated dofs.
    """

    A: sp.csr_matrix
    f: np.ndarray
    free_dofs: np.ndarray
    dof_to_free: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> np.ndarray:
        return self.A.diagonal()

    @property
    def W(self) -> np.ndarray:
        return weighted_l1_diagonal(self.A)


def _cell_matrices(mesh: StructuredMesh, layout: DofLayout):
    # uniform structured grid: one reference matrix scaled per cell
    K, load = element_stiffness(mesh.cell_size, 1.0, layout.order)
    return K, load


def assemble_global(mesh: StructuredMesh, layout: DofLayout, coef: CoefficientField) -> AssembledSystem:
    """Assemble A and f over all dofs, before boundary conditions."""
    K, load = _cell_matrices(mesh, layout)
    cd = layout.cell_dofs
    nl = cd.shape[1]
    rows = np.repeat(cd, nl, axis=1).ravel()
    cols = np.tile(cd, (1, nl)).ravel()
    vals = (coef.values[:, None, None] * K[None]).ravel()
    n = layout.n_dofs
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    f = np.bincount(cd.ravel(), weights=np.tile(load, len(cd)), minlength=n)
    return AssembledSystem(A=A, f=f, free_dofs=np.arange(n), dof_to_free=np.arange(n))


def apply_dirichlet(system: AssembledSystem, essential_dofs, allow_empty: bool = False) -> AssembledSystem:
    """Eliminate the rows and columns of homogeneous essential dofs."""
    n = system.n
    keep = np.ones(n, dtype=bool)
    keep[np.asarray(essential_dofs, dtype=np.int64)] = False
    free = np.flatnonzero(keep)
    if len(free) == 0 and not allow_empty:
        raise ConfigurationError("no free dofs remain after eliminating essential boundary dofs")
    A = system.A[free][:, free].tocsr()
    A.sort_indices()
    # compose with an earlier numbering, if any
    free_dofs = system.free_dofs[free]
    dof_to_free = np.full(len(system.dof_to_free), -1, dtype=np.int64)
    dof_to_free[free_dofs] = np.arange(len(free))
    return AssembledSystem(A=A, f=system.f[free], free_dofs=free_dofs, dof_to_free=dof_to_free)


def weighted_l1_diagonal(A) -> np.ndarray:
    """w_i = sum_j |a_ij| sqrt(a_ii / a_jj); guarantees v^T A v <= v^T W v."""
    A = sp.csr_matrix(A)
    d = A.diagonal()
    if np.any(d <= 0):
        raise DataError("weighted l1 diagonal needs a strictly positive diagonal")
    coo = A.tocoo()
    s = np.sqrt(d)
    vals = np.abs(coo.data) * s[coo.row] / s[coo.col]
    return np.bincount(coo.row, weights=vals, minlength=A.shape[0])


def write_coo(M, path) -> None:
    """Dump a sparse or dense matrix as 'row col value' lines (header: rows cols nnz)."""
    M = sp.coo_matrix(M)
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for r, c, v in zip(M.row.tolist(), M.col.tolist(), M.data.tolist()):
            fh.write(f"{r} {c} {v!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        nr, nc, nnz = map(int, fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(nr, nc))


# --------------------------------------------------------------------------- Element level


@dataclass(frozen=True)
class LocalStiffness:
    """Dense A_T per Element with its local -> global dof map.

    ``dofs[dof_ptr[T]:dof_ptr[T+1]]`` are the (sorted) layout dof ids of T and
    ``values[blk_ptr[T]:blk_ptr[T+1]]`` the row-major dense block.
    """

    dof_ptr: np.ndarray
    dofs: np.ndarray
    blk_ptr: np.ndarray
    values: np.ndarray
    loads: np.ndarray

    @property
    def n_T(self) -> int:
        return len(self.dof_ptr) - 1

    def size(self, T: int) -> int:
        return int(self.dof_ptr[T + 1] - self.dof_ptr[T])

    def dof_map(self, T: int) -> np.ndarray:
        return self.dofs[self.dof_ptr[T]:self.dof_ptr[T + 1]]

    def matrix(self, T: int) -> np.ndarray:
        n = self.size(T)
        return self.values[self.blk_ptr[T]:self.blk_ptr[T + 1]].reshape(n, n)

    def load(self, T: int) -> np.ndarray:
        return self.loads[self.dof_ptr[T]:self.dof_ptr[T + 1]]

    def assemble(self, index_map: Optional[np.ndarray] = None, n: Optional[int] = None) -> sp.csr_matrix:
        """sum_T R_T^T A_T R_T with dofs renumbered through ``index_map``."""
        idx = self.dofs if index_map is None else index_map[self.dofs]
        n = int(idx.max()) + 1 if n is None else n
        sizes = np.diff(self.dof_ptr)
        rows, cols = _block_coords(self.dof_ptr, sizes)
        A = sp.csr_matrix((self.values, (idx[rows], idx[cols])), shape=(n, n))
        A.sum_duplicates()
        return A


def _block_coords(ptr, sizes):
    """Row/col positions (into the concatenated index array) of every ragged block entry."""
    total = int((sizes ** 2).sum())
    owner = np.repeat(np.arange(len(sizes)), sizes ** 2)
    start = _ptr_from_counts(sizes ** 2)[:-1]
    j = np.arange(total) - start[owner]
    s = sizes[owner]
    return ptr[owner] + j // s, ptr[owner] + j % s


def agglomerate_stiffness(
    mesh: StructuredMesh,
    layout: DofLayout,
    topo: AgglomerateTopology,
    coef: CoefficientField,
    keep: Optional[np.ndarray] = None,
) -> LocalStiffness:
    """Sum member element matrices into dense A_T in Element-local numbering.

    ``keep`` (boolean over layout dofs) restricts A_T to the kept dofs, i.e.
    applies the essential-dof elimination locally.
    """
    K, load = _cell_matrices(mesh, layout)
    cd = layout.cell_dofs
    nl = cd.shape[1]
    n_dofs = layout.n_dofs
    cell_T = topo.elements_to_T
    keep = np.ones(n_dofs, dtype=bool) if keep is None else np.asarray(keep, bool)

    # local dof sets: unique (T, dof) pairs with the dof kept
    key = (np.repeat(cell_T, nl) * n_dofs + cd.ravel())
    key = np.unique(key[keep[cd.ravel()]])
    T_of = key // n_dofs
    dofs = key % n_dofs
    sizes = np.bincount(T_of, minlength=topo.n_T)
    dof_ptr = _ptr_from_counts(sizes)
    blk_ptr = _ptr_from_counts(sizes ** 2)

    loc = np.searchsorted(key, np.repeat(cell_T, nl) * n_dofs + cd.ravel()).reshape(cd.shape)
    loc = loc - dof_ptr[cell_T][:, None]
    kept = keep[cd]
    s = sizes[cell_T]
    pos = blk_ptr[cell_T][:, None, None] + loc[:, :, None] * s[:, None, None] + loc[:, None, :]
    mask = kept[:, :, None] & kept[:, None, :]
    vals = coef.values[:, None, None] * K[None]
    values = np.bincount(pos[mask], weights=vals[mask], minlength=int(blk_ptr[-1]))
    lpos = (dof_ptr[cell_T][:, None] + loc)[kept]
    loads = np.bincount(lpos, weights=np.broadcast_to(load, cd.shape)[kept], minlength=len(dofs))
    return LocalStiffness(dof_ptr=dof_ptr, dofs=dofs, blk_ptr=blk_ptr, values=values, loads=loads)
