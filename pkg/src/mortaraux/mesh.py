"""Structured quad/hex meshes, block agglomeration and Face derivation.

Everything here is index arithmetic on tensor-product grids. Cells are numbered
lexicographically (C order over ``cells_per_axis``), nodes likewise over the
node grid of shape ``p * n_k + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, TopologyError

ENTITY_NAMES = ("vertex", "edge", "face", "interior")


def gll_nodes(p: int) -> np.ndarray:
    """Gauss-Lobatto-Legendre nodes of order ``p`` mapped to [0, 1]."""
    if p == 1:
        return np.array([0.0, 1.0])
    inner = np.polynomial.legendre.Legendre.basis(p).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return 0.5 * (x + 1.0)


@dataclass(frozen=True)
class StructuredMesh:
    """Tensor-product mesh of the box ``[0, extents]``.

    ``faces`` holds the interior (d-1)-facets as pairs (lower cell, upper cell)
    along ``face_axis``; ``boundary_facets`` the cells owning the facets on the
    boundary, with their axis and side (0 = low, 1 = high).
    """

    dim: int
    cells_per_axis: tuple
    extents: tuple
    vertices: np.ndarray
    faces: np.ndarray
    face_axis: np.ndarray
    boundary_facets: np.ndarray
    boundary_axis: np.ndarray
    boundary_side: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def elements(self) -> np.ndarray:
        return np.arange(self.n_cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def cell_size(self) -> np.ndarray:
        return np.asarray(self.extents, float) / np.asarray(self.cells_per_axis)

    def cell_multi_index(self, cells=None) -> np.ndarray:
        cells = self.elements if cells is None else np.asarray(cells)
        return np.stack(np.unravel_index(cells, self.cells_per_axis), axis=-1)

    def cell_centroids(self) -> np.ndarray:
        return (self.cell_multi_index() + 0.5) * self.cell_size


@dataclass(frozen=True)
class DofLayout:
    """Nodal dof layout of order-``p`` Lagrange elements on a StructuredMesh.

    ``dof_T_incidence`` / ``dof_F_incidence`` are boolean sparse matrices
    (dofs x Elements, dofs x Faces); they are ``None`` until
    :func:`attach_topology` is called.
    """

    order: int
    grid_shape: tuple
    dof_coords: np.ndarray
    dof_entity_dim: np.ndarray
    cell_dofs: np.ndarray
    face_dofs: np.ndarray
    boundary_facet_dofs: np.ndarray
    essential_dofs: np.ndarray
    dof_T_incidence: Optional[sp.csr_matrix] = None
    dof_F_incidence: Optional[sp.csr_matrix] = None

    @property
    def n_dofs(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.essential_dofs] = False
        return mask

    def entity_of(self, dof: int) -> str:
        return ENTITY_NAMES[self.dof_entity_dim[dof]]


@dataclass(frozen=True)
class AgglomerateTopology:
    """Elements (agglomerates) and Faces (interfaces between Elements).

    Ragged relations are stored CSR-style as ``(ptr, indices)`` pairs.
    """

    elements_to_T: np.ndarray
    T_ptr: np.ndarray
    T_cells: np.ndarray
    F_ptr: np.ndarray
    F_faces: np.ndarray
    F_neighbors: np.ndarray
    TF_ptr: np.ndarray
    TF_faces: np.ndarray

    @property
    def n_T(self) -> int:
        return len(self.T_ptr) - 1

    @property
    def n_F(self) -> int:
        return len(self.F_neighbors)

    def T_members(self, T: int) -> np.ndarray:
        return self.T_cells[self.T_ptr[T]:self.T_ptr[T + 1]]

    def faces_F(self, F: int) -> np.ndarray:
        return self.F_faces[self.F_ptr[F]:self.F_ptr[F + 1]]

    def T_boundary_Faces(self, T: int) -> np.ndarray:
        return self.TF_faces[self.TF_ptr[T]:self.TF_ptr[T + 1]]


def _ptr_from_counts(counts) -> np.ndarray:
    ptr = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr


def build_structured_mesh(dim: int, cells_per_axis: Sequence[int], extents=None, order: int = 1):
    """Build a box mesh and the nodal dof layout of order ``order``.

    Returns
    -------
    (StructuredMesh, DofLayout)
    """
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    cells_per_axis = tuple(int(n) for n in cells_per_axis)
    if len(cells_per_axis) != dim or min(cells_per_axis) < 1:
        raise ConfigurationError(f"cells_per_axis must hold {dim} positive integers, got {cells_per_axis}")
    if int(order) != order or order < 1:
        raise ConfigurationError(f"polynomial order must be an integer >= 1, got {order}")
    p = int(order)
    extents = tuple(float(e) for e in (extents if extents is not None else (1.0,) * dim))
    if len(extents) != dim:
        raise ConfigurationError("extents must have one entry per axis")
    if min(extents) <= 0:
        raise ConfigurationError(f"extents must be positive, got {extents}")

    n = np.array(cells_per_axis)
    h = np.array(extents) / n
    cell_ids = np.arange(int(np.prod(n))).reshape(cells_per_axis)

    faces, face_axis = [], []
    bcells, baxis, bside = [], [], []
    for k in range(dim):
        lo = np.take(cell_ids, np.arange(n[k] - 1), axis=k).ravel()
        hi = np.take(cell_ids, np.arange(1, n[k]), axis=k).ravel()
        # ravel order of lo/hi differs from sorted order; sort by lower cell
        order_k = np.argsort(lo, kind="stable")
        faces.append(np.stack([lo[order_k], hi[order_k]], axis=1))
        face_axis.append(np.full(len(lo), k))
        for side, idx in ((0, 0), (1, n[k] - 1)):
            c = np.sort(np.take(cell_ids, idx, axis=k).ravel())
            bcells.append(c)
            baxis.append(np.full(len(c), k))
            bside.append(np.full(len(c), side))
    faces = np.concatenate(faces).reshape(-1, 2).astype(np.int64)
    face_axis = np.concatenate(face_axis).astype(np.int64)

    vgrid = np.meshgrid(*[np.linspace(0, extents[k], n[k] + 1) for k in range(dim)], indexing="ij")
    vertices = np.stack([g.ravel() for g in vgrid], axis=1)

    mesh = StructuredMesh(
        dim=dim,
        cells_per_axis=cells_per_axis,
        extents=extents,
        vertices=vertices,
        faces=faces,
        face_axis=face_axis,
        boundary_facets=np.concatenate(bcells).astype(np.int64),
        boundary_axis=np.concatenate(baxis).astype(np.int64),
        boundary_side=np.concatenate(bside).astype(np.int64),
    )

    # nodes
    grid_shape = tuple(int(p * nk + 1) for nk in n)
    ref = gll_nodes(p)
    axes = []
    for k in range(dim):
        i = np.arange(grid_shape[k])
        c = np.minimum(i // p, n[k] - 1)
        a = i - c * p
        axes.append(c * h[k] + ref[a] * h[k])
    cgrid = np.meshgrid(*axes, indexing="ij")
    dof_coords = np.stack([g.ravel() for g in cgrid], axis=1)

    node_multi = np.indices(grid_shape).reshape(dim, -1)
    on_plane = (node_multi % p == 0).sum(axis=0)
    entity_dim = dim - on_plane
    entity_dim[entity_dim == dim] = 3  # cell interior
    essential = np.zeros(node_multi.shape[1], dtype=bool)
    for k in range(dim):
        essential |= (node_multi[k] == 0) | (node_multi[k] == grid_shape[k] - 1)

    cell_multi = mesh.cell_multi_index()
    local = np.indices((p + 1,) * dim).reshape(dim, -1).T
    gmulti = cell_multi[:, None, :] * p + local[None, :, :]
    cell_dofs = np.ravel_multi_index(tuple(gmulti[..., k] for k in range(dim)), grid_shape)

    nface_loc = (p + 1) ** (dim - 1)
    face_dofs = np.empty((len(faces), nface_loc), dtype=np.int64)
    for k in range(dim):
        sel = np.flatnonzero(local[:, k] == p)
        m = face_axis == k
        face_dofs[m] = cell_dofs[faces[m, 0]][:, sel]
    bf_dofs = np.empty((len(mesh.boundary_facets), nface_loc), dtype=np.int64)
    for k in range(dim):
        for side in (0, 1):
            sel = np.flatnonzero(local[:, k] == side * p)
            m = (mesh.boundary_axis == k) & (mesh.boundary_side == side)
            bf_dofs[m] = cell_dofs[mesh.boundary_facets[m]][:, sel]

    layout = DofLayout(
        order=p,
        grid_shape=grid_shape,
        dof_coords=dof_coords,
        dof_entity_dim=entity_dim.astype(np.int8),
        cell_dofs=cell_dofs.astype(np.int64),
        face_dofs=face_dofs,
        boundary_facet_dofs=bf_dofs,
        essential_dofs=np.flatnonzero(essential),
    )
    return mesh, layout


def derive_faces(mesh: StructuredMesh, elements_to_T: np.ndarray):
    """Group the fine faces separating different Elements into Faces.

    Faces are keyed by the ordered neighbor pair (T-, T+) with T- < T+ and
    numbered in ascending pair order.

    Returns
    -------
    F_neighbors : (n_F, 2) int array
    F_ptr, F_faces : CSR-style list of fine face ids per Face
    """
    elements_to_T = np.asarray(elements_to_T, dtype=np.int64)
    if elements_to_T.shape != (mesh.n_cells,):
        raise TopologyError("elements_to_T must map every cell to an Element")
    n_T = int(elements_to_T.max()) + 1 if len(elements_to_T) else 0
    if elements_to_T.min() < 0 or len(np.unique(elements_to_T)) != n_T:
        raise TopologyError("Element ids must be contiguous integers starting at 0")

    tt = elements_to_T[mesh.faces]
    same = tt[:, 0] == tt[:, 1]
    # connectivity of each Element in the dual graph
    intra = mesh.faces[same]
    g = sp.coo_matrix(
        (np.ones(len(intra)), (intra[:, 0], intra[:, 1])), shape=(mesh.n_cells, mesh.n_cells)
    )
    _, labels = connected_components(g, directed=False)
    pairs = np.unique(np.stack([elements_to_T, labels], axis=1), axis=0)
    if len(pairs) != n_T:
        counts = np.bincount(pairs[:, 0], minlength=n_T)
        bad = np.flatnonzero(counts > 1)
        raise TopologyError(f"Elements {bad.tolist()} are not connected in the dual graph")

    cut = np.flatnonzero(~same)
    lo = np.minimum(tt[cut, 0], tt[cut, 1])
    hi = np.maximum(tt[cut, 0], tt[cut, 1])
    key = lo * n_T + hi
    order = np.lexsort((cut, key))
    key_sorted = key[order]
    uniq, start, counts = np.unique(key_sorted, return_index=True, return_counts=True)
    F_neighbors = np.stack([uniq // n_T, uniq % n_T], axis=1).astype(np.int64)
    return F_neighbors, _ptr_from_counts(counts), cut[order].astype(np.int64)


def _topology_from_map(mesh: StructuredMesh, elements_to_T: np.ndarray) -> AgglomerateTopology:
    F_neighbors, F_ptr, F_faces = derive_faces(mesh, elements_to_T)
    n_T = int(elements_to_T.max()) + 1
    order = np.argsort(elements_to_T, kind="stable")
    T_ptr = _ptr_from_counts(np.bincount(elements_to_T, minlength=n_T))

    TF_T = np.concatenate([F_neighbors[:, 0], F_neighbors[:, 1]])
    TF_F = np.concatenate([np.arange(len(F_neighbors))] * 2)
    o = np.lexsort((TF_F, TF_T))
    TF_ptr = _ptr_from_counts(np.bincount(TF_T, minlength=n_T))
    return AgglomerateTopology(
        elements_to_T=np.asarray(elements_to_T, dtype=np.int64),
        T_ptr=T_ptr,
        T_cells=order.astype(np.int64),
        F_ptr=F_ptr,
        F_faces=F_faces,
        F_neighbors=F_neighbors,
        TF_ptr=TF_ptr,
        TF_faces=TF_F[o].astype(np.int64),
    )


def agglomerate(mesh: StructuredMesh, elements_to_T) -> AgglomerateTopology:
    """Topology for an arbitrary cell -> Element map (used by tests and checkerboards)."""
    return _topology_from_map(mesh, np.asarray(elements_to_T, dtype=np.int64))


def agglomerate_structured(mesh: StructuredMesh, block_shape: Sequence[int]) -> AgglomerateTopology:
    """Agglomerate the mesh into axis-aligned blocks of ``block_shape`` cells."""
    block_shape = tuple(int(b) for b in block_shape)
    if len(block_shape) != mesh.dim or min(block_shape) < 1:
        raise ConfigurationError(f"block_shape must hold {mesh.dim} positive integers")
    n = mesh.cells_per_axis
    if any(nk % bk for nk, bk in zip(n, block_shape)):
        raise ConfigurationError(f"block_shape {block_shape} does not divide cells_per_axis {n}")
    nblocks = tuple(nk // bk for nk, bk in zip(n, block_shape))
    bmulti = mesh.cell_multi_index() // np.array(block_shape)
    e2T = np.ravel_multi_index(tuple(bmulti.T), nblocks)
    return _topology_from_map(mesh, e2T)


def attach_topology(layout: DofLayout, mesh: StructuredMesh, topo: AgglomerateTopology) -> DofLayout:
    """Return ``layout`` with dof/Element and dof/Face incidence filled in."""
    nl = layout.cell_dofs.shape[1]
    rows = layout.cell_dofs.ravel()
    cols = np.repeat(topo.elements_to_T, nl)
    dT = sp.csr_matrix(
        (np.ones(len(rows), dtype=bool), (rows, cols)), shape=(layout.n_dofs, topo.n_T)
    )
    dT.sum_duplicates()
    dT.data[:] = True

    face_of_F = np.repeat(np.arange(topo.n_F), np.diff(topo.F_ptr))
    fd = layout.face_dofs[topo.F_faces]
    rows = fd.ravel()
    cols = np.repeat(face_of_F, fd.shape[1])
    dF = sp.csr_matrix(
        (np.ones(len(rows), dtype=bool), (rows, cols)), shape=(layout.n_dofs, topo.n_F)
    )
    dF.sum_duplicates()
    dF.data[:] = True
    return replace(layout, dof_T_incidence=dT, dof_F_incidence=dF)


def kappa_diagnostic(layout: DofLayout) -> int:
    """Maximum number of Elements any dof belongs to."""
    if layout.dof_T_incidence is None:
        raise ConfigurationError("attach_topology() must be called first")
    if layout.n_dofs == 0:
        return 0
    return int(np.diff(layout.dof_T_incidence.indptr).max())


def dump_topology(topo: AgglomerateTopology, path=None) -> str:
    """Plain-text listing of Elements and Faces; written to ``path`` if given."""
    lines = [f"elements {topo.n_T}"]
    for T in range(topo.n_T):
        members = " ".join(map(str, topo.T_members(T)))
        faces = " ".join(map(str, topo.T_boundary_Faces(T)))
        lines.append(f"T {T} cells {members} Faces {faces}".rstrip())
    lines.append(f"faces {topo.n_F}")
    for F in range(topo.n_F):
        tm, tp = topo.F_neighbors[F]
        fine = " ".join(map(str, topo.faces_F(F)))
        lines.append(f"F {F} between {tm} {tp} fine {fine}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
