"""The unfitted P1 space: two-copy numbering, XFEM numbering and transforms.

Two-copy numbering: side-1 DOFs (interior vertices of the extended domain 1,
in vertex order) followed by side-2 DOFs.  XFEM numbering: one standard DOF per
interior vertex (vertex order), then one extended DOF per doubled vertex in
breadth-first order along the interface.

For a doubled vertex ``v`` of side ``i`` with standard coefficient ``c`` and
extended coefficient ``e``: ``u_i(v) = c`` and ``u_j(v) = c + e`` (j != i).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order


def vertex_graph(mesh, mask=None):
    """Vertex adjacency (edges of the triangulation) as a symmetric CSR matrix."""
    s = mesh.simplices
    d1 = s.shape[1]
    rows = np.repeat(s, d1, axis=1).ravel()
    cols = np.tile(s, (1, d1)).ravel()
    keep = rows != cols
    g = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])),
                      shape=(mesh.n_vertices,) * 2)
    if mask is not None:
        idx = np.flatnonzero(mask)
        g = g[idx][:, idx]
    g.data[:] = 1.0
    return g


def bfs_order(graph):
    """Breadth-first order over all components, each started at its lowest index."""
    n = graph.shape[0]
    seen = np.zeros(n, dtype=bool)
    order = []
    for start in range(n):
        if seen[start]:
            continue
        comp = breadth_first_order(graph, start, directed=False, return_predecessors=False)
        seen[comp] = True
        order.append(comp)
    return np.concatenate(order) if order else np.zeros(0, dtype=np.int64)


@dataclass
class CutSpace:
    mesh: object
    topo: object
    boundary: np.ndarray  # (nv,) bool
    vertex_side: np.ndarray  # (nv,) 0/1
    ext_vertex: np.ndarray  # (2, nv) bool
    full_index: np.ndarray  # (2, nv) two-copy index incl. boundary, -1 if absent
    tc_index: np.ndarray  # (2, nv) two-copy DOF index, -1 if absent/boundary
    doubled: np.ndarray  # (2, nv) bool, the sets V_1 / V_2
    std_dof: np.ndarray  # (nv,) XFEM standard DOF, -1 on the boundary
    ext_dof: np.ndarray  # (nv,) XFEM extended DOF, -1 if not doubled
    interface_vertices: np.ndarray  # doubled vertices in BFS order
    n_side: tuple
    n_full: int
    xfem_to_twocopy: sp.csr_matrix  # (n_tc, n_x)
    twocopy_to_xfem: sp.csr_matrix  # (n_x, n_tc)

    @property
    def n_dofs(self):
        return self.xfem_to_twocopy.shape[1]

    @property
    def n_std(self):
        return int((self.std_dof >= 0).sum())

    @property
    def m(self):
        return int(self.doubled[0].sum()), int(self.doubled[1].sum())

    @property
    def interface_idx(self):
        """XFEM indices of both DOFs at every doubled vertex, ascending."""
        v = self.interface_vertices
        return np.sort(np.concatenate([self.std_dof[v], self.ext_dof[v]]))

    def xfem_index(self, vertex, role):
        """Global XFEM index for ``role`` in {"standard", "extended"}."""
        idx = self.std_dof[vertex] if role == "standard" else self.ext_dof[vertex]
        if idx < 0:
            raise KeyError(f"vertex {vertex} carries no {role} DOF")
        return int(idx)

    def side_values(self, coeffs, boundary_values=None):
        """Nodal values of each side function, shape (2, nv); NaN off the extended domain.

        ``boundary_values`` (2, nv) supplies Dirichlet data; zero otherwise.
        """
        tc = self.xfem_to_twocopy @ np.asarray(coeffs, dtype=float)
        out = np.full((2,) + self.vertex_side.shape, np.nan)
        for s in range(2):
            present = self.ext_vertex[s]
            out[s, present] = 0.0
            bnd = present & self.boundary
            if boundary_values is not None:
                out[s, bnd] = boundary_values[s, bnd]
            inner = self.tc_index[s] >= 0
            out[s, inner] = tc[self.tc_index[s, inner]]
        return out

    def twocopy_from_side_values(self, values):
        """Inverse of :meth:`side_values` restricted to DOFs (two-copy vector)."""
        tc = np.zeros(self.xfem_to_twocopy.shape[0])
        for s in range(2):
            inner = self.tc_index[s] >= 0
            tc[self.tc_index[s, inner]] = values[s, inner]
        return tc

    def interpolate(self, func, boundary=False):
        """XFEM coefficients of the side-wise nodal interpolant of ``func(x, side)``."""
        vals = np.stack([func(self.mesh.vertices, s) for s in range(2)])
        return self.twocopy_to_xfem @ self.twocopy_from_side_values(vals)

    def boundary_values(self, func):
        vals = np.zeros((2, self.mesh.n_vertices))
        for s in range(2):
            mask = self.ext_vertex[s] & self.boundary
            vals[s, mask] = func(self.mesh.vertices[mask], s)
        return vals


def build_cut_space(mesh, topo):
    nv = mesh.n_vertices
    boundary = mesh.boundary_vertices
    side = topo.vertex_side()
    ext_vertex = np.zeros((2, nv), dtype=bool)
    for s in range(2):
        ext_vertex[s, mesh.simplices[topo.extended[s]].ravel()] = True

    full_index = np.full((2, nv), -1, dtype=np.int64)
    tc_index = np.full((2, nv), -1, dtype=np.int64)
    nfull = ntc = 0
    n_side = []
    for s in range(2):
        v = np.flatnonzero(ext_vertex[s])
        full_index[s, v] = nfull + np.arange(len(v))
        nfull += len(v)
        w = np.flatnonzero(ext_vertex[s] & ~boundary)
        tc_index[s, w] = ntc + np.arange(len(w))
        ntc += len(w)
        n_side.append(len(w))

    doubled = np.zeros((2, nv), dtype=bool)
    for s in range(2):
        doubled[s] = (side == s) & ext_vertex[1 - s] & ~boundary

    std_dof = np.full(nv, -1, dtype=np.int64)
    interior = ~boundary
    std_dof[interior] = np.arange(interior.sum())
    n_std = int(interior.sum())

    dmask = doubled[0] | doubled[1]
    dverts = np.flatnonzero(dmask)
    order = dverts[bfs_order(vertex_graph(mesh, dmask))]
    ext_dof = np.full(nv, -1, dtype=np.int64)
    ext_dof[order] = n_std + np.arange(len(order))
    n_x = n_std + len(order)

    # xfem -> two-copy
    rows, cols, vals = [], [], []
    for s in range(2):
        w = np.flatnonzero(tc_index[s] >= 0)
        rows.append(tc_index[s, w])
        cols.append(std_dof[w])
        vals.append(np.ones(len(w)))
        far = w[side[w] != s]  # side-s copy at a doubled vertex of the other side
        rows.append(tc_index[s, far])
        cols.append(ext_dof[far])
        vals.append(np.ones(len(far)))
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ntc, n_x))

    # two-copy -> xfem
    rows, cols, vals = [], [], []
    v = np.flatnonzero(interior)
    rows.append(std_dof[v])
    cols.append(tc_index[side[v], v])
    vals.append(np.ones(len(v)))
    rows += [ext_dof[order], ext_dof[order]]
    cols += [tc_index[1 - side[order], order], tc_index[side[order], order]]
    vals += [np.ones(len(order)), -np.ones(len(order))]
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_x, ntc))

    return CutSpace(
        mesh=mesh, topo=topo, boundary=boundary, vertex_side=side,
        ext_vertex=ext_vertex, full_index=full_index, tc_index=tc_index,
        doubled=doubled, std_dof=std_dof, ext_dof=ext_dof,
        interface_vertices=order, n_side=tuple(n_side), n_full=nfull,
        xfem_to_twocopy=M, twocopy_to_xfem=T,
    )


def eval_cut_function(space, coeffs, points, side=None, boundary_values=None):
    """Evaluate the side-``side`` function at points (side from the level set if None)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    elems, bary = mesh.locate(points)
    if side is None:
        side = space.topo.side_of_points(points)
    side = np.broadcast_to(np.asarray(side), (len(points),))
    vals = space.side_values(coeffs, boundary_values)
    nodal = vals[side[:, None], mesh.simplices[elems]]
    if np.isnan(nodal).any():
        raise ValueError("point evaluated on a side whose extended domain does not cover it")
    return np.einsum("pk,pk->p", bary, nodal)
