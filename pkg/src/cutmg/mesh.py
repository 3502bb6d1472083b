"""Nested simplicial triangulations of a box and standard P1 transfer."""
from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import factorial

import numpy as np
import scipy.sparse as sp

from .errors import AssumptionError, ConfigError


# red-refinement rules in local vertex numbering; index >= d+1 refers to the
# midpoint of the local edge EDGES[d][index - (d + 1)]
EDGES = {
    2: [(0, 1), (1, 2), (0, 2)],
    3: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
}
_M2 = {e: 3 + k for k, e in enumerate(EDGES[2])}
_M3 = {e: 4 + k for k, e in enumerate(EDGES[3])}
CHILDREN = {
    2: [
        (0, _M2[0, 1], _M2[0, 2]),
        (_M2[0, 1], 1, _M2[1, 2]),
        (_M2[0, 2], _M2[1, 2], 2),
        (_M2[0, 1], _M2[1, 2], _M2[0, 2]),
    ],
    # Bey's rule: keeps the Kuhn structure, children are congruent classes
    3: [
        (0, _M3[0, 1], _M3[0, 2], _M3[0, 3]),
        (_M3[0, 1], 1, _M3[1, 2], _M3[1, 3]),
        (_M3[0, 2], _M3[1, 2], 2, _M3[2, 3]),
        (_M3[0, 3], _M3[1, 3], _M3[2, 3], 3),
        (_M3[0, 1], _M3[0, 2], _M3[0, 3], _M3[1, 3]),
        (_M3[0, 1], _M3[0, 2], _M3[1, 2], _M3[1, 3]),
        (_M3[0, 2], _M3[0, 3], _M3[1, 3], _M3[2, 3]),
        (_M3[0, 2], _M3[1, 2], _M3[1, 3], _M3[2, 3]),
    ],
}


def signed_volumes(vertices, simplices):
    x = vertices[simplices]
    d = vertices.shape[1]
    return np.linalg.det(x[:, 1:] - x[:, :1]) / factorial(d)


def _orient(vertices, simplices):
    simplices = simplices.copy()
    neg = signed_volumes(vertices, simplices) < 0
    simplices[neg, 0], simplices[neg, 1] = simplices[neg, 1], simplices[neg, 0].copy()
    return simplices


def barycentric_gradients(x):
    """Gradients of the barycentric coordinates on simplices ``x`` (n, d+1, d).

    Returns an array of shape (n, d+1, d).
    """
    d = x.shape[-1]
    jac = np.swapaxes(x[..., 1:, :] - x[..., :1, :], -1, -2)  # columns = edges
    grads = np.empty(x.shape[:-2] + (d + 1, d))
    grads[..., 1:, :] = np.linalg.inv(jac)
    grads[..., 0, :] = -grads[..., 1:, :].sum(axis=-2)
    return grads


@dataclass
class MeshLevel:
    """A conforming simplicial triangulation, optionally refined from a parent."""

    vertices: np.ndarray  # (nv, d)
    simplices: np.ndarray  # (ne, d+1), positively oriented
    level: int = 0
    box: tuple = None
    # for level > 0: (nv, 2) coarse vertex pair; equal entries = coincident vertex
    parent_vertex: np.ndarray = None
    parent_elem: np.ndarray = None
    # vertex order used by the refinement rule (Bey's rule is order dependent)
    ordered: np.ndarray = field(default=None, repr=False)
    faces: np.ndarray = field(init=False, repr=False)
    face_elems: np.ndarray = field(init=False, repr=False)
    elem_faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.ordered is None:
            self.ordered = self.simplices
        self._build_faces()

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elems(self):
        return len(self.simplices)

    def _build_faces(self):
        d = self.dim
        local = list(combinations(range(d + 1), d))
        # face opposite local vertex k is local[d - k]
        all_faces = np.sort(self.simplices[:, local], axis=2).reshape(-1, d)
        faces, inverse = np.unique(all_faces, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        owners = np.full((len(faces), 2), -1, dtype=np.int64)
        elem_of = np.repeat(np.arange(self.n_elems), len(local))
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        owners[inv_sorted[first], 0] = elem_of[order[first]]
        owners[inv_sorted[~first], 1] = elem_of[order[~first]]
        self.faces = faces
        self.face_elems = owners
        self.elem_faces = inverse.reshape(self.n_elems, len(local))

    @property
    def volumes(self):
        return signed_volumes(self.vertices, self.simplices)

    @property
    def h(self):
        """Maximal simplex diameter."""
        x = self.vertices[self.simplices]
        d = self.dim
        diam = np.zeros(self.n_elems)
        for a, b in combinations(range(d + 1), 2):
            diam = np.maximum(diam, np.linalg.norm(x[:, a] - x[:, b], axis=1))
        return float(diam.max())

    @property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces[self.face_elems[:, 1] < 0].ravel()] = True
        return mask

    def gradients(self):
        return barycentric_gradients(self.vertices[self.simplices])

    def locate(self, points, tol=1e-12):
        """Element index and barycentric coordinates of each point.

        Raises ``ValueError`` for points outside the mesh.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x = self.vertices[self.simplices]
        grads = barycentric_gradients(x)
        elems = np.empty(len(points), dtype=np.int64)
        bary = np.empty((len(points), self.dim + 1))
        for k, p in enumerate(points):
            lam = np.einsum("ead,ed->ea", grads, p - x[:, 0])
            lam[:, 0] += 1.0
            inside = np.flatnonzero(lam.min(axis=1) >= -tol)
            if len(inside) == 0:
                raise ValueError(f"point {p} lies outside the mesh")
            e = inside[0]
            elems[k] = e
            bary[k] = lam[e]
        return elems, bary

    def dump(self, path):
        """Write a plaintext vertices/cells dump (debugging aid)."""
        with open(path, "w") as fh:
            fh.write(f"vertices {self.n_vertices} {self.dim}\n")
            np.savetxt(fh, self.vertices, fmt="%.17g")
            fh.write(f"cells {self.n_elems} {self.dim + 1}\n")
            np.savetxt(fh, self.simplices, fmt="%d")


def build_initial_mesh(box=((0.0, 2.0), (0.0, 2.0)), n0=4, dim=None):
    """Kuhn triangulation of an axis-aligned box with ``n0`` cells per axis."""
    box = tuple(tuple(float(c) for c in b) for b in box)
    if dim is None:
        dim = len(box)
    if dim not in (2, 3):
        raise ConfigError(f"dim must be 2 or 3, got {dim}")
    if len(box) != dim:
        raise ConfigError(f"box has {len(box)} axes but dim={dim}")
    if int(n0) != n0 or n0 < 2:
        raise ConfigError(f"n0 must be an integer >= 2, got {n0}")
    n0 = int(n0)

    axes = [np.linspace(lo, hi, n0 + 1) for lo, hi in box]
    grid = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([g.ravel() for g in grid])
    strides = np.array([(n0 + 1) ** (dim - 1 - k) for k in range(dim)])

    cells = np.stack(
        np.meshgrid(*[np.arange(n0)] * dim, indexing="ij"), axis=-1
    ).reshape(-1, dim)
    simplices = []
    for perm in permutations(range(dim)):
        corner = cells.copy()
        verts = [corner @ strides]
        for axis in perm:
            corner = corner.copy()
            corner[:, axis] += 1
            verts.append(corner @ strides)
        simplices.append(np.column_stack(verts))
    ordered = np.concatenate(simplices).astype(np.int64)
    return MeshLevel(
        vertices, _orient(vertices, ordered), level=0, box=box, ordered=ordered
    )


def refine_uniform(coarse):
    """Red refinement: 2**d children per simplex, nested by construction."""
    d = coarse.dim
    edges_local = EDGES[d]
    simp = coarse.ordered
    edge_pairs = np.sort(
        np.stack([simp[:, [a, b]] for a, b in edges_local], axis=1), axis=2
    )  # (ne, nedges, 2)
    uniq, inverse = np.unique(edge_pairs.reshape(-1, 2), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    nv0 = coarse.n_vertices
    mid_index = nv0 + inverse.reshape(len(simp), len(edges_local))

    # midpoints are computed once per unique edge from the parent coordinates
    mids = 0.5 * (coarse.vertices[uniq[:, 0]] + coarse.vertices[uniq[:, 1]])
    vertices = np.vstack([coarse.vertices, mids])
    parent_vertex = np.vstack(
        [np.column_stack([np.arange(nv0), np.arange(nv0)]), uniq]
    ).astype(np.int64)

    local = np.concatenate([simp, mid_index], axis=1)
    children = np.stack([local[:, list(c)] for c in CHILDREN[d]], axis=1)
    ordered = children.reshape(-1, d + 1).astype(np.int64)
    parent_elem = np.repeat(np.arange(len(simp)), len(CHILDREN[d]))
    return MeshLevel(
        vertices,
        _orient(vertices, ordered),
        level=coarse.level + 1,
        box=coarse.box,
        parent_vertex=parent_vertex,
        parent_elem=parent_elem,
        ordered=ordered,
    )


def build_hierarchy_meshes(box, n0, dim, levels):
    meshes = [build_initial_mesh(box, n0, dim)]
    for _ in range(levels):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


@dataclass
class StdSpace:
    """Continuous P1 space with zero trace on the box boundary."""

    mesh: MeshLevel
    dof_of_vertex: np.ndarray  # -1 on the boundary
    n_dofs: int

    @classmethod
    def from_mesh(cls, mesh):
        dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
        interior = ~mesh.boundary_vertices
        dof[interior] = np.arange(interior.sum())
        return cls(mesh, dof, int(interior.sum()))


def std_prolongation(fine_mesh, coarse_dof, fine_dof, coarse_member=None):
    """P1 interpolation from a coarse DOF set to a fine DOF set.

    ``coarse_dof``/``fine_dof`` map vertices to DOF indices (-1: no DOF).
    ``coarse_member`` marks coarse vertices that belong to the coarse support
    domain; members without a DOF (boundary vertices) contribute zero.  A fine
    DOF whose coarse parent lies outside the coarse support is an error.
    """
    coarse_dof = np.asarray(coarse_dof)
    fine_dof = np.asarray(fine_dof)
    if coarse_member is None:
        coarse_member = np.ones(len(coarse_dof), dtype=bool)
    pv = fine_mesh.parent_vertex
    if pv is None:
        raise ValueError("fine mesh has no parent map")
    rows = np.flatnonzero(fine_dof >= 0)
    a, b = pv[rows, 0], pv[rows, 1]
    missing = ~(coarse_member[a] & coarse_member[b])
    if missing.any():
        v = rows[np.flatnonzero(missing)[0]]
        raise AssumptionError(
            f"fine vertex {v} (level {fine_mesh.level}) has a coarse parent "
            f"outside the coarse extended domain"
        )
    same = a == b
    r, c, w = [], [], []
    # coincident vertices
    keep = same & (coarse_dof[a] >= 0)
    r.append(fine_dof[rows[keep]])
    c.append(coarse_dof[a[keep]])
    w.append(np.ones(keep.sum()))
    # edge midpoints
    for ends in (a, b):
        keep = ~same & (coarse_dof[ends] >= 0)
        r.append(fine_dof[rows[keep]])
        c.append(coarse_dof[ends[keep]])
        w.append(np.full(keep.sum(), 0.5))
    n_fine = int(fine_dof.max()) + 1 if (fine_dof >= 0).any() else 0
    n_coarse = int(coarse_dof.max()) + 1 if (coarse_dof >= 0).any() else 0
    p = sp.csr_matrix(
        (np.concatenate(w), (np.concatenate(r), np.concatenate(c))),
        shape=(n_fine, n_coarse),
    )
    p.sum_duplicates()
    p.sort_indices()
    return p
