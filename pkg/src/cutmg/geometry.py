"""Level-set interfaces, cut-element geometry, extended domains and ghost faces.

Sign convention: ``phi < 0`` is subdomain 1 (index 0 in arrays), ``phi > 0``
subdomain 2 (index 1).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConfigError, GeometryError
from .mesh import barycentric_gradients, refine_uniform
from .quadrature import simplex_measure

NEG, POS, CUT = 0, 1, 2

# relative size of the zero-crossing guard
PERTURBATION = 1e-10
DEGENERATE = 1e-14


@dataclass(frozen=True)
class LevelSet:
    """Analytic level set: a plane ``x_1 = x_gamma`` or a sphere ``|x - m| = r``."""

    kind: str = "spherical"
    center: tuple = (1.03, 1.02)
    radius: float = 0.413
    x_gamma: float = 1.321

    def __post_init__(self):
        if self.kind not in ("planar", "spherical"):
            raise ConfigError(f"unknown interface kind {self.kind!r}")
        if self.kind == "spherical" and self.radius <= 0:
            raise ConfigError("radius must be positive")

    @classmethod
    def planar(cls, x_gamma=1.321):
        return cls(kind="planar", x_gamma=float(x_gamma))

    @classmethod
    def spherical(cls, center, radius):
        return cls(kind="spherical", center=tuple(float(c) for c in center),
                   radius=float(radius))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "planar":
            return x[..., 0] - self.x_gamma
        m = np.asarray(self.center)
        return np.sum((x - m) ** 2, axis=-1) - self.radius**2

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "planar":
            g = np.zeros_like(x)
            g[..., 0] = 1.0
            return g
        return 2.0 * (x - np.asarray(self.center))

    def gradient_sup(self, box):
        """Upper bound of ``|grad phi|`` over the box."""
        if self.kind == "planar":
            return 1.0
        corners = np.array(np.meshgrid(*box, indexing="ij")).reshape(len(box), -1).T
        return float(np.max(np.linalg.norm(self.gradient(corners), axis=1)))

    def distance(self, x):
        """Euclidean distance to the zero level."""
        x = np.asarray(x, dtype=float)
        if self.kind == "planar":
            return np.abs(x[..., 0] - self.x_gamma)
        return np.abs(np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius)


@dataclass
class NodalLevelSet:
    """Piecewise-linear level set on a mesh, or on its once-refined mesh (iso-P2)."""

    mesh: object
    values: np.ndarray  # at the vertices of ``mesh``
    fine_mesh: object = None
    fine_values: np.ndarray = None

    @property
    def iso_p2(self):
        return self.fine_mesh is not None

    def __call__(self, points):
        m, vals = (self.fine_mesh, self.fine_values) if self.iso_p2 else (self.mesh, self.values)
        elems, bary = m.locate(points)
        return np.einsum("pk,pk->p", bary, vals[m.simplices[elems]])


def _perturb(values, h, grad_sup):
    guard = PERTURBATION * h * grad_sup
    values = np.array(values, dtype=float)
    values[np.abs(values) < guard] = -guard
    return values


def interpolate_levelset(phi, mesh, iso_p2=False):
    """Nodal interpolant of ``phi`` (on the refined mesh when ``iso_p2``)."""
    box = mesh.box if mesh.box is not None else tuple(
        zip(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)))
    gsup = phi.gradient_sup(box)
    if not iso_p2:
        return NodalLevelSet(mesh, _perturb(phi(mesh.vertices), mesh.h, gsup))
    fine = refine_uniform(mesh)
    fine_values = _perturb(phi(fine.vertices), fine.h, gsup)
    # coarse vertices come first in the refined mesh
    return NodalLevelSet(mesh, fine_values[: mesh.n_vertices], fine, fine_values)


def _prism_tets(bottom, top):
    a0, a1, a2 = bottom
    b0, b1, b2 = top
    return [(a0, a1, a2, b0), (a1, a2, b0, b1), (a2, b0, b1, b2)]


def cut_simplex(x, phi):
    """Split one simplex along the zero level of the linear interpolant of ``phi``.

    Returns ``(pieces, facets)`` where ``pieces[s]`` is a list of sub-simplex
    coordinate arrays on side ``s`` and ``facets`` a list of interface facets.
    Requires that no nodal value vanishes.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    neg = [k for k in range(d + 1) if phi[k] < 0]
    pos = [k for k in range(d + 1) if phi[k] > 0]
    if len(neg) + len(pos) != d + 1:
        raise GeometryError("nodal level set value is exactly zero")
    if not pos:
        return ([x], []), []
    if not neg:
        return ([], [x]), []

    def crossing(a, b):
        t = phi[a] / (phi[a] - phi[b])
        return x[a] + t * (x[b] - x[a])

    if d == 2:
        lone, other, lone_side = (neg, pos, 0) if len(neg) == 1 else (pos, neg, 1)
        v = lone[0]
        a, b = other
        pa, pb = crossing(v, a), crossing(v, b)
        tri = [np.array([x[v], pa, pb])]
        quad = [np.array([pa, x[a], x[b]]), np.array([pa, x[b], pb])]
        facets = [np.array([pa, pb])]
        pieces = (tri, quad) if lone_side == 0 else (quad, tri)
        return pieces, facets

    if len(neg) == 1 or len(pos) == 1:
        lone, other, lone_side = (neg, pos, 0) if len(neg) == 1 else (pos, neg, 1)
        v = lone[0]
        p = [crossing(v, a) for a in other]
        tet = [np.array([x[v], *p])]
        prism = [np.array(t) for t in _prism_tets(p, [x[a] for a in other])]
        facets = [np.array(p)]
        pieces = (tet, prism) if lone_side == 0 else (prism, tet)
        return pieces, facets

    v0, v1 = neg
    w0, w1 = pos
    p00, p01 = crossing(v0, w0), crossing(v0, w1)
    p10, p11 = crossing(v1, w0), crossing(v1, w1)
    neg_pieces = [np.array(t) for t in _prism_tets([x[v0], p00, p01], [x[v1], p10, p11])]
    pos_pieces = [np.array(t) for t in _prism_tets([x[w0], p00, p10], [x[w1], p01, p11])]
    facets = [np.array([p00, p10, p11]), np.array([p00, p11, p01])]
    return (neg_pieces, pos_pieces), facets


@dataclass
class CutCell:
    """Geometry of one cut element."""

    elem: int
    pieces: tuple  # per side: (k, d+1, d) sub-simplices
    volumes: np.ndarray  # (2,) |T_1|, |T_2|
    facets: np.ndarray  # (nf, d, d)
    normals: np.ndarray  # (nf, d), pointing from side 1 into side 2
    areas: np.ndarray  # (nf,)

    @property
    def kappa(self):
        return self.volumes / self.volumes.sum()

    @property
    def interface_measure(self):
        return float(self.areas.sum())


@dataclass
class CutTopology:
    mesh: object
    levelset: NodalLevelSet
    element_class: np.ndarray
    cut_cells: list
    cut_index: np.ndarray  # element -> position in cut_cells, -1 if uncut
    extended: np.ndarray = None  # (2, ne) bool
    ghost_faces: list = None  # per side: face indices
    h: float = field(default=None)

    @property
    def cut_elems(self):
        return np.array([c.elem for c in self.cut_cells], dtype=np.int64)

    def side_volumes(self):
        """(2, ne) array of |T ∩ Omega_i|."""
        vol = self.mesh.volumes
        out = np.zeros((2, len(vol)))
        out[0, self.element_class == NEG] = vol[self.element_class == NEG]
        out[1, self.element_class == POS] = vol[self.element_class == POS]
        for c in self.cut_cells:
            out[:, c.elem] = c.volumes
        return out

    def side_of_points(self, points):
        """Subdomain index (0/1) from the sign of the interpolated level set."""
        return (self.levelset(points) > 0).astype(np.int64)

    def vertex_side(self):
        return (self.levelset.values > 0).astype(np.int64)


def classify_and_cut(mesh, nodal):
    """Classify elements as NEG/POS/CUT and build the cut geometry."""
    d = mesh.dim
    vol = mesh.volumes
    if nodal.iso_p2:
        fine = nodal.fine_mesh
        nchild = 2**d
        child_vals = nodal.fine_values[fine.simplices].reshape(mesh.n_elems, -1)
    else:
        child_vals = nodal.values[mesh.simplices]
    if np.any(child_vals == 0):
        raise GeometryError("nodal level set has exact zeros; perturb first")
    cls = np.full(mesh.n_elems, CUT, dtype=np.int8)
    cls[np.all(child_vals < 0, axis=1)] = NEG
    cls[np.all(child_vals > 0, axis=1)] = POS

    cut_cells = []
    cut_index = np.full(mesh.n_elems, -1, dtype=np.int64)
    for e in np.flatnonzero(cls == CUT):
        if nodal.iso_p2:
            kids = fine.simplices[e * nchild:(e + 1) * nchild]
            parts = [(fine.vertices[k], nodal.fine_values[k]) for k in kids]
        else:
            s = mesh.simplices[e]
            parts = [(mesh.vertices[s], nodal.values[s])]
        pieces = ([], [])
        facets, normals = [], []
        for xk, pk in parts:
            (neg_p, pos_p), fac = cut_simplex(xk, pk)
            pieces[0].extend(neg_p)
            pieces[1].extend(pos_p)
            if fac:
                g = barycentric_gradients(xk[None])[0].T @ pk
                n = g / np.linalg.norm(g)
                facets.extend(fac)
                normals.extend([n] * len(fac))
        p0 = np.array(pieces[0])
        p1 = np.array(pieces[1])
        v0 = simplex_measure(p0)
        v1 = simplex_measure(p1)
        if min(v0.min(), v1.min()) < DEGENERATE * vol[e]:
            raise GeometryError(f"degenerate sub-simplex in element {e}")
        facets = np.array(facets)
        cut_index[e] = len(cut_cells)
        cut_cells.append(CutCell(
            elem=int(e),
            pieces=(p0, p1),
            volumes=np.array([v0.sum(), v1.sum()]),
            facets=facets,
            normals=np.array(normals),
            areas=simplex_measure(facets),
        ))
    return CutTopology(mesh, nodal, cls, cut_cells, cut_index, h=mesh.h)


def build_extended_and_ghost(mesh, topo):
    """Fill in the extended element sets and the ghost-penalty face sets."""
    cls = topo.element_class
    ext = np.zeros((2, mesh.n_elems), dtype=bool)
    ext[0] = (cls == NEG) | (cls == CUT)
    ext[1] = (cls == POS) | (cls == CUT)
    fe = mesh.face_elems
    interior = fe[:, 1] >= 0
    a = fe[:, 0]
    b = np.where(interior, fe[:, 1], fe[:, 0])
    touches_cut = (cls[a] == CUT) | (cls[b] == CUT)
    ghost = []
    for i in range(2):
        mask = interior & touches_cut & ext[i][a] & ext[i][b]
        ghost.append(np.flatnonzero(mask))
    topo.extended = ext
    topo.ghost_faces = ghost
    return topo


def cut_topology(mesh, phi, iso_p2=False):
    """Interpolate, classify, cut and complete the topology in one step."""
    nodal = interpolate_levelset(phi, mesh, iso_p2)
    return build_extended_and_ghost(mesh, classify_and_cut(mesh, nodal))


@dataclass
class AssumptionReport:
    a2_ok: list  # per level >= 1
    a1_distance: list  # per level: max distance of facet centroids to Gamma
    violations: list

    @property
    def ok(self):
        return all(self.a2_ok)


def check_assumptions(meshes, topos, phi=None, raise_on_error=True):
    """Check the nesting of extended domains across levels and sample dist(Gamma, Gamma_l)."""
    a2_ok, violations, dist = [], [], []
    for lvl in range(1, len(topos)):
        fine, coarse = topos[lvl], topos[lvl - 1]
        parent = meshes[lvl].parent_elem
        ok = True
        for i in range(2):
            bad = np.flatnonzero(fine.extended[i] & ~coarse.extended[i][parent])
            if len(bad):
                ok = False
                violations.append((lvl, i, int(bad[0])))
        a2_ok.append(ok)
    if phi is not None:
        for topo in topos:
            if topo.cut_cells:
                cent = np.concatenate([c.facets.mean(axis=1) for c in topo.cut_cells])
                dist.append(float(phi.distance(cent).max()))
            else:
                dist.append(0.0)
    if violations and raise_on_error:
        lvl, i, e = violations[0]
        raise AssumptionError(
            f"extended domain {i + 1} on level {lvl} is not contained in level "
            f"{lvl - 1}: element {e} has parent outside"
        )
    return AssumptionReport(a2_ok, dist, violations)
