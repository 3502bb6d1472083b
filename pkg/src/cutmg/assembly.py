"""Stiffness matrices and load vectors for the three Nitsche-type cut discretizations.

All terms are first assembled in the "full" two-copy numbering (side-wise
vertex DOFs including boundary vertices) and then reduced: boundary DOFs are
eliminated (strong Dirichlet data) and the interior block is transformed to the
XFEM basis, ``A_x = M^T A_tc M``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, GeometryError
from .geometry import CUT
from .mesh import barycentric_gradients
from .quadrature import simplex_measure, simplex_rule

METHODS = ("nitsche", "pnitsche", "munitsche")

LOAD_DEGREE = 4
FACET_DEGREE = 2


@dataclass(frozen=True)
class DiscretizationConfig:
    method: str = "pnitsche"
    mu1: float = 1.0
    mu2: float = 1.0
    lambda_n: float = 10.0
    eps_g: float = 0.1
    local_h: bool = False  # per-element h in the Nitsche penalty

    def __post_init__(self):
        method = self.method.lower().replace("-", "").replace("_", "")
        if method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", method)
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ConfigError("mu1 and mu2 must be positive")
        if self.lambda_n <= 0:
            raise ConfigError("lambda_n must be positive")
        if self.method == "munitsche" and self.eps_g <= 0:
            raise ConfigError("eps_g must be positive for munitsche")

    @property
    def mu(self):
        return np.array([self.mu1, self.mu2])

    @property
    def contrast(self):
        return max(self.mu1, self.mu2) / min(self.mu1, self.mu2)

    def harmonic_weights(self):
        s = self.mu1 + self.mu2
        return np.array([self.mu2 / s, self.mu1 / s])

    def penalty(self):
        """Penalty factor multiplying ``([u], [v]) / h``."""
        if self.method == "pnitsche":
            return 1.0
        if self.method == "munitsche":
            return 2.0 * self.mu1 * self.mu2 / (self.mu1 + self.mu2) * self.lambda_n
        return self.lambda_n

    def weights(self, cell):
        if self.method == "munitsche":
            return self.harmonic_weights()
        return cell.kappa


# ----------------------------------------------------------------------------
# helpers


def _coo(n, rows, cols, vals):
    m = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n))
    return m.tocsr()


def _local_index(space, e):
    s = space.mesh.simplices[e]
    return np.concatenate([space.full_index[0, s], space.full_index[1, s]])


def _bary_at(x_elem, grads, pts):
    # barycentric coordinates of points pts (..., d) on an element
    lam = np.einsum("ad,...d->...a", grads, pts - x_elem[0])
    lam[..., 0] += 1.0
    return lam


def _element_h(mesh, e):
    x = mesh.vertices[mesh.simplices[e]]
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _facet_integrals(x_elem, grads, facet):
    """(int_F lambda, int_F lambda lambda^T) for one interface facet."""
    rule = simplex_rule(facet.shape[0] - 1, FACET_DEGREE)
    area = simplex_measure(facet)
    lam = _bary_at(x_elem, grads, rule.points(facet))
    w = area * rule.weights
    return lam.T @ w, (lam.T * w) @ lam


def reduce_to_xfem(space, K):
    """Restrict a full two-copy matrix to interior DOFs and map to the XFEM basis."""
    inner = _inner_full(space)
    A_tc = K[inner][:, inner]
    M = space.xfem_to_twocopy
    A = (M.T @ A_tc @ M).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return A


def _inner_full(space):
    # full indices of interior (side, vertex) pairs, in two-copy DOF order
    idx = np.empty(space.xfem_to_twocopy.shape[0], dtype=np.int64)
    for s in range(2):
        m = space.tc_index[s] >= 0
        idx[space.tc_index[s, m]] = space.full_index[s, m]
    return idx


def _boundary_full(space):
    out = []
    for s in range(2):
        m = space.ext_vertex[s] & space.boundary
        out.append(space.full_index[s, m])
    return np.concatenate(out)


# ----------------------------------------------------------------------------
# full-numbering terms


def bulk_full(space, topo, cfg):
    mesh = space.mesh
    grads = mesh.gradients()
    side_vol = topo.side_volumes()
    rows, cols, vals = [], [], []
    for s in range(2):
        elems = np.flatnonzero(topo.extended[s])
        g = grads[elems]
        w = cfg.mu[s] * side_vol[s, elems]
        ke = w[:, None, None] * np.einsum("ead,ebd->eab", g, g)
        idx = space.full_index[s, mesh.simplices[elems]]
        rows.append(np.broadcast_to(idx[:, :, None], ke.shape))
        cols.append(np.broadcast_to(idx[:, None, :], ke.shape))
        vals.append(ke)
    return _coo(space.n_full, np.concatenate([r.ravel() for r in rows]),
                np.concatenate([c.ravel() for c in cols]),
                np.concatenate([v.ravel() for v in vals]))


def _cell_interface_data(space, topo, cell, cfg):
    """Per-facet jump vectors, flux vectors and jump mass matrices of one cut cell."""
    mesh = space.mesh
    e = cell.elem
    x = mesh.vertices[mesh.simplices[e]]
    g = barycentric_gradients(x[None])[0]
    kap = cfg.weights(cell)
    out = []
    for facet, n in zip(cell.facets, cell.normals):
        jint, mass = _facet_integrals(x, g, facet)
        J = np.concatenate([jint, -jint])
        dn = g @ n
        F = np.concatenate([-kap[0] * cfg.mu1 * dn, -kap[1] * cfg.mu2 * dn])
        Q = np.block([[mass, -mass], [-mass, mass]])
        out.append((J, F, Q, n))
    return out


def nitsche_full(space, topo, cfg, consistency=True, penalty=None):
    """Consistency terms N^c(u,v) + N^c(v,u) and the jump penalty."""
    if penalty is None:
        penalty = cfg.method != "pnitsche"
    lam = cfg.penalty()
    rows, cols, vals = [], [], []
    for cell in topo.cut_cells:
        idx = _local_index(space, cell.elem)
        h = _element_h(space.mesh, cell.elem) if cfg.local_h else topo.h
        ke = np.zeros((len(idx), len(idx)))
        for J, F, Q, _ in _cell_interface_data(space, topo, cell, cfg):
            if consistency:
                nc = np.outer(J, F)  # rows: test, cols: trial
                ke += nc + nc.T
            if penalty:
                ke += lam / h * Q
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(ke.ravel())
    if not rows:
        return sp.csr_matrix((space.n_full, space.n_full))
    return _coo(space.n_full, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def lifting_matrix(cell, cfg, x, grads):
    """Local lifting for one cut cell.

    Returns ``(A_loc, R)``: the SPD matrix of ``a_T`` on the mean-free P1 space
    (d gradient coefficients per side) and the right-hand sides ``N^c_T(v, u)``
    for every local trial DOF (columns).
    """
    d = x.shape[1]
    if np.any(cell.volumes <= 0):
        raise GeometryError(f"empty sub-element in cut element {cell.elem}")
    A_loc = np.diag(np.repeat(cfg.mu * cell.volumes, d))
    kap = cfg.weights(cell)
    R = np.zeros((2 * d, 2 * (d + 1)))
    for facet, n in zip(cell.facets, cell.normals):
        jint, _ = _facet_integrals(x, grads, facet)
        J = np.concatenate([jint, -jint])
        for i in range(2):
            R[i * d:(i + 1) * d] += np.outer(-kap[i] * cfg.mu[i] * n, J)
    return A_loc, R


def lifting_full(space, topo, cfg):
    """``2 a(L u, L v) + N^s_1(u, v)`` for the parameter-free method."""
    mesh = space.mesh
    rows, cols, vals = [], [], []
    for cell in topo.cut_cells:
        x = mesh.vertices[mesh.simplices[cell.elem]]
        g = barycentric_gradients(x[None])[0]
        A_loc, R = lifting_matrix(cell, cfg, x, g)
        X = np.linalg.solve(A_loc, R)
        ke = 2.0 * X.T @ A_loc @ X
        h = _element_h(mesh, cell.elem) if cfg.local_h else topo.h
        for _, _, Q, _ in _cell_interface_data(space, topo, cell, cfg):
            ke += 1.0 / h * Q
        idx = _local_index(space, cell.elem)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(ke.ravel())
    if not rows:
        return sp.csr_matrix((space.n_full, space.n_full))
    return _coo(space.n_full, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def face_normal_jump(mesh, face, grads=None):
    """Normal-gradient jump coefficients across an interior face.

    Returns ``(verts, w, h_F, |F|)`` where ``w[k]`` is the jump of the normal
    derivative of the hat function of ``verts[k]``.
    """
    ep, em = mesh.face_elems[face]
    fv = mesh.faces[face]
    if grads is None:
        gp = barycentric_gradients(mesh.vertices[mesh.simplices[ep]][None])[0]
        gm = barycentric_gradients(mesh.vertices[mesh.simplices[em]][None])[0]
    else:
        gp, gm = grads[ep], grads[em]
    sp_, sm = mesh.simplices[ep], mesh.simplices[em]
    opp = int(np.flatnonzero(~np.isin(sp_, fv))[0])
    n = gp[opp] / np.linalg.norm(gp[opp])
    verts = np.unique(np.concatenate([sp_, sm]))
    w = np.zeros(len(verts))
    for k, v in enumerate(verts):
        if v in sp_:
            w[k] += gp[np.flatnonzero(sp_ == v)[0]] @ n
        if v in sm:
            w[k] -= gm[np.flatnonzero(sm == v)[0]] @ n
    xf = mesh.vertices[fv]
    diff = xf[:, None, :] - xf[None, :, :]
    h_f = float(np.sqrt((diff**2).sum(-1)).max())
    return verts, w, h_f, float(simplex_measure(xf))


def ghost_full(space, topo, cfg):
    mesh = space.mesh
    grads = mesh.gradients()
    rows, cols, vals = [], [], []
    for s in range(2):
        for face in topo.ghost_faces[s]:
            verts, w, h_f, area = face_normal_jump(mesh, face, grads)
            idx = space.full_index[s, verts]
            ke = cfg.eps_g * cfg.mu[s] * h_f * area * np.outer(w, w)
            rows.append(np.repeat(idx, len(idx)))
            cols.append(np.tile(idx, len(idx)))
            vals.append(ke.ravel())
    if not rows:
        return sp.csr_matrix((space.n_full, space.n_full))
    return _coo(space.n_full, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def system_full(space, topo, cfg):
    K = bulk_full(space, topo, cfg)
    if cfg.method == "pnitsche":
        K = K + nitsche_full(space, topo, cfg, penalty=False) + lifting_full(space, topo, cfg)
    else:
        K = K + nitsche_full(space, topo, cfg)
    if cfg.method == "munitsche":
        K = K + ghost_full(space, topo, cfg)
    return K.tocsr()


def load_full(space, topo, f):
    """``(f, v)`` for every full two-copy DOF; ``f(x, side)`` is vectorised."""
    mesh = space.mesh
    b = np.zeros(space.n_full)
    rule = simplex_rule(mesh.dim, LOAD_DEGREE)
    vol = mesh.volumes
    for s in range(2):
        elems = np.flatnonzero(topo.element_class == s)
        x = mesh.vertices[mesh.simplices[elems]]
        pts = rule.points(x)
        fx = np.broadcast_to(f(pts, s), pts.shape[:-1])
        loc = vol[elems, None] * ((fx * rule.weights) @ rule.bary)
        np.add.at(b, space.full_index[s, mesh.simplices[elems]], loc)
    for cell in topo.cut_cells:
        x = mesh.vertices[mesh.simplices[cell.elem]]
        g = barycentric_gradients(x[None])[0]
        for s in range(2):
            pieces = cell.pieces[s]
            pts = rule.points(pieces)  # (k, q, d)
            lam = _bary_at(x, g, pts)
            fx = np.broadcast_to(f(pts, s), pts.shape[:-1])
            w = simplex_measure(pieces)[:, None] * rule.weights[None, :] * fx
            np.add.at(b, space.full_index[s, mesh.simplices[cell.elem]],
                      np.einsum("kq,kqa->a", w, lam))
    return b


# ----------------------------------------------------------------------------
# public assembly API (XFEM basis, interior DOFs)


def assemble_bulk(space, topo, cfg):
    return reduce_to_xfem(space, bulk_full(space, topo, cfg))


def assemble_nitsche_terms(space, topo, cfg, penalty=None):
    return reduce_to_xfem(space, nitsche_full(space, topo, cfg, penalty=penalty))


def assemble_lifting_terms(space, topo, cfg):
    return reduce_to_xfem(space, lifting_full(space, topo, cfg))


def assemble_ghost_penalty(space, topo, cfg):
    return reduce_to_xfem(space, ghost_full(space, topo, cfg))


def assemble_matrix(space, topo, cfg):
    return reduce_to_xfem(space, system_full(space, topo, cfg))


def assemble_system(space, topo, cfg, f=None, u_D=None):
    """Stiffness matrix and right-hand side in the XFEM basis.

    ``f(x, side)`` and ``u_D(x, side)`` are vectorised callables; boundary
    values are imposed strongly and moved to the right-hand side.
    """
    K = system_full(space, topo, cfg)
    A = reduce_to_xfem(space, K)
    F = load_full(space, topo, f) if f is not None else np.zeros(space.n_full)
    inner = _inner_full(space)
    b_tc = F[inner]
    if u_D is not None:
        bnd = _boundary_full(space)
        g = boundary_vector(space, u_D)
        b_tc = b_tc - K[inner][:, bnd] @ g[bnd]
    b = space.xfem_to_twocopy.T @ b_tc
    return A, np.asarray(b).ravel()


def boundary_vector(space, u_D):
    g = np.zeros(space.n_full)
    for s in range(2):
        m = space.ext_vertex[s] & space.boundary
        g[space.full_index[s, m]] = u_D(space.mesh.vertices[m], s)
    return g


def l2_error(space, topo, coeffs, u_star, boundary_values=None):
    """``|| u_h - u* ||_{L2}`` with side-wise evaluation on sub-simplices."""
    mesh = space.mesh
    vals = space.side_values(coeffs, boundary_values)
    rule = simplex_rule(mesh.dim, LOAD_DEGREE)
    vol = mesh.volumes
    total = 0.0
    for s in range(2):
        elems = np.flatnonzero(topo.element_class == s)
        x = mesh.vertices[mesh.simplices[elems]]
        pts = rule.points(x)
        uh = vals[s, mesh.simplices[elems]] @ rule.bary.T
        diff = uh - u_star(pts, s)
        total += float(np.sum(vol[elems] * ((diff**2) @ rule.weights)))
    for cell in topo.cut_cells:
        x = mesh.vertices[mesh.simplices[cell.elem]]
        g = barycentric_gradients(x[None])[0]
        for s in range(2):
            pieces = cell.pieces[s]
            pts = rule.points(pieces)
            uh = _bary_at(x, g, pts) @ vals[s, mesh.simplices[cell.elem]]
            diff = uh - u_star(pts, s)
            total += float(np.sum(simplex_measure(pieces) * ((diff**2) @ rule.weights)))
    return np.sqrt(total)
