"""Geometric multigrid for the unfitted P1 space.

The prolongation acts copy-wise: each subdomain copy is prolongated with the
standard P1 interpolation of its extended domain.  In the XFEM basis this
reads ``T_fine @ blockdiag(p_1, p_2) @ M_coarse``.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import assemble_system
from .errors import ConfigError, SolverError
from .geometry import check_assumptions, cut_topology
from .linalg import (as_csr, check_diagonal, gauss_seidel_sweep, pcg_jacobi,
                     sparse_cholesky_bfs)
from .mesh import std_prolongation
from .space import build_cut_space, vertex_graph

SMOOTHERS = ("gs", "gsic")
GAMMA_SOLVERS = ("auto", "pcg", "cholesky")
COARSE_MODES = ("direct", "galerkin")
INNER_TOL = 1e-2
INNER_MAX_ITER = 1000
AUTO_CONTRAST = 1e2


@dataclass(frozen=True)
class MgConfig:
    pre_smooth: int = 2
    post_smooth: int = 2
    smoother: str = "gs"
    gamma_solver: str = "auto"
    coarse_matrix: str = "direct"
    rel_tol: float = 1e-8
    max_iter: int = 500
    divergence_factor: float = 1e6

    def __post_init__(self):
        for name, val, allowed in (("smoother", self.smoother, SMOOTHERS),
                                   ("gamma_solver", self.gamma_solver, GAMMA_SOLVERS),
                                   ("coarse_matrix", self.coarse_matrix, COARSE_MODES)):
            v = str(val).lower().replace("-", "")
            if v not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {val!r}")
            object.__setattr__(self, name, v)
        if self.pre_smooth < 0 or self.post_smooth < 0:
            raise ConfigError("smoothing counts must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")

    def resolve_gamma_solver(self, contrast):
        if self.gamma_solver != "auto":
            return self.gamma_solver
        return "pcg" if contrast <= AUTO_CONTRAST else "cholesky"


@dataclass
class MgLevel:
    level: int
    mesh: object
    topo: object
    space: object
    A: sp.csr_matrix
    P_to_fine: sp.csr_matrix = None  # prolongation from this level to the next
    interface_idx: np.ndarray = None
    A_gamma: sp.csr_matrix = None
    gamma_kind: str = None
    gamma_factor: object = None
    coarse_factor: object = None

    @property
    def n_dofs(self):
        return self.A.shape[0]


@dataclass
class SmootherStats:
    inner_iterations: int = 0
    inner_failures: int = 0

    def record(self, iters, ok):
        self.inner_iterations = max(self.inner_iterations, iters)
        self.inner_failures += 0 if ok else 1


@dataclass
class MgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    diverged: bool
    residuals: list = field(default_factory=list)
    max_inner_iterations: int = 0
    inner_failures: int = 0


# ----------------------------------------------------------------------------
# transfer operators


def twocopy_prolongation(coarse_space, fine_space, fine_mesh):
    """Block-diagonal copy-wise prolongation in the two-copy numbering."""
    blocks = []
    for s in range(2):
        cidx = coarse_space.tc_index[s]
        fidx = fine_space.tc_index[s]
        coff = cidx[cidx >= 0].min() if (cidx >= 0).any() else 0
        foff = fidx[fidx >= 0].min() if (fidx >= 0).any() else 0
        cdof = np.where(cidx >= 0, cidx - coff, -1)
        fdof = np.where(fidx >= 0, fidx - foff, -1)
        p = std_prolongation(fine_mesh, cdof, fdof, coarse_member=coarse_space.ext_vertex[s])
        p.resize((fine_space.n_side[s], coarse_space.n_side[s]))
        blocks.append(p)
    return as_csr(sp.block_diag(blocks, format="csr"))


def build_prolongation(coarse, fine):
    """XFEM-basis prolongation from ``coarse`` to ``fine`` (MgLevel or CutSpace pairs)."""
    cs = getattr(coarse, "space", coarse)
    fs = getattr(fine, "space", fine)
    p = twocopy_prolongation(cs, fs, fs.mesh)
    return as_csr(fs.twocopy_to_xfem @ p @ cs.xfem_to_twocopy)


def restrict(p, r_fine):
    r_fine = np.asarray(r_fine)
    if p.shape[0] != r_fine.shape[0]:
        raise ValueError(f"restriction dimension mismatch: {p.shape} vs {r_fine.shape}")
    return p.T @ r_fine


# ----------------------------------------------------------------------------
# interface block


def interface_ordering(space):
    """Node graph over doubled vertices and the positions of their two DOFs in the interface block."""
    idx = space.interface_idx
    dmask = space.doubled[0] | space.doubled[1]
    verts = np.flatnonzero(dmask)
    graph = vertex_graph(space.mesh, dmask)
    blocks = np.stack([np.searchsorted(idx, space.std_dof[verts]),
                       np.searchsorted(idx, space.ext_dof[verts])], axis=1)
    return graph, blocks


def setup_interface(level, kind):
    space = level.space
    idx = space.interface_idx
    level.interface_idx = idx
    level.A_gamma = as_csr(level.A[idx][:, idx])
    level.gamma_kind = kind
    if len(idx) == 0:
        level.gamma_factor = None
    elif kind == "cholesky":
        graph, blocks = interface_ordering(space)
        level.gamma_factor = sparse_cholesky_bfs(level.A_gamma, graph, blocks)
    else:
        level.gamma_factor = None
    return level


def interface_correction(level, x, b, stats=None):
    """``x += R^T (A^Gamma)^{-1} R (b - A x)``; skipped if the inner solver fails."""
    idx = level.interface_idx
    if idx is None or len(idx) == 0:
        return x
    r = (b - level.A @ x)[idx]
    if level.gamma_kind == "cholesky":
        x[idx] += level.gamma_factor.solve(r)
        return x
    res = pcg_jacobi(level.A_gamma, r, rel_tol=INNER_TOL, max_iter=INNER_MAX_ITER)
    if stats is not None:
        stats.record(res.iterations, res.converged)
    if res.converged:
        x[idx] += res.x
    return x


def smooth_gsic(level, x, b, direction="forward", stats=None):
    """One GS sweep in ``direction`` followed by the interface correction."""
    gauss_seidel_sweep(level.A, x, b, direction, check=False)
    interface_correction(level, x, b, stats)
    return x


# ----------------------------------------------------------------------------
# hierarchy


class CoarseSolver:
    """Dense Cholesky of the coarsest matrix with an LU fallback."""

    def __init__(self, A):
        dense = A.toarray()
        try:
            self.factor = sla.cho_factor(dense, lower=True)
            self.kind = "cholesky"
        except np.linalg.LinAlgError:
            self.factor = sla.lu_factor(dense)
            self.kind = "lu"

    def solve(self, b):
        if self.kind == "cholesky":
            return sla.cho_solve(self.factor, b)
        return sla.lu_solve(self.factor, b)


def build_hierarchy(meshes, phi, cfg, mg_cfg=None, iso_p2=False, topos=None):
    """Assemble every level and the transfer operators.

    Returns ``levels`` ordered coarse to fine.  In ``galerkin`` mode the coarse
    matrices are ``p^T A p`` computed from the finest level downwards.
    """
    mg_cfg = mg_cfg or MgConfig()
    if topos is None:
        topos = [cut_topology(m, phi, iso_p2=iso_p2) for m in meshes]
    check_assumptions(meshes, topos, raise_on_error=True)
    levels = []
    for lvl, (mesh, topo) in enumerate(zip(meshes, topos)):
        space = build_cut_space(mesh, topo)
        if mg_cfg.coarse_matrix == "direct" or lvl == len(meshes) - 1:
            A, _ = assemble_system(space, topo, cfg)
        else:
            A = None
        levels.append(MgLevel(lvl, mesh, topo, space, A))
    for lvl in range(len(levels) - 1):
        levels[lvl].P_to_fine = build_prolongation(levels[lvl], levels[lvl + 1])
    if mg_cfg.coarse_matrix == "galerkin":
        for lvl in range(len(levels) - 2, -1, -1):
            p = levels[lvl].P_to_fine
            A = as_csr(p.T @ levels[lvl + 1].A @ p)
            levels[lvl].A = as_csr(0.5 * (A + A.T))
    for lev in levels[1:]:
        check_diagonal(lev.A)
    kind = mg_cfg.resolve_gamma_solver(cfg.contrast)
    if mg_cfg.smoother == "gsic":
        for lev in levels[1:]:
            setup_interface(lev, kind)
    levels[0].coarse_factor = CoarseSolver(levels[0].A)
    return levels


# ----------------------------------------------------------------------------
# cycles


def _smooth(level, x, b, mg_cfg, direction, stats):
    if mg_cfg.smoother == "gsic":
        return smooth_gsic(level, x, b, direction, stats)
    return gauss_seidel_sweep(level.A, x, b, direction, check=False)


def v_cycle(levels, lvl, x, b, mg_cfg, stats=None):
    """One V(pre, post) cycle on level ``lvl``; updates and returns ``x``."""
    level = levels[lvl]
    if lvl == 0:
        x[:] = level.coarse_factor.solve(b)
        return x
    for _ in range(mg_cfg.pre_smooth):
        _smooth(level, x, b, mg_cfg, "forward", stats)
    p = levels[lvl - 1].P_to_fine
    r_c = restrict(p, b - level.A @ x)
    e_c = v_cycle(levels, lvl - 1, np.zeros(len(r_c)), r_c, mg_cfg, stats)
    x += p @ e_c
    for _ in range(mg_cfg.post_smooth):
        _smooth(level, x, b, mg_cfg, "backward", stats)
    return x


def mg_solve(levels, b, mg_cfg=None, x0=None):
    """Stand-alone multigrid iteration on the finest level."""
    mg_cfg = mg_cfg or MgConfig()
    A = levels[-1].A
    b = np.asarray(b, dtype=float)
    if A.shape[0] != len(b):
        raise SolverError(f"right-hand side has length {len(b)}, system has {A.shape[0]}")
    x = np.zeros(len(b)) if x0 is None else np.array(x0, dtype=float)
    stats = SmootherStats()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return MgResult(np.zeros(len(b)), 0, True, False, [0.0])
    rel = np.linalg.norm(b - A @ x) / bnorm
    history = [rel]
    if rel <= mg_cfg.rel_tol:
        return MgResult(x, 0, True, False, history)
    for it in range(1, mg_cfg.max_iter + 1):
        v_cycle(levels, len(levels) - 1, x, b, mg_cfg, stats)
        rel = np.linalg.norm(b - A @ x) / bnorm
        history.append(rel)
        if rel <= mg_cfg.rel_tol:
            return MgResult(x, it, True, False, history,
                            stats.inner_iterations, stats.inner_failures)
        if not np.isfinite(rel) or rel > mg_cfg.divergence_factor:
            break
    return MgResult(x, len(history) - 1, False, True, history,
                    stats.inner_iterations, stats.inner_failures)
