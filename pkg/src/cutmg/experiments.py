"""Experiment drivers: convergence tables, multigrid iteration tables, diagnostics."""
import csv
import dataclasses
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import METHODS, DiscretizationConfig, assemble_system, l2_error
from .errors import ConfigError, SolverError
from .geometry import LevelSet, cut_topology
from .linalg import DENSE_LIMIT, estimate_condition, factor_numeric, gauss_seidel_sweep
from .mesh import build_hierarchy_meshes
from .multigrid import MgConfig, build_hierarchy, mg_solve
from .space import build_cut_space

M0 = (1.03, 1.02, 1.01)
SWEEPS = {
    "mu1": (0.9, 0.5, 0.1, 0.01),
    "delta": (0.0, 0.1, 0.2, 0.3),
    "lambda_n": (1.0, 10.0, 20.0, 100.0, 1000.0),
}


@dataclass
class ExperimentConfig:
    dim: int = 2
    n0: int = 4
    levels: int = 4
    interface: str = "spherical"
    x_gamma: float = 1.321
    radius: float = 0.413
    delta: float = 0.0
    method: str = "pnitsche"
    mu1: float = 0.5
    mu2: float = 1.0
    lambda_n: float = 10.0
    eps_g: float = 0.1
    smoother: str = "gs"
    gamma_solver: str = "auto"
    coarse_matrix: str = "direct"
    iso_p2: bool = None  # None: on for curved interfaces
    rel_tol: float = 1e-8
    max_iter: int = 500
    output: str = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.n0 < 2:
            raise ConfigError("n0 must be at least 2")
        if self.levels < 1:
            raise ConfigError("levels must be at least 1")
        if self.interface not in ("spherical", "planar"):
            raise ConfigError(f"interface must be 'spherical' or 'planar', got {self.interface!r}")
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.iso_p2 is None:
            self.iso_p2 = self.interface == "spherical"
        # validates method and coefficients
        self.discretization()
        self.mg_config()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def center(self):
        return tuple(c + self.delta for c in M0[: self.dim])

    def levelset(self):
        if self.interface == "planar":
            return LevelSet.planar(self.x_gamma)
        return LevelSet.spherical(self.center, self.radius)

    def box(self):
        return ((0.0, 2.0),) * self.dim

    def meshes(self, levels=None):
        return build_hierarchy_meshes(self.box(), self.n0, self.dim,
                                      self.levels if levels is None else levels)

    def discretization(self):
        return DiscretizationConfig(method=self.method, mu1=self.mu1, mu2=self.mu2,
                                    lambda_n=self.lambda_n, eps_g=self.eps_g)

    def mg_config(self):
        return MgConfig(smoother=self.smoother, gamma_solver=self.gamma_solver,
                        coarse_matrix=self.coarse_matrix, rel_tol=self.rel_tol,
                        max_iter=self.max_iter)


@dataclass
class Table:
    """A result table; ``rows`` hold raw values (None prints blank)."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    formats: dict = field(default_factory=dict)
    display: list = None  # optional pre-rendered text cells
    display_columns: list = None
    diverged: bool = False
    context: dict = field(default_factory=dict, repr=False)  # objects behind the numbers

    def cell(self, col, value):
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return ""
        fmt = self.formats.get(col)
        if fmt is None:
            return str(value)
        return fmt % value

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([self.cell(c, v) for c, v in zip(self.columns, row)])
        return buf.getvalue()

    def text(self):
        cells = self.display or [[self.cell(c, v) for c, v in zip(self.columns, r)]
                                 for r in self.rows]
        head = self.columns if not self.display else self.display_columns
        widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(head)]
        lines = ["  ".join(h.rjust(wd) for h, wd in zip(head, widths))]
        lines.append("  ".join("-" * wd for wd in widths))
        lines += ["  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in cells]
        return "\n".join(lines)


def read_csv(path):
    """Parse a table written by :func:`emit_outputs` back into floats (None for blanks)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]

    def conv(s):
        if s == "":
            return None
        try:
            return float(s)
        except ValueError:
            return s

    return header, [[conv(s) for s in r] for r in body]


def emit_outputs(tables, path=None, stream=None):
    """Write one CSV per table into directory ``path`` and print aligned text tables."""
    written = []
    if path is not None:
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {path}: {exc}") from exc
    for t in tables:
        if path is not None:
            fname = os.path.join(path, f"{t.name}.csv")
            try:
                with open(fname, "w", newline="") as fh:
                    fh.write(t.csv_text())
            except OSError as exc:
                raise OSError(f"cannot write {fname}: {exc}") from exc
            written.append(fname)
        if stream is not None:
            stream.write(f"# {t.name}\n{t.text()}\n\n")
    return written


# ----------------------------------------------------------------------------
# problems


def manufactured_solution(cfg):
    """``u* = alpha * (|x - m|^2 - r^2)`` with ``alpha = mu2`` inside and ``mu1`` outside."""
    m = np.asarray(cfg.center)
    r2 = cfg.radius ** 2
    alpha = (cfg.mu2, cfg.mu1)

    def u(x, side):
        return alpha[side] * (np.sum((x - m) ** 2, axis=-1) - r2)

    f_val = -2.0 * cfg.dim * cfg.mu1 * cfg.mu2

    def f(x, side):
        return np.full(x.shape[:-1], f_val)

    return u, f


def product_rhs(x, side):
    return np.prod(x, axis=-1)


def zero_data(x, side):
    return np.zeros(x.shape[:-1])


# ----------------------------------------------------------------------------
# convergence


def run_convergence(cfg):
    """Discretisation error on levels 0..L for the manufactured solution (direct solves)."""
    if cfg.interface != "spherical":
        raise ConfigError("the convergence study needs a spherical interface")
    phi = cfg.levelset()
    dcfg = cfg.discretization()
    u, f = manufactured_solution(cfg)
    table = Table("convergence", ["level", "ndofs", "error", "eoc"],
                  formats={"error": "%.2E", "eoc": "%.2f"})
    prev = None
    for mesh in cfg.meshes():
        topo = cut_topology(mesh, phi, iso_p2=cfg.iso_p2)
        space = build_cut_space(mesh, topo)
        A, b = assemble_system(space, topo, dcfg, f=f, u_D=u)
        x = spla.spsolve(A.tocsc(), b)
        err = l2_error(space, topo, x, u, space.boundary_values(u))
        eoc = None if prev is None else math.log2(prev / err)
        table.rows.append([mesh.level, space.n_dofs, err, eoc])
        prev = err
    return table


# ----------------------------------------------------------------------------
# multigrid tables


def _label(sweep, value):
    return f"{sweep}={value:g}"


def mg_iterations(cfg, meshes=None, topos=None, levels=None, failures=None):
    """Multigrid solves of the ``f = prod(x)``, ``u_D = 0`` problem on levels 1..L.

    Returns a list of ``(iterations or None, max inner CG iterations or None)``.
    A solver breakdown (indefinite system) counts as divergence; its message is
    appended to ``failures`` as ``(level, message)`` when a list is given.
    """
    phi = cfg.levelset()
    dcfg = cfg.discretization()
    mg_cfg = cfg.mg_config()
    meshes = meshes or cfg.meshes()
    if topos is None:
        topos = [cut_topology(m, phi, iso_p2=cfg.iso_p2) for m in meshes]
    out = []
    for lvl in (levels or range(1, len(meshes))):
        try:
            hier = build_hierarchy(meshes[: lvl + 1], phi, dcfg, mg_cfg,
                                   topos=topos[: lvl + 1])
            fine = hier[-1]
            _, b = assemble_system(fine.space, fine.topo, dcfg, f=product_rhs)
            res = mg_solve(hier, b, mg_cfg)
        except SolverError as exc:
            if failures is not None:
                failures.append((lvl, str(exc)))
            out.append((None, None))
            continue
        inner = res.max_inner_iterations if fine.gamma_kind == "pcg" else None
        out.append((res.iterations if res.converged else None, inner))
    return out


def run_mg_table(cfg, sweep="mu1", values=None):
    """Iteration counts per level (rows) and swept parameter value (columns)."""
    if sweep not in SWEEPS:
        raise ConfigError(f"sweep must be one of {sorted(SWEEPS)}, got {sweep!r}")
    values = tuple(SWEEPS[sweep] if values is None else values)
    meshes = cfg.meshes()
    shared_topos = None
    if sweep != "delta":
        phi = cfg.levelset()
        shared_topos = [cut_topology(m, phi, iso_p2=cfg.iso_p2) for m in meshes]
    results = []
    failures = []
    for v in values:
        c = cfg.replace(**{sweep: v})
        notes = []
        results.append(mg_iterations(c, meshes, shared_topos, failures=notes))
        failures += [(_label(sweep, v), lvl, msg) for lvl, msg in notes]
    with_inner = any(r[1] is not None for res in results for r in res)
    labels = [_label(sweep, v) for v in values]
    columns = ["level"] + labels
    if with_inner:
        columns += [f"inner {lab}" for lab in labels]
    table = Table(f"mg_{sweep}", columns, display=[], display_columns=["level"] + labels)
    for i, lvl in enumerate(range(1, len(meshes))):
        its = [res[i][0] for res in results]
        inner = [res[i][1] for res in results]
        row = [lvl] + ["div" if n is None else n for n in its]
        if with_inner:
            row += inner
        table.rows.append(row)
        disp = [str(lvl)]
        for n, k in zip(its, inner):
            s = "div" if n is None else str(n)
            disp.append(s if k is None else f"{s} ({k})")
        table.display.append(disp)
        table.diverged |= any(n is None for n in its)
    table.context["failures"] = failures
    return table


# ----------------------------------------------------------------------------
# diagnostics


def time_best(fn, repeat=20):
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def factorization_timing(level, repeat=20):
    """Best-of timings: numeric factorisation of ``A^Gamma`` and one GS sweep on ``A``."""
    fac = level.gamma_factor
    buf = np.empty(fac.symbolic.ptr[-1])
    t_fac = time_best(lambda: factor_numeric(fac.symbolic, level.A_gamma, buf), repeat)
    x = np.zeros(level.n_dofs)
    b = np.ones(level.n_dofs)
    t_gs = time_best(lambda: gauss_seidel_sweep(level.A, x, b, check=False), repeat)
    return t_fac, t_gs


def run_diagnostics(cfg):
    """Condition numbers and Cholesky fill of the interface block on levels 1..L."""
    phi = cfg.levelset()
    meshes = cfg.meshes()
    mg_cfg = dataclasses.replace(cfg.mg_config(), smoother="gsic", gamma_solver="cholesky")
    hier = build_hierarchy(meshes, phi, cfg.discretization(), mg_cfg, iso_p2=cfg.iso_p2)
    cols = ["level", "ndofs", "nnz_A", "kappa_DA", "kappa_A", "n_gamma", "nnz_Agamma",
            "kappa_DAgamma", "nnz_L", "fill_L_Agamma", "fill_L_A"]
    fmt = {c: "%.3E" for c in ("kappa_DA", "kappa_A", "kappa_DAgamma")}
    fmt.update(fill_L_Agamma="%.3f", fill_L_A="%.3f")
    table = Table("diagnostics", cols, formats=fmt)
    for lev in hier[1:]:
        A = lev.A
        k_a = estimate_condition(A) if A.shape[0] <= DENSE_LIMIT else None
        fac = lev.gamma_factor
        n_g = lev.A_gamma.shape[0]
        table.rows.append([
            lev.level, A.shape[0], A.nnz, estimate_condition(A, scale=True), k_a,
            n_g, lev.A_gamma.nnz,
            estimate_condition(lev.A_gamma, scale=True) if n_g else None,
            fac.nnz_L if fac else 0,
            fac.nnz_L / lev.A_gamma.nnz if fac else None,
            fac.nnz_L / A.nnz if fac else None,
        ])
    table.context["hierarchy"] = hier
    return table


def solve(cfg, problem="manufactured"):
    """Single multigrid solve on the finest level; returns (result, summary table).

    ``result`` is None when the solver breaks down on an indefinite system.
    """
    if problem == "manufactured":
        if cfg.interface != "spherical":
            raise ConfigError("the manufactured problem needs a spherical interface")
        u, f = manufactured_solution(cfg)
    elif problem == "product":
        u, f = zero_data, product_rhs
    else:
        raise ConfigError(f"unknown problem {problem!r}")
    phi = cfg.levelset()
    meshes = cfg.meshes()
    dcfg = cfg.discretization()
    mg_cfg = cfg.mg_config()
    table = Table("solve", ["level", "ndofs", "iterations", "residual", "error"],
                  formats={"residual": "%.2E", "error": "%.2E"})
    try:
        hier = build_hierarchy(meshes, phi, dcfg, mg_cfg, iso_p2=cfg.iso_p2)
        fine = hier[-1]
        _, b = assemble_system(fine.space, fine.topo, dcfg, f=f, u_D=u)
        res = mg_solve(hier, b, mg_cfg)
    except SolverError as exc:
        table.rows.append([len(meshes) - 1, None, "div", None, None])
        table.diverged = True
        table.context["failures"] = [("solve", len(meshes) - 1, str(exc))]
        return None, table
    err = None
    if problem == "manufactured" and res.converged:
        err = l2_error(fine.space, fine.topo, res.x, u, fine.space.boundary_values(u))
    table.rows.append([fine.level, fine.n_dofs, res.iterations if res.converged else "div",
                       res.residuals[-1], err])
    table.diverged = res.diverged
    return res, table


__all__ = [
    "ExperimentConfig", "Table", "METHODS", "SWEEPS", "emit_outputs", "read_csv",
    "run_convergence", "run_mg_table", "run_diagnostics", "mg_iterations",
    "factorization_timing", "manufactured_solution", "solve",
]
