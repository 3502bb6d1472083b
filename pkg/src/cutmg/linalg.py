"""Sparse kernels: Gauss-Seidel sweeps, Jacobi-PCG, envelope Cholesky, condition estimates.

Matrices are ``scipy.sparse.csr_matrix`` with sorted, unique column indices.
"""
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
from numba import njit

from .errors import SolverError
from .space import bfs_order


def as_csr(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x):
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


# ----------------------------------------------------------------------------
# Gauss-Seidel


@njit(cache=True)
def _gs_forward(indptr, indices, data, x, b):
    for i in range(len(x)):
        s = b[i]
        diag = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                diag = data[k]
            else:
                s -= data[k] * x[j]
        x[i] = s / diag


@njit(cache=True)
def _gs_backward(indptr, indices, data, x, b):
    for i in range(len(x) - 1, -1, -1):
        s = b[i]
        diag = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                diag = data[k]
            else:
                s -= data[k] * x[j]
        x[i] = s / diag


def check_diagonal(A):
    if np.any(A.diagonal() == 0):
        raise SolverError("Gauss-Seidel needs a nonzero diagonal")


def gauss_seidel_sweep(A, x, b, direction="forward", check=True):
    """One in-place lexicographic Gauss-Seidel sweep; returns ``x``."""
    if check:
        check_diagonal(A)
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', not {direction!r}")
    kernel = _gs_forward if direction == "forward" else _gs_backward
    kernel(A.indptr, A.indices, A.data, x, np.ascontiguousarray(b, dtype=float))
    return x


# ----------------------------------------------------------------------------
# Jacobi preconditioned CG


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float


def pcg_jacobi(A, b, x0=None, rel_tol=1e-8, max_iter=None):
    """Diagonally preconditioned CG, stopped on ``|b - Ax| <= rel_tol |b|``."""
    b = np.asarray(b, dtype=float)
    n = len(b)
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return PCGResult(np.zeros(n), 0, True, 0.0)
    rnorm = np.linalg.norm(r)
    if rnorm <= rel_tol * bnorm:
        return PCGResult(x, 0, True, rnorm / bnorm)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        q = A @ p
        curv = p @ q
        if curv <= 0.0:
            raise SolverError("negative curvature in CG: matrix is not SPD")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        if rnorm <= rel_tol * bnorm:
            return PCGResult(x, it, True, rnorm / bnorm)
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PCGResult(x, max_iter, False, rnorm / bnorm)


# ----------------------------------------------------------------------------
# envelope Cholesky under a breadth-first ordering


@njit(cache=True)
def _envelope_factor(n, first, ptr, val):
    # row i of L stored at val[ptr[i]:ptr[i+1]] for columns first[i]..i
    inv_diag = np.empty(n)
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        for j in range(fi, i):
            fj = first[j]
            pj = ptr[j]
            k0 = max(fi, fj)
            s = val[pi + j - fi]
            for k in range(k0, j):
                s -= val[pi + k - fi] * val[pj + k - fj]
            val[pi + j - fi] = s * inv_diag[j]
        s = val[pi + i - fi]
        for k in range(fi, i):
            s -= val[pi + k - fi] ** 2
        if s <= 0.0:
            return i
        val[pi + i - fi] = np.sqrt(s)
        inv_diag[i] = 1.0 / val[pi + i - fi]
    return -1


@njit(cache=True)
def _scatter_factor(data, src, dst, first, ptr, val):
    val[:] = 0.0
    for k in range(len(src)):
        val[dst[k]] = data[src[k]]
    return _envelope_factor(len(first), first, ptr, val)


@njit(cache=True)
def _envelope_solve(n, first, ptr, val, b):
    y = b.copy()
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        s = y[i]
        for k in range(fi, i):
            s -= val[pi + k - fi] * y[k]
        y[i] = s / val[pi + i - fi]
    for i in range(n - 1, -1, -1):
        fi = first[i]
        pi = ptr[i]
        y[i] /= val[pi + i - fi]
        yi = y[i]
        for k in range(fi, i):
            y[k] -= val[pi + k - fi] * yi
    return y


@dataclass
class CholeskyFactor:
    """``P A P^T = L L^T`` with ``L`` stored by rows inside the envelope."""

    perm: np.ndarray  # new position -> original index
    first: np.ndarray
    ptr: np.ndarray
    values: np.ndarray
    nnz_A: int
    nnz_L: int
    symbolic: object = None

    @property
    def n(self):
        return len(self.perm)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        y = _envelope_solve(self.n, self.first, self.ptr, self.values, b[self.perm])
        x = np.empty_like(y)
        x[self.perm] = y
        return x

    def L(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.ptr))
        cols = np.concatenate([np.arange(f, i + 1) for i, f in enumerate(self.first)]) \
            if self.n else np.zeros(0, dtype=np.int64)
        L = sp.csr_matrix((self.values, (rows, cols)), shape=(self.n, self.n))
        L.eliminate_zeros()
        return L


def bfs_permutation(A, graph=None, blocks=None):
    """Breadth-first permutation of the unknowns.

    ``graph`` is an adjacency over nodes and ``blocks`` a (nnodes, k) array of
    the unknowns attached to each node, kept consecutive.  Without them the
    matrix graph itself is traversed.
    """
    if graph is None:
        g = sp.csr_matrix(A, copy=True)
        g.data[:] = 1.0
        return bfs_order(g)
    order = bfs_order(sp.csr_matrix(graph))
    if blocks is None:
        return order
    blocks = np.asarray(blocks)
    return blocks[order].ravel()


@dataclass
class EnvelopeSymbolic:
    """Ordering, envelope structure and the scatter map from ``A.data`` into it."""

    perm: np.ndarray
    first: np.ndarray
    ptr: np.ndarray
    src: np.ndarray  # positions in A.data (lower triangle after permutation)
    dst: np.ndarray  # matching positions in the envelope value array
    nnz_A: int


def analyse_envelope(A, perm):
    A = as_csr(A)
    n = A.shape[0]
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    rows = inv[np.repeat(np.arange(n), np.diff(A.indptr))]
    cols = inv[A.indices]
    lower = np.flatnonzero(cols <= rows)
    first = np.arange(n, dtype=np.int64)
    np.minimum.at(first, rows[lower], cols[lower])
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(np.arange(n) - first + 1)
    dst = ptr[rows[lower]] + cols[lower] - first[rows[lower]]
    return EnvelopeSymbolic(np.asarray(perm, dtype=np.int64), first, ptr, lower, dst, A.nnz)


def factor_numeric(sym, A, out=None):
    """Numeric envelope factorization; ``A`` must have the analysed pattern."""
    if out is None:
        out = np.empty(sym.ptr[-1])
    val = out
    bad = _scatter_factor(A.data, sym.src, sym.dst, sym.first, sym.ptr, val)
    if bad >= 0:
        raise SolverError(f"non-positive pivot at position {bad}: matrix is not SPD")
    return val


def sparse_cholesky_bfs(A, graph=None, blocks=None):
    """Envelope Cholesky factorization under breadth-first ordering."""
    A = as_csr(A)
    perm = np.asarray(bfs_permutation(A, graph, blocks), dtype=np.int64)
    if len(perm) != A.shape[0] or len(np.unique(perm)) != len(perm):
        raise ValueError("ordering does not cover every unknown exactly once")
    sym = analyse_envelope(A, perm)
    val = factor_numeric(sym, A)
    return CholeskyFactor(perm, sym.first, sym.ptr, val, nnz_A=sym.nnz_A,
                          nnz_L=int(np.count_nonzero(val)), symbolic=sym)


# ----------------------------------------------------------------------------
# spectral diagnostics


def lanczos_extremes(A, steps=200, seed_vector=None):
    """Extreme Ritz values after ``steps`` Lanczos steps with full reorthogonalisation."""
    n = A.shape[0]
    steps = min(steps, n)
    q = np.ones(n) if seed_vector is None else np.asarray(seed_vector, dtype=float)
    # deterministic, generic start vector
    q = q + 0.1 * np.sin(np.arange(1, n + 1))
    q /= np.linalg.norm(q)
    Q = np.zeros((steps + 1, n))
    Q[0] = q
    alpha = np.zeros(steps)
    beta = np.zeros(steps)
    m = steps
    for j in range(steps):
        w = A @ Q[j]
        alpha[j] = Q[j] @ w
        w -= alpha[j] * Q[j]
        if j > 0:
            w -= beta[j - 1] * Q[j - 1]
        w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-14 * abs(alpha[j]):
            m = j + 1
            break
        Q[j + 1] = w / beta[j]
    T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    ev = np.linalg.eigvalsh(T)
    return ev[0], ev[-1]


DENSE_LIMIT = 2500


def estimate_condition(A, scale=False, method="auto", steps=200):
    """Spectral condition number of an SPD matrix (optionally Jacobi-scaled)."""
    A = as_csr(A)
    if scale:
        d = 1.0 / np.sqrt(A.diagonal())
        A = as_csr(sp.diags(d) @ A @ sp.diags(d))
    if method == "auto":
        method = "dense" if A.shape[0] <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        ev = np.linalg.eigvalsh(A.toarray())
        lo, hi = ev[0], ev[-1]
    else:
        lo, hi = lanczos_extremes(A, steps)
    if lo <= 0:
        return np.inf
    return float(hi / lo)


def export_matrix(A, path, comment=""):
    """Write ``A`` in Matrix Market coordinate format."""
    try:
        with open(path, "wb") as fh:
            scipy.io.mmwrite(fh, sp.coo_matrix(A), comment=comment, symmetry="general")
    except OSError as exc:
        raise OSError(f"cannot write matrix to {path}: {exc}") from exc
