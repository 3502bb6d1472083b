"""Quadrature rules on simplices of arbitrary dimension.

Rules are conical (collapsed-coordinate) products of Gauss-Jacobi rules, so
every rule is exact up to its declared degree with strictly positive weights.
"""
from dataclasses import dataclass
from functools import lru_cache
from math import ceil, factorial

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates, weights normalised to sum to one.

    The integral over a simplex ``S`` is ``|S| * sum(w * f(x))``.
    """

    bary: np.ndarray  # (npts, dim + 1)
    weights: np.ndarray  # (npts,)
    dim: int
    degree: int

    def points(self, vertices):
        """Map the rule to physical simplices.

        ``vertices`` has shape ``(..., dim + 1, ambient)``; the result has
        shape ``(..., npts, ambient)``.
        """
        return np.einsum("qk,...ka->...qa", self.bary, vertices)


def _gauss_jacobi_01(n, alpha):
    # nodes/weights on [0, 1] for the weight (1 - t)**alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim, degree):
    """Quadrature rule on the reference ``dim``-simplex, exact for ``degree``."""
    if dim == 0:
        return QuadratureRule(np.ones((1, 1)), np.ones(1), 0, degree)
    n = max(1, ceil((degree + 1) / 2))
    nodes, weights = [], []
    for k in range(dim):
        t, w = _gauss_jacobi_01(n, dim - 1 - k)
        nodes.append(t)
        weights.append(w)
    grids = np.meshgrid(*nodes, indexing="ij")
    wgrid = np.meshgrid(*weights, indexing="ij")
    t = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)

    # collapsed map: x_k = t_k * prod_{j<k} (1 - t_j)
    x = np.empty_like(t)
    scale = np.ones(len(t))
    for k in range(dim):
        x[:, k] = t[:, k] * scale
        scale = scale * (1.0 - t[:, k])
    bary = np.column_stack([1.0 - x.sum(axis=1), x])
    w = w * factorial(dim)
    w = w / w.sum()
    return QuadratureRule(bary, w, dim, degree)


def simplex_measure(vertices):
    """k-dimensional measure of simplices embedded in R^d.

    ``vertices`` has shape ``(..., k + 1, d)``.
    """
    vertices = np.asarray(vertices, dtype=float)
    k = vertices.shape[-2] - 1
    if k == 0:
        return np.ones(vertices.shape[:-2])
    edges = vertices[..., 1:, :] - vertices[..., :1, :]
    if k == vertices.shape[-1]:
        return np.abs(np.linalg.det(edges)) / factorial(k)
    gram = edges @ np.swapaxes(edges, -1, -2)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / factorial(k)


def integrate(f, vertices, degree):
    """Integrate ``f(x)`` over each simplex in ``vertices`` (shape ``(n, k+1, d)``)."""
    vertices = np.asarray(vertices, dtype=float)
    rule = simplex_rule(vertices.shape[-2] - 1, degree)
    x = rule.points(vertices)
    return simplex_measure(vertices) * (f(x) @ rule.weights)
