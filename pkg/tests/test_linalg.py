import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cutmg.errors import SolverError
from cutmg.experiments import ExperimentConfig
from cutmg.linalg import (estimate_condition, export_matrix, gauss_seidel_sweep, matvec,
                          pcg_jacobi, sparse_cholesky_bfs)
from cutmg.multigrid import MgConfig, build_hierarchy


def laplace1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1],
                    format="csr")


def laplace2d(n):
    t = laplace1d(n)
    i = sp.identity(n)
    return sp.csr_matrix(sp.kron(t, i) + sp.kron(i, t))


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return B @ B.T + n * np.eye(n)


def test_matvec():
    x = np.arange(4.0)
    np.testing.assert_array_equal(matvec(sp.identity(4, format="csr"), x), x)
    A = random_spd(10, 0)
    np.testing.assert_allclose(matvec(sp.csr_matrix(A), x.repeat(3)[:10]),
                               A @ x.repeat(3)[:10], rtol=1e-14)
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, 10))
    As = sp.csr_matrix(A)
    assert matvec(As, u) @ v == pytest.approx(u @ matvec(As, v), rel=1e-12)
    with pytest.raises(ValueError):
        matvec(As, np.ones(3))


def test_gauss_seidel_hand_iteration():
    A = laplace1d(3)
    x = np.zeros(3)
    gauss_seidel_sweep(A, x, np.ones(3), "forward")
    np.testing.assert_allclose(x, [0.5, 0.75, 0.875])
    # brute-force oracle: (D + L)^{-1} b
    Ad = A.toarray()
    np.testing.assert_allclose(x, np.linalg.solve(np.tril(Ad), np.ones(3)))
    y = np.zeros(3)
    gauss_seidel_sweep(A, y, np.ones(3), "backward")
    np.testing.assert_allclose(y, np.linalg.solve(np.triu(Ad), np.ones(3)))


def test_gauss_seidel_diagonal_and_fixed_point():
    d = np.array([2.0, 4.0, 5.0])
    x = np.zeros(3)
    gauss_seidel_sweep(sp.diags(d, format="csr"), x, d * 3.0)
    np.testing.assert_allclose(x, 3.0)
    A = laplace2d(6)
    exact = np.random.default_rng(0).standard_normal(36)
    x = exact.copy()
    gauss_seidel_sweep(A, x, A @ exact, "backward")
    np.testing.assert_allclose(x, exact, atol=1e-14)


def test_gauss_seidel_errors():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(SolverError):
        gauss_seidel_sweep(A, np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        gauss_seidel_sweep(laplace1d(2), np.zeros(2), np.ones(2), "sideways")


def test_pcg_trivial_systems():
    res = pcg_jacobi(sp.identity(5, format="csr"), np.arange(1.0, 6.0))
    assert res.iterations == 1 and res.converged
    d = np.array([1.0, 10.0, 100.0, 3.0])
    res = pcg_jacobi(sp.diags(d, format="csr"), np.ones(4))
    assert res.iterations == 1
    np.testing.assert_allclose(res.x, 1.0 / d)
    assert pcg_jacobi(laplace1d(4), np.zeros(4)).iterations == 0


def test_pcg_dense_oracle():
    A = random_spd(50, 3)
    b = np.random.default_rng(4).standard_normal(50)
    res = pcg_jacobi(sp.csr_matrix(A), b, rel_tol=1e-12)
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-8)


def test_pcg_energy_error_decreases():
    A = laplace2d(10)
    exact = np.random.default_rng(5).standard_normal(100)
    b = A @ exact
    errs = []
    for k in range(1, 25):
        x = pcg_jacobi(A, b, rel_tol=1e-30, max_iter=k).x
        e = x - exact
        errs.append(e @ (A @ e))
    assert np.all(np.diff(errs) <= 1e-12 * errs[0])


def test_pcg_detects_indefinite_and_caps():
    A = sp.diags([1.0, -1.0], format="csr")
    with pytest.raises(SolverError):
        pcg_jacobi(A, np.ones(2))
    res = pcg_jacobi(laplace2d(10), np.ones(100), rel_tol=1e-14, max_iter=2)
    assert not res.converged and res.iterations == 2


def test_cholesky_diagonal():
    d = np.array([4.0, 9.0, 16.0])
    fac = sparse_cholesky_bfs(sp.diags(d, format="csr"))
    np.testing.assert_allclose(fac.L().toarray(), np.diag(np.sqrt(d))[np.ix_(fac.perm, fac.perm)])
    assert fac.nnz_L == 3


def test_cholesky_tridiagonal_has_no_fill():
    A = laplace1d(20)
    fac = sparse_cholesky_bfs(A)
    L = fac.L().toarray()
    assert np.count_nonzero(np.tril(L, -2)) == 0
    assert fac.nnz_L / A.nnz <= 1.0


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_cholesky_reconstruction(n, seed):
    A = laplace2d(n)
    rng = np.random.default_rng(seed)
    A = sp.csr_matrix(A + sp.diags(rng.random(n * n)))
    fac = sparse_cholesky_bfs(A)
    P = A.toarray()[np.ix_(fac.perm, fac.perm)]
    L = fac.L().toarray()
    assert np.abs(P - L @ L.T).max() / np.abs(P).max() <= 1e-10
    b = rng.standard_normal(n * n)
    np.testing.assert_allclose(A @ fac.solve(b), b, atol=1e-10)


def test_cholesky_rejects_indefinite():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolverError):
        sparse_cholesky_bfs(A)


def test_cholesky_matches_pcg_on_interface_block():
    cfg = ExperimentConfig(method="pnitsche", mu1=0.01, levels=2)
    hier = build_hierarchy(cfg.meshes(), cfg.levelset(), cfg.discretization(),
                           MgConfig(smoother="gsic", gamma_solver="cholesky"), iso_p2=True)
    lev = hier[-1]
    b = np.random.default_rng(6).standard_normal(lev.A_gamma.shape[0])
    x_chol = lev.gamma_factor.solve(b)
    x_pcg = pcg_jacobi(lev.A_gamma, b, rel_tol=1e-14).x
    np.testing.assert_allclose(x_chol, x_pcg, atol=1e-8 * np.abs(x_pcg).max())


def test_condition_estimates():
    assert estimate_condition(sp.identity(7)) == pytest.approx(1.0)
    assert estimate_condition(sp.diags([1.0, 10.0]), scale=True) == pytest.approx(1.0)
    A = laplace1d(10)
    ev = np.linalg.eigvalsh(A.toarray())
    oracle = ev[-1] / ev[0]
    assert estimate_condition(A, method="lanczos") == pytest.approx(oracle, rel=0.05)
    assert estimate_condition(A, method="dense") == pytest.approx(oracle, rel=1e-10)
    big = laplace2d(20)
    assert estimate_condition(big, method="lanczos") == pytest.approx(
        estimate_condition(big, method="dense"), rel=0.05)


def test_export_matrix(tmp_path):
    A = laplace1d(5)
    path = tmp_path / "a.mtx"
    export_matrix(A, path, comment="test")
    back = scipy.io.mmread(str(path))
    np.testing.assert_array_equal(back.toarray(), A.toarray())
    with pytest.raises(OSError):
        export_matrix(A, tmp_path / "missing" / "a.mtx")
