import numpy as np
import pytest
import scipy.sparse as sp

from msmfe import (
    ConvergenceError,
    NegativeCurvatureError,
    SparseSpdMatrix,
    batched_spd_inverse,
    cg_solve,
)


def _random_spd(n, seed=0, cond=None):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(1.0, 10.0, n) if cond is None else np.geomspace(1.0, cond, n)
    return q @ np.diag(eig) @ q.T


def test_cg_matches_direct_solve():
    a = _random_spd(40, seed=1)
    b = np.random.default_rng(2).standard_normal(40)
    x, report = cg_solve(sp.csr_matrix(a), b, tol=1e-12)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-9)
    assert report.relative_residual <= 1e-12
    assert report.iterations <= 40 + 5


def test_jacobi_preconditioning_helps_on_skewed_diagonal():
    a = _random_spd(60, seed=3, cond=1e6)
    d = np.geomspace(1.0, 1e3, 60)
    a = d[:, None] * a * d[None, :]
    b = np.ones(60)
    x_pc, rep_pc = cg_solve(sp.csr_matrix(a), b, tol=1e-10, jacobi=True, maxit=20000)
    np.testing.assert_allclose(a @ x_pc, b, atol=1e-8 * np.abs(b).max())
    assert rep_pc.iterations < 20000


def test_convergence_error_carries_residual():
    a = _random_spd(50, seed=4, cond=1e8)
    b = np.ones(50)
    with pytest.raises(ConvergenceError):
        cg_solve(sp.csr_matrix(a), b, tol=1e-14, maxit=3)


def test_negative_curvature_detected():
    a = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(NegativeCurvatureError):
        cg_solve(sp.csr_matrix(a), np.array([1.0, 1.0, 1.0]), tol=1e-12)


def test_asymmetric_matrix_rejected():
    m = np.array([[2.0, 1.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        SparseSpdMatrix(sp.csr_matrix(m))
    with pytest.raises(ValueError):
        SparseSpdMatrix(sp.csr_matrix(np.ones((2, 3))))


def test_batched_spd_inverse():
    rng = np.random.default_rng(5)
    blocks = np.stack([_random_spd(6, seed=s) for s in range(8)])
    inv = batched_spd_inverse(blocks)
    eye = np.broadcast_to(np.eye(6), (8, 6, 6))
    np.testing.assert_allclose(np.einsum("nij,njk->nik", blocks, inv), eye, atol=1e-10)
    bad = blocks.copy()
    bad[3] = np.diag([1.0, 1.0, -1.0, 1.0, 1.0, 1.0])
    with pytest.raises(np.linalg.LinAlgError):
        batched_spd_inverse(bad)
