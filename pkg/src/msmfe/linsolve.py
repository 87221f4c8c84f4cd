"""Linear algebra backends: CG for the SPD reduced systems, a dense solve of
the full saddle system used as a test oracle, and batched SPD block inverses
for the vertex elimination."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class NegativeCurvatureError(RuntimeError):
    """CG hit p^T A p <= 0: the operator is not positive definite."""


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SolverReport:
    iterations: int
    relative_residual: float
    wall_time: float


class SparseSpdMatrix:
    """CSR matrix validated to be numerically symmetric on construction."""

    def __init__(self, matrix, sym_tol=1e-12):
        m = sp.csr_matrix(matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(abs(m.max()), abs(m.min()), 1e-300)
        asym = abs(m - m.T).max() / scale
        if asym > sym_tol:
            raise ValueError(f"matrix is not symmetric: relative asymmetry {asym:.3e}")
        self.matrix = m
        self.n = m.shape[0]
        self.nnz = m.nnz

    def matvec(self, x):
        return self.matrix @ x

    @property
    def diagonal(self):
        return self.matrix.diagonal()


def cg_solve(A, b, tol=1e-12, maxit=None, jacobi=False, x0=None):
    """Conjugate gradients to relative residual ||b - Ax|| / ||b|| <= tol.

    Raises NegativeCurvatureError when a search direction has non-positive
    curvature (non-SPD input) and ConvergenceError past maxit.
    """
    if not isinstance(A, SparseSpdMatrix):
        A = SparseSpdMatrix(A)
    b = np.asarray(b, dtype=float)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit is None:
        maxit = max(10 * A.n, 100)
    t0 = time.perf_counter()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolverReport(0, 0.0, time.perf_counter() - t0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A.matvec(x) if x.any() else b.copy()
    if jacobi:
        dinv = 1.0 / A.diagonal
        if not np.all(np.isfinite(dinv)):
            raise ValueError("zero diagonal entry; Jacobi preconditioner unusable")
        z = dinv * r
    else:
        dinv = None
        z = r
    p = z.copy()
    rz = r @ z
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol:
        if it >= maxit:
            raise ConvergenceError(
                f"CG did not reach tol {tol:.1e} in {maxit} iterations (residual {res:.3e})"
            )
        Ap = A.matvec(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            raise NegativeCurvatureError(
                f"non-positive curvature {pAp:.3e} at iteration {it}"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = dinv * r if jacobi else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolverReport(it, float(res), time.perf_counter() - t0)


def batched_spd_inverse(blocks, labels=None):
    """Inverses of a stack of SPD matrices via Cholesky.

    Raises LinAlgError naming the offending block (by label) when one is not
    positive definite.
    """
    blocks = np.asarray(blocks, dtype=float)
    try:
        L = np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        for i, blk in enumerate(blocks):
            try:
                np.linalg.cholesky(blk)
            except np.linalg.LinAlgError:
                tag = labels[i] if labels is not None else i
                raise np.linalg.LinAlgError(
                    f"block {tag} is not symmetric positive definite"
                ) from None
        raise
    Linv = np.linalg.inv(L)
    return np.einsum("nki,nkj->nij", Linv, Linv)


def saddle_oracle_solve(asm):
    """Dense direct solve of the full saddle system; test oracle for small grids.

    Returns (sigma, u, gamma) coefficient vectors.
    """
    if asm.mesh.ncells > 64:
        raise ValueError("saddle oracle is restricted to grids of at most 4^3 cells")
    A = asm.ass_sparse().toarray()
    B = asm.asu.toarray()
    C = asm.asg.toarray()
    ns, nu, ng = A.shape[0], B.shape[0], C.shape[0]
    n = ns + nu + ng
    M = np.zeros((n, n))
    M[:ns, :ns] = A
    M[:ns, ns : ns + nu] = B.T
    M[:ns, ns + nu :] = C.T
    M[ns : ns + nu, :ns] = B
    M[ns + nu :, :ns] = C
    rhs = np.concatenate([asm.rhs_sigma, asm.rhs_u, np.zeros(ng)])
    sol = scipy.linalg.solve(M, rhs, assume_a="sym")
    return sol[:ns], sol[ns : ns + nu], sol[ns + nu :]
