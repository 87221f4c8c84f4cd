"""Manufactured-solution convergence harness.

Provides closed-form elasticity benchmark cases on the unit cube, a
solve pipeline (assemble -> eliminate -> conjugate gradients -> recover),
Gauss-quadrature error norms, and mesh-refinement studies with observed
convergence rates.

Conventions used throughout:

* displacement gradient (grad u)_{ij} = d u_i / d x_j,
* rotation tensor gamma = (grad u - grad u^T) / 2, stored as the
  3-vector p with gamma = xi(p) (see :func:`msmfe.ref_elements.xi`),
* body force f = row-wise divergence of the stress, f_i = sum_j d sigma_{ij} / d x_j,
* all errors are reported relative to the corresponding exact-solution norm.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._quadrature import gauss_cube
from .assembly import METHODS, AssembledSystem, assemble_system
from .linsolve import SolverReport, cg_solve
from .material import ComplianceField, lame_from_E_nu
from .mesh import StructuredMesh, build_mesh, unit_box
from .reduction import (
    ReducedSystem,
    SolutionFields,
    eliminate_rotation,
    eliminate_stress,
    recover_fields,
)
from .ref_elements import Ert0Basis, hat_values

# error-table column keys, in reporting order
COLUMNS = ("sigma", "div_sigma", "u", "qu", "gamma")


# ----------------------------------------------------------------------
# manufactured cases
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    """A closed-form exact solution paired with a discretization choice.

    ``rotation`` returns the 3-vector representation of whatever rotation
    variable the chosen method approximates (the plain rotation for
    "msmfe0"/"msmfe1", the stiffness-scaled rotation for "msmfe1-scaled").
    """

    name: str
    method: str
    material: ComplianceField
    displacement: Callable[[np.ndarray], np.ndarray]
    stress: Callable[[np.ndarray], np.ndarray]
    rotation: Callable[[np.ndarray], np.ndarray]
    body_force: Callable[[np.ndarray], np.ndarray]


def _rotation_case_one(pts, lam, mu):
    del lam, mu
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    a = math.pi / 12.0
    c, s = math.cos(a), math.sin(a)
    E = np.exp(x)
    g2 = (1.0 - c) * y + s * z + 0.5 * (c - s - 1.0)
    g3 = -s * y + (1.0 - c) * z + 0.5 * (s + c - 1.0)
    p = np.empty_like(pts)
    p[:, 0] = (E - 1.0) * s
    p[:, 1] = 0.5 * E * g3
    p[:, 2] = -0.5 * E * g2
    return p


def _case_one_fields(lam: float, mu: float):
    """Rotated-exponential displacement field with constitutive data (lam, mu)."""
    a = math.pi / 12.0
    c, s = math.cos(a), math.sin(a)

    def parts(pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        E = np.exp(x)
        g2 = (1.0 - c) * y + s * z + 0.5 * (c - s - 1.0)
        g3 = -s * y + (1.0 - c) * z + 0.5 * (s + c - 1.0)
        return E, g2, g3

    def displacement(pts):
        E, g2, g3 = parts(pts)
        u = np.zeros_like(pts)
        u[:, 1] = -(E - 1.0) * g2
        u[:, 2] = -(E - 1.0) * g3
        return u

    def stress(pts):
        E, g2, g3 = parts(pts)
        d = -2.0 * (E - 1.0) * (1.0 - c)  # trace of the strain
        sig = np.zeros((pts.shape[0], 3, 3))
        sig[:, 0, 0] = lam * d
        sig[:, 1, 1] = 2.0 * mu * (-(E - 1.0) * (1.0 - c)) + lam * d
        sig[:, 2, 2] = sig[:, 1, 1]
        sig[:, 0, 1] = sig[:, 1, 0] = -mu * E * g2
        sig[:, 0, 2] = sig[:, 2, 0] = -mu * E * g3
        return sig

    def body_force(pts):
        E, g2, g3 = parts(pts)
        f = np.empty_like(pts)
        f[:, 0] = -2.0 * (lam + mu) * E * (1.0 - c)
        f[:, 1] = -mu * E * g2
        f[:, 2] = -mu * E * g3
        return f

    def rotation(pts):
        return _rotation_case_one(pts, lam, mu)

    return displacement, stress, rotation, body_force


def example_one(method: str = "msmfe0", lam: float = 123.0, mu: float = 79.3) -> ManufacturedCase:
    """Smooth benchmark with a homogeneous isotropic material."""
    disp, stress, plain_rot, force = _case_one_fields(lam, mu)
    if method == "msmfe1-scaled":
        def rot(pts):
            return 2.0 * mu * plain_rot(pts)
    else:
        rot = plain_rot
    return ManufacturedCase(
        name="smooth-homogeneous",
        method=method,
        material=ComplianceField.constant(lam, mu),
        displacement=disp,
        stress=stress,
        rotation=rot,
        body_force=force,
    )


def example_two(method: str = "msmfe0", kappa: float = 1.0e6) -> ManufacturedCase:
    """Discontinuous-coefficient benchmark (stiff corner subcube).

    Both Lame parameters equal ``kappa`` on [0, 1/2)^3 and 1 elsewhere; the
    displacement scales inversely with the stiffness so that the stress is
    globally smooth and independent of ``kappa``.
    """
    two_pi = 2.0 * math.pi

    def _L(pts):
        inside = np.max(pts, axis=1) < 0.5
        return np.where(inside, kappa, 1.0)

    def _s_and_grad(pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        sx, cx = np.sin(two_pi * x), np.cos(two_pi * x)
        sy, cy = np.sin(two_pi * y), np.cos(two_pi * y)
        sz, cz = np.sin(two_pi * z), np.cos(two_pi * z)
        s = sx * sy * sz
        g = np.stack(
            [two_pi * cx * sy * sz, two_pi * sx * cy * sz, two_pi * sx * sy * cz],
            axis=1,
        )
        return s, g

    def displacement(pts):
        s, _ = _s_and_grad(pts)
        return (s / _L(pts))[:, None] * np.ones(3)

    def stress(pts):
        _, g = _s_and_grad(pts)
        sig = g[:, :, None] + g[:, None, :]
        div = g.sum(axis=1)
        sig[:, np.arange(3), np.arange(3)] += div[:, None]
        return sig

    def body_force(pts):
        # f_i = laplacian(s) + 2 d_i (div of (s, s, s))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        sx, cx = np.sin(two_pi * x), np.cos(two_pi * x)
        sy, cy = np.sin(two_pi * y), np.cos(two_pi * y)
        sz, cz = np.sin(two_pi * z), np.cos(two_pi * z)
        lap = -3.0 * two_pi**2 * sx * sy * sz
        w = two_pi**2
        hxx = -w * sx * sy * sz
        hxy = w * cx * cy * sz
        hxz = w * cx * sy * cz
        hyz = w * sx * cy * cz
        f = np.empty_like(pts)
        f[:, 0] = lap + 2.0 * (hxx + hxy + hxz)
        f[:, 1] = lap + 2.0 * (hxy + hxx + hyz)
        f[:, 2] = lap + 2.0 * (hxz + hyz + hxx)
        return f

    def rotation(pts):
        _, g = _s_and_grad(pts)
        # gamma_{ij} = (d_j s - d_i s) / (2 L); p_l collects the (3,2),(1,3),(2,1) slots
        p = np.stack(
            [g[:, 1] - g[:, 2], g[:, 2] - g[:, 0], g[:, 0] - g[:, 1]], axis=1
        )
        if method == "msmfe1-scaled":
            return p  # scaled rotation 2 mu gamma, with 2 mu = 2 L
        return 0.5 * p / _L(pts)[:, None]

    return ManufacturedCase(
        name="stiff-inclusion",
        method=method,
        material=ComplianceField.checker_corner(kappa),
        displacement=displacement,
        stress=stress,
        rotation=rotation,
        body_force=body_force,
    )


def example_three(nu_exponent: int = 5, E: float = 1.0e5, method: str = "msmfe1") -> ManufacturedCase:
    """Nearly incompressible benchmark: nu = 0.5 - 10**(-nu_exponent)."""
    nu = 0.5 - 10.0 ** (-float(nu_exponent))
    lam, mu = lame_from_E_nu(E, nu)
    case = example_one(method=method, lam=lam, mu=mu)
    return ManufacturedCase(
        name=f"near-incompressible-k1e-{nu_exponent}",
        method=case.method,
        material=case.material,
        displacement=case.displacement,
        stress=case.stress,
        rotation=case.rotation,
        body_force=case.body_force,
    )


def make_case(example: int, method: str | None = None, **params) -> ManufacturedCase:
    """Build one of the numbered benchmark cases by id (1, 2, or 3)."""
    if example == 1:
        kw = {k: params[k] for k in ("lam", "mu") if k in params}
        return example_one(method=method or "msmfe0", **kw)
    if example == 2:
        kw = {k: params[k] for k in ("kappa",) if k in params}
        return example_two(method=method or "msmfe0", **kw)
    if example == 3:
        kw = {k: params[k] for k in ("nu_exponent", "E") if k in params}
        return example_three(method=method or "msmfe1", **kw)
    raise ValueError(f"unknown example id: {example!r}")


# ----------------------------------------------------------------------
# finite-difference cross checks (used by the verification tests)
# ----------------------------------------------------------------------


def fd_gradient(fn, pts, step: float = 1.0e-5) -> np.ndarray:
    """Central-difference Jacobian of a vector field: out[n, i, j] = d fn_i / d x_j."""
    n = pts.shape[0]
    out = np.empty((n, fn(pts).shape[1], 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = step
        out[:, :, j] = (fn(pts + dp) - fn(pts - dp)) / (2.0 * step)
    return out


def fd_body_force(case: ManufacturedCase, pts, step: float = 1.0e-5) -> np.ndarray:
    """Central-difference row divergence of the case stress field."""
    f = np.zeros((pts.shape[0], 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = step
        f += (case.stress(pts + dp)[:, :, j] - case.stress(pts - dp)[:, :, j]) / (2.0 * step)
    return f


def fields_from_displacement(case: ManufacturedCase, pts, step: float = 1.0e-5):
    """Stress and rotation vector recomputed from the displacement by differences.

    Returns (stress, rotation_vector) where the rotation vector is the plain
    (unscaled) one; callers handle the scaled variant themselves.
    """
    grad = fd_gradient(case.displacement, pts, step)
    eps = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    lam, mu = case.material.sample(pts)
    sig = 2.0 * mu[:, None, None] * eps
    tr = np.einsum("nii->n", eps)
    sig[:, np.arange(3), np.arange(3)] += (lam * tr)[:, None]
    gam = 0.5 * (grad - np.swapaxes(grad, 1, 2))
    p = np.stack([gam[:, 2, 1], gam[:, 0, 2], gam[:, 1, 0]], axis=1)
    return sig, p


# ----------------------------------------------------------------------
# solve pipeline
# ----------------------------------------------------------------------


@dataclass
class CaseResult:
    asm: AssembledSystem
    reduced: ReducedSystem
    fields: SolutionFields
    report: SolverReport
    wall_time: float


def solve_case(
    case: ManufacturedCase,
    n: int,
    tol: float = 1.0e-10,
    maxit: int | None = None,
    jacobi: bool = True,
) -> CaseResult:
    """Assemble and solve one refinement level (an n x n x n grid)."""
    if case.method not in METHODS:
        raise ValueError(f"unknown method: {case.method!r}")
    t0 = time.perf_counter()
    mesh = build_mesh(unit_box(), (n, n, n))
    asm = assemble_system(
        mesh, case.material, case.method, case.body_force, case.displacement
    )
    red = eliminate_stress(asm)
    if case.method != "msmfe0":
        red = eliminate_rotation(red)
    x, report = cg_solve(red.matrix, red.rhs, tol=tol, maxit=maxit, jacobi=jacobi)
    fields = recover_fields(asm, red, x)
    return CaseResult(asm, red, fields, report, time.perf_counter() - t0)


# ----------------------------------------------------------------------
# error norms
# ----------------------------------------------------------------------

_GAUSS_N = 3
_CHUNK = 4096


def _stress_at(asm: AssembledSystem, sigma_dofs, cells, ref_pts, phi):
    """Physical stress tensors at reference points in the given cells.

    Returns an array of shape (ncell, npts, 3, 3): rows are the stress rows,
    columns the physical components.
    """
    dm = asm.dofmap
    mesh = asm.mesh
    vals = sigma_dofs[dm.cell_sdof[cells]] * dm.ref_sign[None, :, None]
    out = np.einsum("njr,pja->npra", vals, phi)
    out *= mesh.h[None, None, None, :] / mesh.jacobian_det
    return out


def error_norms(asm: AssembledSystem, fields: SolutionFields, case: ManufacturedCase) -> dict:
    """Relative L2 errors of the five reported quantities on one mesh."""
    mesh = asm.mesh
    dm = asm.dofmap
    basis = asm.basis
    J = mesh.jacobian_det
    ref_pts, wts = gauss_cube(_GAUSS_N)
    phi = basis.eval_many(ref_pts)
    hats = hat_values(ref_pts)  # (npts, 8) trilinear weights, cell-vertex order

    gamma_h = fields.gamma.reshape(-1, 3)
    per_vertex = case.method != "msmfe0"

    err2 = dict.fromkeys(COLUMNS, 0.0)
    ex2 = dict.fromkeys(COLUMNS, 0.0)

    for lo in range(0, mesh.ncells, _CHUNK):
        cells = np.arange(lo, min(lo + _CHUNK, mesh.ncells))
        origins = mesh.cell_origins[cells]
        pts = origins[:, None, :] + ref_pts[None, :, :] * mesh.h
        flat = pts.reshape(-1, 3)

        # stress
        sig_h = _stress_at(asm, fields.sigma, cells, ref_pts, phi)
        sig_e = case.stress(flat).reshape(len(cells), -1, 3, 3)
        d2 = np.einsum("npra,npra->np", sig_e - sig_h, sig_e - sig_h)
        n2 = np.einsum("npra,npra->np", sig_e, sig_e)
        err2["sigma"] += J * float((d2 * wts).sum())
        ex2["sigma"] += J * float((n2 * wts).sum())

        # divergence of the stress (constant per cell for this element)
        vals = fields.sigma[dm.cell_sdof[cells]] * dm.ref_sign[None, :, None]
        div_h = np.einsum("njr,j->nr", vals, basis.div_consts) / J
        div_e = case.body_force(flat).reshape(len(cells), -1, 3)
        dd = div_e - div_h[:, None, :]
        err2["div_sigma"] += J * float((np.einsum("npr,npr->np", dd, dd) * wts).sum())
        ex2["div_sigma"] += J * float((np.einsum("npr,npr->np", div_e, div_e) * wts).sum())

        # displacement (piecewise constant) and its cell-average projection
        u_e = case.displacement(flat).reshape(len(cells), -1, 3)
        u_h = fields.u[cells]
        du = u_e - u_h[:, None, :]
        err2["u"] += J * float((np.einsum("npr,npr->np", du, du) * wts).sum())
        ex2["u"] += J * float((np.einsum("npr,npr->np", u_e, u_e) * wts).sum())
        u_bar = np.einsum("npr,p->nr", u_e, wts)
        dq = u_bar - u_h
        err2["qu"] += J * float(np.einsum("nr,nr->", dq, dq))
        ex2["qu"] += J * float(np.einsum("nr,nr->", u_bar, u_bar))

        # rotation (3-vector representation; relative errors are identical
        # to the tensor Frobenius version)
        p_e = case.rotation(flat).reshape(len(cells), -1, 3)
        if per_vertex:
            pv = gamma_h[mesh.cell_vertices[cells]]  # (n, 8, 3)
            p_h = np.einsum("pv,nvr->npr", hats, pv)
        else:
            p_h = np.broadcast_to(gamma_h[cells][:, None, :], p_e.shape)
        dp = p_e - p_h
        err2["gamma"] += J * float((np.einsum("npr,npr->np", dp, dp) * wts).sum())
        ex2["gamma"] += J * float((np.einsum("npr,npr->np", p_e, p_e) * wts).sum())

    # Fall back to absolute errors for identically-zero exact quantities.
    return {
        k: math.sqrt(err2[k]) / (math.sqrt(ex2[k]) if ex2[k] > 0.0 else 1.0)
        for k in COLUMNS
    }


# ----------------------------------------------------------------------
# structural checks
# ----------------------------------------------------------------------


def conservation_residual(res: CaseResult) -> float:
    """Max-norm mismatch between div sigma_h and the cell-averaged body
    force; zero (to solver accuracy) because divergence is imposed exactly
    and div of the stress space is cellwise constant."""
    asm = res.asm
    r = asm.asu @ res.fields.sigma - asm.rhs_u
    return float(np.abs(r).max() / asm.mesh.jacobian_det)


def weak_symmetry_residual(res: CaseResult) -> float:
    """Max-norm residual of the method's weak-symmetry constraint
    (sigma_h, w) = 0 over the rotation test space."""
    return float(np.abs(res.asm.asg @ res.fields.sigma).max())


# ----------------------------------------------------------------------
# refinement studies
# ----------------------------------------------------------------------


@dataclass
class StudyRow:
    n: int
    errors: dict
    rates: dict | None
    iterations: int
    wall_time: float

    @property
    def h(self) -> float:
        return 1.0 / self.n


def convergence_study(
    case: ManufacturedCase,
    levels: Sequence[int],
    tol: float = 1.0e-10,
    maxit: int | None = None,
) -> list[StudyRow]:
    """Solve on each grid in ``levels`` (cells per direction) and tabulate
    relative errors with observed rates between consecutive levels."""
    rows: list[StudyRow] = []
    prev: dict | None = None
    for n in levels:
        res = solve_case(case, n, tol=tol, maxit=maxit)
        errs = error_norms(res.asm, res.fields, case)
        rates = None
        if prev is not None:
            rates = {k: math.log2(prev[k] / errs[k]) for k in COLUMNS}
        rows.append(StudyRow(n, errs, rates, res.report.iterations, res.wall_time))
        prev = errs
    return rows


def format_study(rows: Sequence[StudyRow]) -> str:
    """Fixed-width text table of a refinement study."""
    heads = {"sigma": "sigma", "div_sigma": "div", "u": "u", "qu": "Qu-u", "gamma": "gamma"}
    out = ["  1/h  " + "".join(f"{heads[k]:>11s} rate " for k in COLUMNS)]
    for row in rows:
        line = f"{row.n:5d}  "
        for k in COLUMNS:
            r = "   --" if row.rates is None else f"{row.rates[k]:5.2f}"
            line += f"{row.errors[k]:>11.3E} {r} "
        out.append(line)
    return "\n".join(out)
