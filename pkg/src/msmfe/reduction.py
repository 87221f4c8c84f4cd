"""Local eliminations to cell-centered SPD systems.

Stress unknowns are eliminated vertex by vertex (the stress-stress form is
block diagonal over vertices); the Schur complement couples displacement and
rotation unknowns of the cells around each vertex, giving a <= 27-cell
stencil.  For the trilinear-rotation methods the rotation block is 3x3 per
vertex and is eliminated in a second local pass, leaving displacements only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import AssembledSystem
from .linsolve import SparseSpdMatrix, batched_spd_inverse
from .mesh import FACE_SIGN
from .ref_elements import XI_BASIS

_CHUNK = 4096


@dataclass
class ReducedSystem:
    """Cell-centered SPD system after elimination.

    unknowns = "ug" for the displacement-rotation system, "u" after rotation
    elimination.  The split pieces (auu/aug/rotation blocks) are retained for
    the second elimination and field recovery.
    """

    method: str
    unknowns: str
    matrix: SparseSpdMatrix
    rhs: np.ndarray
    nu: int
    f_tilde: np.ndarray
    h_tilde: np.ndarray
    n_factorizations: int
    auu: sp.csr_matrix | None = None
    aug: sp.csr_matrix | None = None
    rot_blocks: np.ndarray | None = None  # (nverts, 3, 3) for trilinear rotations
    rot_blocks_inv: np.ndarray | None = None


@dataclass
class SolutionFields:
    method: str
    sigma: np.ndarray  # stress coefficients, indexed by DofMap.sdof
    u: np.ndarray  # (ncells, 3)
    gamma: np.ndarray  # (ncells, 3) for msmfe0, (nverts, 3) otherwise


def _local_couplings(asm: AssembledSystem, verts, d):
    """Dense per-vertex restrictions of the divergence and rotation couplings.

    Returns (bloc, cloc, urows, grows): bloc is (n, 24, s) mapping the vertex
    stress block to the 3 displacement dofs of each of the <= 8 incident
    cells; cloc analogous for rotations (24 rows for msmfe0, 3 for the
    trilinear variants); urows/grows give global row ids, -1 on padding.
    """
    mesh, dm = asm.mesh, asm.dofmap
    n = len(verts)
    s = 3 * d
    h = mesh.h
    basis = asm.basis

    faces = dm.vfaces[verts][:, :d]  # (n, d)
    cn = dm.vface_corner[verts][:, :d]
    axis = mesh.face_axis[faces]
    free = ~asm.dofmap.constrained[dm.sdof[faces, cn, 0]]  # per (n, d) face

    divref = (FACE_SIGN[:, None] * basis.div_consts.reshape(6, 4))  # (pos, corner)

    bloc = np.zeros((n, 24, s))
    crows = 24 if asm.method == "msmfe0" else 3
    cloc = np.zeros((n, crows, s))
    gidx = np.arange(n)[:, None]
    t3 = 3 * np.arange(d)[None, :]

    for side in range(2):
        adj = mesh.face_cells[faces, side]
        valid = (adj >= 0) & free
        esafe = np.where(valid, adj, 0)
        vloc = np.argmax(mesh.cell_vertices[esafe] == verts[:, None, None], axis=2)
        p = dm.cell_pos[esafe, vloc]
        pos = 2 * axis + (1 - side)  # local face position inside the cell
        bval = np.where(valid, divref[pos, cn], 0.0)
        for r in range(3):
            bloc[gidx, 3 * p + r, t3 + r] += bval
        if asm.method == "msmfe0":
            # vertex-quadrature rotation coupling: (1/8) h_a Xi(e_l)[r, a]
            # per adjacent cell, matching assemble_Asg
            xi_a = np.moveaxis(XI_BASIS[:, :, axis], (0, 1), (2, 3))  # (n, d, l, r)
            cval = np.where(valid, 0.125 * h[axis], 0.0)[:, :, None, None] * xi_a
            for l in range(3):
                for r in range(3):
                    cloc[gidx, 3 * p + l, t3 + r] += cval[:, :, l, r]
        else:
            # rotation dof (vertex, l) vs stress dof (face slot, r):
            # h_a Xi(e_l)[r, a] / 8 per adjacent cell, compliance-scaled at
            # the vertex for the modified variant
            if asm.method == "msmfe1":
                w = np.where(valid, 0.125, 0.0)
            else:
                coords = np.broadcast_to(
                    mesh.vertex_coords[verts][:, None, :], (n, d, 3)
                ).reshape(-1, 3)
                cent = (mesh.cell_origins[esafe] + 0.5 * h).reshape(-1, 3)
                _, mu = asm.material.sample_nudged(coords, cent)
                w = np.where(valid, 0.125 / (2.0 * mu.reshape(n, d)), 0.0)
            xi_a = np.moveaxis(XI_BASIS[:, :, axis], (0, 1), (2, 3))  # (n, d, l, r)
            cval = (w * h[axis])[:, :, None, None] * xi_a
            for l in range(3):
                for r in range(3):
                    cloc[gidx, l, t3 + r] += cval[:, :, l, r]

    cells = dm.vcells[verts]  # (n, 8), -1 padded
    urows = np.where(cells[:, :, None] >= 0, 3 * cells[:, :, None] + np.arange(3), -1)
    urows = urows.reshape(n, 24)
    if asm.method == "msmfe0":
        grows = urows
    else:
        grows = 3 * verts[:, None] + np.arange(3)
    return bloc, cloc, urows, grows


def _scatter(coo_lists, vals, rows_idx, cols_idx):
    mask = vals != 0.0
    rows = np.broadcast_to(rows_idx[:, :, None], vals.shape)[mask]
    cols = np.broadcast_to(cols_idx[:, None, :], vals.shape)[mask]
    coo_lists[0].append(rows)
    coo_lists[1].append(cols)
    coo_lists[2].append(vals[mask])


def eliminate_stress(asm: AssembledSystem) -> ReducedSystem:
    """Schur complement onto (u, gamma) after per-vertex stress elimination."""
    dm = asm.dofmap
    nu = dm.nudof
    ng = dm.ngdof(asm.method)
    f_acc = np.zeros(nu)
    h_acc = np.zeros(ng)
    uu = ([], [], [])
    ug = ([], [], [])
    gg = ([], [], [])
    nfact = 0
    rot_blocks = np.zeros((asm.mesh.nverts, 3, 3)) if asm.method != "msmfe0" else None

    for size, verts in dm.size_groups:
        d = size // 3
        for lo in range(0, len(verts), _CHUNK):
            vchunk = verts[lo : lo + _CHUNK]
            blocks = dm.gather_blocks(vchunk, size, asm.ass_flat)
            kinv = batched_spd_inverse(blocks, labels=vchunk)
            nfact += len(vchunk)
            bloc, cloc, urows, grows = _local_couplings(asm, vchunk, d)
            bk = np.einsum("nis,nst->nit", bloc, kinv)
            s_uu = np.einsum("nit,njt->nij", bk, bloc)
            s_ug = np.einsum("nit,njt->nij", bk, cloc)
            ck = np.einsum("nis,nst->nit", cloc, kinv)
            s_gg = np.einsum("nit,njt->nij", ck, cloc)
            _scatter(uu, s_uu, urows, urows)
            _scatter(ug, s_ug, urows, grows)
            _scatter(gg, s_gg, grows, grows)
            if rot_blocks is not None:
                rot_blocks[vchunk] += s_gg
            rsig = asm.rhs_sigma[dm.group_start[vchunk][:, None] + np.arange(size)]
            y = np.einsum("nst,nt->ns", kinv, rsig)
            fv = np.einsum("nis,ns->ni", bloc, y)
            np.add.at(f_acc, np.where(urows >= 0, urows, 0).ravel(), (fv * (urows >= 0)).ravel())
            hv = np.einsum("nis,ns->ni", cloc, y)
            np.add.at(h_acc, np.where(grows >= 0, grows, 0).ravel(), (hv * (grows >= 0)).ravel())

    def _csr(lists, shape):
        if not lists[0]:
            return sp.csr_matrix(shape)
        return sp.coo_matrix(
            (np.concatenate(lists[2]), (np.concatenate(lists[0]), np.concatenate(lists[1]))),
            shape=shape,
        ).tocsr()

    auu = _csr(uu, (nu, nu))
    aug = _csr(ug, (nu, ng))
    agg = _csr(gg, (ng, ng))
    f_tilde = f_acc - asm.rhs_u
    h_tilde = h_acc
    full = sp.bmat([[auu, aug], [aug.T, agg]], format="csr")
    return ReducedSystem(
        method=asm.method,
        unknowns="ug",
        matrix=SparseSpdMatrix(full),
        rhs=np.concatenate([f_tilde, h_tilde]),
        nu=nu,
        f_tilde=f_tilde,
        h_tilde=h_tilde,
        n_factorizations=nfact,
        auu=auu,
        aug=aug,
        rot_blocks=rot_blocks,
    )


def eliminate_rotation(red: ReducedSystem) -> ReducedSystem:
    """Second local elimination for the trilinear-rotation methods: the
    rotation Schur block is 3x3 per vertex, leaving a displacement-only
    SPD system."""
    if red.rot_blocks is None:
        raise ValueError("rotation elimination applies to the trilinear-rotation methods only")
    nv = red.rot_blocks.shape[0]
    try:
        rinv = batched_spd_inverse(red.rot_blocks, labels=np.arange(nv))
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(f"singular rotation block: {err}") from None
    idx = 3 * np.arange(nv)[:, None] + np.arange(3)
    i = np.broadcast_to(idx[:, :, None], (nv, 3, 3)).ravel()
    j = np.broadcast_to(idx[:, None, :], (nv, 3, 3)).ravel()
    rinv_sp = sp.coo_matrix((rinv.ravel(), (i, j)), shape=(3 * nv, 3 * nv)).tocsr()
    schur = red.aug @ rinv_sp @ red.aug.T
    mat = red.auu - schur
    mat = (mat + mat.T) * 0.5
    rhs = red.f_tilde - red.aug @ (rinv_sp @ red.h_tilde)
    return ReducedSystem(
        method=red.method,
        unknowns="u",
        matrix=SparseSpdMatrix(mat),
        rhs=rhs,
        nu=red.nu,
        f_tilde=red.f_tilde,
        h_tilde=red.h_tilde,
        n_factorizations=red.n_factorizations + nv,
        auu=red.auu,
        aug=red.aug,
        rot_blocks=red.rot_blocks,
        rot_blocks_inv=rinv,
    )


def recover_fields(asm: AssembledSystem, red: ReducedSystem, solution: np.ndarray) -> SolutionFields:
    """Back-substitute the eliminated fields from the reduced solution."""
    dm = asm.dofmap
    if red.unknowns == "ug":
        u = solution[: red.nu]
        gamma = solution[red.nu :]
    else:
        u = solution
        gamma = red.rot_blocks_inv @ (
            (red.h_tilde - red.aug.T @ u).reshape(-1, 3)[:, :, None]
        )
        gamma = gamma[:, :, 0].ravel()
    resid = asm.rhs_sigma - asm.asu.T @ u - asm.asg.T @ gamma
    sigma = np.empty(dm.nsdof)
    for size, verts in dm.size_groups:
        for lo in range(0, len(verts), _CHUNK):
            vchunk = verts[lo : lo + _CHUNK]
            blocks = dm.gather_blocks(vchunk, size, asm.ass_flat)
            kinv = batched_spd_inverse(blocks, labels=vchunk)
            rows = dm.group_start[vchunk][:, None] + np.arange(size)
            sigma[rows.ravel()] = np.einsum("nst,nt->ns", kinv, resid[rows]).ravel()
    ncells = asm.mesh.ncells
    gshape = (ncells, 3) if asm.method == "msmfe0" else (asm.mesh.nverts, 3)
    return SolutionFields(
        method=asm.method,
        sigma=sigma,
        u=u.reshape(ncells, 3),
        gamma=gamma.reshape(gshape),
    )
