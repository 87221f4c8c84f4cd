"""Assembly of the mixed elasticity saddle system on structured cuboid grids.

Builds the vertex-quadrature stress-stress form (block diagonal over mesh
vertices), the exact divergence coupling, the stress-rotation form in its
three variants, and the body-force / Dirichlet-data right-hand sides.

Stress degrees of freedom are the +axis normal components at the four corners
of each face.  They are numbered grouped by the vertex carrying the corner,
so that the vertex quadrature rule makes the stress-stress matrix block
diagonal: 3 rows x (incident faces) per vertex, 36x36 at interior vertices.

Sign bookkeeping: with the +axis global normal convention, the outward sign
of a cell's face (-1 on its lower faces) cancels against the outward-normal
dof value of the reference dual basis at a vertex, so each active stress
basis at a mapped reference vertex is exactly (h_a / J) e_r x e_a with a +
sign.  Divergence and exact stress-rotation entries keep the +-/- face signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._quadrature import gauss_cube
from .material import ComplianceField
from .mesh import FACE_SIGN, REF_VERTICES, StructuredMesh, face_corner_slot, local_face_positions
from .ref_elements import Ert0Basis, XI_BASIS

METHODS = ("msmfe0", "msmfe1", "msmfe1-scaled")

class DofMap:
    """Global numbering of stress/displacement/rotation unknowns.

    Stress dof (face f, corner c, row r) -> sdof[f, c, r]; the dofs of all
    corners sitting at a vertex are contiguous, ordered by ascending face id
    (slot) and row.
    """

    def __init__(self, mesh: StructuredMesh):
        self.mesh = mesh
        cell_offs, cells, face_offs, faces = mesh._vertex_incidence()
        nv = mesh.nverts
        self.vdeg = np.diff(face_offs)
        self.block_size = 3 * self.vdeg
        self.group_start = np.concatenate([[0], np.cumsum(self.block_size)])
        self.nsdof = int(self.group_start[-1])
        self.nudof = 3 * mesh.ncells

        inc_v = np.repeat(np.arange(nv), self.vdeg)
        slots = np.arange(len(faces)) - np.repeat(face_offs[:-1], self.vdeg)
        corner = np.argmax(mesh.face_vertices[faces] == inc_v[:, None], axis=1)
        self.face_slot = np.full((mesh.nfaces, 4), -1, dtype=np.int64)
        self.face_slot[faces, corner] = slots
        base = self.group_start[inc_v] + 3 * slots
        self.sdof = np.full((mesh.nfaces, 4, 3), -1, dtype=np.int64)
        self.sdof[faces, corner] = base[:, None] + np.arange(3)

        # vertex -> incident faces (slot order), with the owning corner index
        self.vfaces = np.full((nv, 12), -1, dtype=np.int64)
        self.vfaces[inc_v, slots] = faces
        self.vface_corner = np.full((nv, 12), -1, dtype=np.int64)
        self.vface_corner[inc_v, slots] = corner

        # vertex -> incident cells, padded with -1 past the count
        self.cdeg = np.diff(cell_offs)
        cinc_v = np.repeat(np.arange(nv), self.cdeg)
        cpos = np.arange(len(cells)) - np.repeat(cell_offs[:-1], self.cdeg)
        self.vcells = np.full((nv, 8), -1, dtype=np.int64)
        self.vcells[cinc_v, cpos] = cells
        # cell -> its position in the cell list of each of its 8 vertices
        vloc = np.argmax(mesh.cell_vertices[cells] == cinc_v[:, None], axis=1)
        self.cell_pos = np.empty((mesh.ncells, 8), dtype=np.int64)
        self.cell_pos[cells, vloc] = cpos

        # flat storage layout for the vertex blocks of the stress-stress form
        self.block_ofs = np.concatenate([[0], np.cumsum(self.block_size**2)])

        # per-cell table of the 24 reference dofs (4 corners x 6 faces)
        cs = np.empty((mesh.ncells, 24, 3), dtype=np.int64)
        for pos in range(6):
            cs[:, 4 * pos : 4 * pos + 4, :] = self.sdof[mesh.cell_faces[:, pos]]
        self.cell_sdof = cs
        self.ref_sign = np.repeat(FACE_SIGN, 4)

        self.constrained = np.zeros(self.nsdof, dtype=bool)
        neumann = np.flatnonzero(mesh.neumann_faces)
        if neumann.size:
            self.constrained[self.sdof[neumann].ravel()] = True

        # vertices grouped by block size, for batched dense block work
        self.size_groups = [
            (int(3 * d), np.flatnonzero(self.vdeg == d)) for d in np.unique(self.vdeg)
        ]

    def ngdof(self, method):
        if method == "msmfe0":
            return 3 * self.mesh.ncells
        return 3 * self.mesh.nverts

    def dof_vertex(self, dofs):
        """Vertex owning each stress dof."""
        return np.searchsorted(self.group_start, np.asarray(dofs), side="right") - 1

    def block_view(self, vertex, flat):
        s = self.block_size[vertex]
        o = self.block_ofs[vertex]
        return flat[o : o + s * s].reshape(s, s)

    def gather_blocks(self, verts, size, flat):
        """Dense (len(verts), size, size) view-copy of the listed same-size blocks."""
        idx = self.block_ofs[verts][:, None] + np.arange(size * size)
        return flat[idx].reshape(len(verts), size, size)


def _cell_centroids(mesh):
    return mesh.cell_origins + 0.5 * mesh.h


def assemble_Ass(mesh: StructuredMesh, material: ComplianceField, dofmap: DofMap) -> np.ndarray:
    """Vertex-quadrature stress-stress form as flat per-vertex block storage.

    Each cell contributes, at each of its 8 vertices, a 9x9 coupling of the
    three face dofs (one per axis family) x three rows living there:

        K[(a,r),(a',r')] = h_a h_a' / (8 J) * (1/2mu) (d_aa' d_rr'
                           - lambda/(2mu+3lambda) d_ra d_r'a').
    """
    J = mesh.jacobian_det
    h = mesh.h
    flat = np.zeros(int(dofmap.block_ofs[-1]))
    # fixed 9x9 templates in (axis-major, row-minor) local order
    M1 = np.zeros((9, 9))
    for a in range(3):
        M1[3 * a : 3 * a + 3, 3 * a : 3 * a + 3] = h[a] ** 2 * np.eye(3)
    d = np.zeros(9)
    for a in range(3):
        d[3 * a + a] = h[a]
    M2 = np.outer(d, d)

    centroids = _cell_centroids(mesh)
    bsz = dofmap.block_size
    ofs = dofmap.block_ofs
    for vloc in range(8):
        v = mesh.cell_vertices[:, vloc]
        lam, mu = material.sample_nudged(mesh.vertex_coords[v], centroids)
        w0 = 1.0 / (2.0 * mu)
        beta = lam / (2.0 * mu + 3.0 * lam)
        K = (w0 / (8.0 * J))[:, None, None] * (M1 - beta[:, None, None] * M2)
        # local row indices: 3*slot(face_a at v) + r, in (a, r) order
        positions = local_face_positions(vloc)
        idx = np.empty((mesh.ncells, 9), dtype=np.int64)
        for a in range(3):
            f = mesh.cell_faces[:, positions[a]]
            slot = dofmap.face_slot[f, face_corner_slot(vloc, a)]
            idx[:, 3 * a : 3 * a + 3] = (3 * slot)[:, None] + np.arange(3)
        s = bsz[v]
        target = (
            ofs[v][:, None, None]
            + idx[:, :, None] * s[:, None, None]
            + idx[:, None, :]
        )
        np.add.at(flat, target.ravel(), K.ravel())
    return flat


def assemble_Asu(mesh: StructuredMesh, dofmap: DofMap, basis: Ert0Basis) -> sp.csr_matrix:
    """Exact divergence coupling (div tau_j, v_i), shape (3*ncells, nsdof)."""
    ncells = mesh.ncells
    rows, cols, vals = [], [], []
    cell = np.arange(ncells)
    for pos in range(6):
        f = mesh.cell_faces[:, pos]
        for c in range(4):
            dv = FACE_SIGN[pos] * basis.div_consts[4 * pos + c]
            for r in range(3):
                rows.append(3 * cell + r)
                cols.append(dofmap.sdof[f, c, r])
                vals.append(np.full(ncells, dv))
    B = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(3 * ncells, dofmap.nsdof),
    )
    return B.tocsr()


def assemble_Asg(
    mesh: StructuredMesh,
    dofmap: DofMap,
    basis: Ert0Basis,
    method: str,
    material: ComplianceField | None = None,
) -> sp.csr_matrix:
    """Stress-rotation coupling (tau_j, w_i) in the method's variant.

    All variants use the vertex quadrature rule; this is what makes the
    scheme reproduce linear displacement fields exactly (together with the
    face-midpoint Dirichlet term) and is required for first-order accuracy.

    msmfe0: vertex quadrature against constant skew tests, rows = (cell,
    axis); each adjacent cell of a face contributes (1/8) h_a Xi(e_l)[r, a]
    per corner.
    msmfe1: vertex quadrature against trilinear skew tests, rows = (vertex,
    axis); a rotation dof couples only to stress dofs grouped at its vertex.
    msmfe1-scaled: same sparsity with the compliance factor 1/(2 mu) sampled
    per adjacent cell at the vertex.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    h = mesh.h
    if method == "msmfe0":
        rows, cols, vals = [], [], []
        axis0 = mesh.face_axis
        for side in range(2):
            adj = mesh.face_cells[:, side]
            ok = adj >= 0
            faces = np.flatnonzero(ok)
            a = axis0[faces]
            for c in range(4):
                for l in range(3):
                    for r in range(3):
                        coef = 0.125 * h[a] * XI_BASIS[l, r, a]
                        nz = coef != 0.0
                        rows.append(3 * adj[faces[nz]] + l)
                        cols.append(dofmap.sdof[faces[nz], c, r])
                        vals.append(coef[nz])
        C = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(3 * mesh.ncells, dofmap.nsdof),
        )
        return C.tocsr()

    # vertex-quadrature variants: entry over each cell sharing the face is
    # (1/8) h_a Xi(e_l)[r, a], times 1/(2 mu) at the vertex for the scaled form
    nfaces = mesh.nfaces
    axis = mesh.face_axis
    if method == "msmfe1":
        weight = (mesh.face_cells >= 0).sum(axis=1).astype(float) / 8.0  # (nfaces,)
        weight = np.broadcast_to(weight[:, None], (nfaces, 4))
    else:
        if material is None:
            raise ValueError("scaled variant needs the material field")
        weight = np.zeros((nfaces, 4))
        centroids = _cell_centroids(mesh)
        for side in range(2):
            adj = mesh.face_cells[:, side]
            ok = adj >= 0
            for c in range(4):
                v = mesh.face_vertices[ok, c]
                _, mu = material.sample_nudged(
                    mesh.vertex_coords[v], centroids[adj[ok]]
                )
                weight[ok, c] += 1.0 / (8.0 * 2.0 * mu)

    rows, cols, vals = [], [], []
    for c in range(4):
        vtx = mesh.face_vertices[:, c]
        for l in range(3):
            for r in range(3):
                coef = XI_BASIS[l, r, axis] * h[axis] * weight[:, c]
                nz = coef != 0.0
                rows.append(3 * vtx[nz] + l)
                cols.append(dofmap.sdof[nz, c, r])
                vals.append(coef[nz])
    cols = np.concatenate([np.asarray(x) for x in cols])
    C = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), cols)),
        shape=(3 * mesh.nverts, dofmap.nsdof),
    )
    return C.tocsr()


def assemble_rhs(
    mesh: StructuredMesh,
    dofmap: DofMap,
    body_force,
    dirichlet_data,
    nq_cell: int = 3,
):
    """Body-force vector and Dirichlet boundary term.

    body_force and dirichlet_data map (npts, 3) coordinates to (npts, 3)
    values.  rhs_u[(E, r)] = int_E f_r.  The Dirichlet term uses the
    face-midpoint rule, rhs_sigma[(f, c, r)] = +- g_r(face center) / 4,
    which pairs the face-average data with the Q1 normal trace of the dual
    basis.  Together with the vertex-quadrature stress-rotation coupling
    this makes the scheme exact for linear displacement fields; exact face
    integration instead leaves an O(1)-inconsistent residual on boundary
    stress dofs and degrades the stress error to roughly O(h^1/2).
    """
    J = mesh.jacobian_det
    rhs_u = np.zeros(3 * mesh.ncells)
    if body_force is not None:
        gp, gw = gauss_cube(nq_cell)
        pts = (mesh.cell_origins[:, None, :] + mesh.h * gp[None, :, :]).reshape(-1, 3)
        fv = np.asarray(body_force(pts), dtype=float).reshape(mesh.ncells, len(gw), 3)
        rhs_u = (J * np.einsum("g,ngr->nr", gw, fv)).ravel()

    rhs_s = np.zeros(dofmap.nsdof)
    if dirichlet_data is not None:
        bnd = mesh.boundary_faces
        bnd = bnd[~mesh.neumann_faces[bnd]]
        sign = np.where(mesh.face_cells[bnd, 1] < 0, 1.0, -1.0)
        centers = mesh.vertex_coords[mesh.face_vertices[bnd]].mean(axis=1)
        gv = np.asarray(dirichlet_data(centers), dtype=float)  # (nb, 3)
        rhs_s[dofmap.sdof[bnd]] = 0.25 * gv[:, None, :] * sign[:, None, None]
    rhs_s[dofmap.constrained] = 0.0
    return rhs_s, rhs_u


def _constrain(dofmap: DofMap, ass_flat, mats):
    """Delete Neumann stress dofs: identity rows/cols in the vertex blocks and
    zeroed columns in the coupling matrices (homogeneous traction)."""
    cdofs = np.flatnonzero(dofmap.constrained)
    if cdofs.size == 0:
        return mats
    v = dofmap.dof_vertex(cdofs)
    loc = cdofs - dofmap.group_start[v]
    s = dofmap.block_size[v]
    base = dofmap.block_ofs[v]
    # ragged row/column index lists, flattened
    reps = np.repeat(np.arange(len(cdofs)), s)
    run = np.arange(s.sum()) - np.repeat(np.cumsum(s) - s, s)
    rows = base[reps] + loc[reps] * s[reps] + run
    colsq = base[reps] + run * s[reps] + loc[reps]
    ass_flat[rows] = 0.0
    ass_flat[colsq] = 0.0
    ass_flat[base + loc * s + loc] = 1.0
    keep = sp.diags((~dofmap.constrained).astype(float))
    return [m @ keep for m in mats]


@dataclass
class AssembledSystem:
    mesh: StructuredMesh
    dofmap: DofMap
    method: str
    material: ComplianceField
    basis: Ert0Basis
    ass_flat: np.ndarray
    asu: sp.csr_matrix
    asg: sp.csr_matrix
    rhs_sigma: np.ndarray
    rhs_u: np.ndarray

    def ass_sparse(self) -> sp.csr_matrix:
        """The stress-stress form as an explicit sparse matrix (tests/oracle)."""
        dm = self.dofmap
        rows, cols, vals = [], [], []
        for size, verts in dm.size_groups:
            blocks = dm.gather_blocks(verts, size, self.ass_flat)
            start = dm.group_start[verts]
            i = start[:, None, None] + np.arange(size)[None, :, None]
            j = start[:, None, None] + np.arange(size)[None, None, :]
            rows.append(np.broadcast_to(i, blocks.shape).ravel())
            cols.append(np.broadcast_to(j, blocks.shape).ravel())
            vals.append(blocks.ravel())
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.nsdof, dm.nsdof),
        )
        return A.tocsr()


def assemble_system(
    mesh: StructuredMesh,
    material: ComplianceField,
    method: str,
    body_force=None,
    dirichlet_data=None,
    basis: Ert0Basis | None = None,
) -> AssembledSystem:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    basis = basis or Ert0Basis()
    dofmap = DofMap(mesh)
    ass = assemble_Ass(mesh, material, dofmap)
    asu = assemble_Asu(mesh, dofmap, basis)
    asg = assemble_Asg(mesh, dofmap, basis, method, material)
    rhs_s, rhs_u = assemble_rhs(mesh, dofmap, body_force, dirichlet_data)
    asu, asg = _constrain(dofmap, ass, [asu, asg])
    return AssembledSystem(
        mesh=mesh,
        dofmap=dofmap,
        method=method,
        material=material,
        basis=basis,
        ass_flat=ass,
        asu=asu,
        asg=asg,
        rhs_sigma=rhs_s,
        rhs_u=rhs_u,
    )
