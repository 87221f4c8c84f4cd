"""Structured cuboid grids with the entity incidence needed for vertex-block assembly.

Cells, vertices and the three face families are numbered lexicographically
with x fastest.  Every cell is an axis-aligned cuboid, so the map from the
unit reference cube is affine with a diagonal Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Reference cube vertices r1..r8 as (ox, oy, oz) offsets.
REF_VERTICES = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (1, 1, 0),
        (0, 1, 0),
        (0, 0, 1),
        (1, 0, 1),
        (1, 1, 1),
        (0, 1, 1),
    ],
    dtype=np.int64,
)

# Face order within a cell: (-x, +x, -y, +y, -z, +z).
FACE_AXIS = np.array([0, 0, 1, 1, 2, 2])
FACE_SIDE = np.array([0, 1, 0, 1, 0, 1])
# Sign of the element-outward normal relative to the global (+axis) normal.
FACE_SIGN = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])


def local_face_positions(vloc: int) -> tuple[int, int, int]:
    """The three cell-local face positions (x, y, z family) touching ref vertex vloc."""
    ox, oy, oz = REF_VERTICES[vloc]
    return (int(ox), 2 + int(oy), 4 + int(oz))


def face_corner_slot(vloc: int, axis: int) -> int:
    """Corner slot of reference vertex vloc on the cell face of the given family.

    Corners on a face are ordered lexicographically in the face's two
    coordinates (lower axis fastest).
    """
    off = REF_VERTICES[vloc]
    axes = [a for a in range(3) if a != axis]
    return int(off[axes[0]] + 2 * off[axes[1]])


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box (lo, hi) with lo < hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if not np.all(hi > lo):
            raise ValueError("degenerate box: need hi > lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo


def unit_box() -> DomainBox:
    return DomainBox(np.zeros(3), np.ones(3))


@dataclass
class StructuredMesh:
    box: DomainBox
    n: tuple[int, int, int]
    h: np.ndarray = field(init=False)
    # entity counts
    ncells: int = field(init=False)
    nverts: int = field(init=False)
    nfaces: int = field(init=False)
    # incidence arrays
    cell_vertices: np.ndarray = field(init=False)  # (ncells, 8), reference vertex order
    cell_faces: np.ndarray = field(init=False)  # (ncells, 6), (-x,+x,-y,+y,-z,+z)
    face_vertices: np.ndarray = field(init=False)  # (nfaces, 4), lexicographic corners
    face_cells: np.ndarray = field(init=False)  # (nfaces, 2), [minus side, plus side]
    face_axis: np.ndarray = field(init=False)  # (nfaces,)
    vertex_coords: np.ndarray = field(init=False)  # (nverts, 3)
    cell_origins: np.ndarray = field(init=False)  # (ncells, 3)
    # Dirichlet/Neumann tagging of boundary faces
    neumann_faces: np.ndarray = field(init=False)  # bool (nfaces,)

    def __post_init__(self):
        nx, ny, nz = self.n
        if min(nx, ny, nz) < 1:
            raise ValueError("need at least one cell per axis")
        self.h = self.box.extent / np.array([nx, ny, nz], dtype=float)
        self.ncells = nx * ny * nz
        self.nverts = (nx + 1) * (ny + 1) * (nz + 1)
        self._fam_counts = (
            (nx + 1) * ny * nz,
            nx * (ny + 1) * nz,
            nx * ny * (nz + 1),
        )
        self._fam_offsets = (
            0,
            self._fam_counts[0],
            self._fam_counts[0] + self._fam_counts[1],
        )
        self.nfaces = sum(self._fam_counts)
        self._build_vertices()
        self._build_cells()
        self._build_faces()
        self.neumann_faces = np.zeros(self.nfaces, dtype=bool)
        self._vertex_csr = None

    # -- index helpers ------------------------------------------------------

    def vertex_id(self, i, j, k):
        nx, ny, _ = self.n
        return i + (nx + 1) * (j + (ny + 1) * k)

    def cell_id(self, i, j, k):
        nx, ny, _ = self.n
        return i + nx * (j + ny * k)

    def face_id(self, axis, i, j, k):
        nx, ny, _ = self.n
        if axis == 0:
            return self._fam_offsets[0] + i + (nx + 1) * (j + ny * k)
        if axis == 1:
            return self._fam_offsets[1] + i + nx * (j + (ny + 1) * k)
        return self._fam_offsets[2] + i + nx * (j + ny * k)

    # -- construction -------------------------------------------------------

    def _build_vertices(self):
        nx, ny, nz = self.n
        kk, jj, ii = np.meshgrid(
            np.arange(nz + 1), np.arange(ny + 1), np.arange(nx + 1), indexing="ij"
        )
        ijk = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        self.vertex_coords = self.box.lo + ijk * self.h

    def _build_cells(self):
        nx, ny, nz = self.n
        kk, jj, ii = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        ci = ii.ravel()
        cj = jj.ravel()
        ck = kk.ravel()
        self.cell_origins = self.box.lo + np.stack([ci, cj, ck], axis=1) * self.h
        cv = np.empty((self.ncells, 8), dtype=np.int64)
        for v, (ox, oy, oz) in enumerate(REF_VERTICES):
            cv[:, v] = self.vertex_id(ci + ox, cj + oy, ck + oz)
        self.cell_vertices = cv
        cf = np.empty((self.ncells, 6), dtype=np.int64)
        cf[:, 0] = self.face_id(0, ci, cj, ck)
        cf[:, 1] = self.face_id(0, ci + 1, cj, ck)
        cf[:, 2] = self.face_id(1, ci, cj, ck)
        cf[:, 3] = self.face_id(1, ci, cj + 1, ck)
        cf[:, 4] = self.face_id(2, ci, cj, ck)
        cf[:, 5] = self.face_id(2, ci, cj, ck + 1)
        self.cell_faces = cf

    def _build_faces(self):
        nx, ny, nz = self.n
        fv = np.empty((self.nfaces, 4), dtype=np.int64)
        fc = np.full((self.nfaces, 2), -1, dtype=np.int64)
        fa = np.empty(self.nfaces, dtype=np.int64)
        # x family: spans (y, z); corners lexicographic with y fastest
        kk, jj, ii = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx + 1), indexing="ij")
        i, j, k = ii.ravel(), jj.ravel(), kk.ravel()
        fid = self.face_id(0, i, j, k)
        fv[fid, 0] = self.vertex_id(i, j, k)
        fv[fid, 1] = self.vertex_id(i, j + 1, k)
        fv[fid, 2] = self.vertex_id(i, j, k + 1)
        fv[fid, 3] = self.vertex_id(i, j + 1, k + 1)
        fc[fid, 0] = np.where(i > 0, self.cell_id(np.maximum(i - 1, 0), j, k), -1)
        fc[fid, 1] = np.where(i < nx, self.cell_id(np.minimum(i, nx - 1), j, k), -1)
        fa[fid] = 0
        # y family: spans (x, z)
        kk, jj, ii = np.meshgrid(np.arange(nz), np.arange(ny + 1), np.arange(nx), indexing="ij")
        i, j, k = ii.ravel(), jj.ravel(), kk.ravel()
        fid = self.face_id(1, i, j, k)
        fv[fid, 0] = self.vertex_id(i, j, k)
        fv[fid, 1] = self.vertex_id(i + 1, j, k)
        fv[fid, 2] = self.vertex_id(i, j, k + 1)
        fv[fid, 3] = self.vertex_id(i + 1, j, k + 1)
        fc[fid, 0] = np.where(j > 0, self.cell_id(i, np.maximum(j - 1, 0), k), -1)
        fc[fid, 1] = np.where(j < ny, self.cell_id(i, np.minimum(j, ny - 1), k), -1)
        fa[fid] = 1
        # z family: spans (x, y)
        kk, jj, ii = np.meshgrid(np.arange(nz + 1), np.arange(ny), np.arange(nx), indexing="ij")
        i, j, k = ii.ravel(), jj.ravel(), kk.ravel()
        fid = self.face_id(2, i, j, k)
        fv[fid, 0] = self.vertex_id(i, j, k)
        fv[fid, 1] = self.vertex_id(i + 1, j, k)
        fv[fid, 2] = self.vertex_id(i, j + 1, k)
        fv[fid, 3] = self.vertex_id(i + 1, j + 1, k)
        fc[fid, 0] = np.where(k > 0, self.cell_id(i, j, np.maximum(k - 1, 0)), -1)
        fc[fid, 1] = np.where(k < nz, self.cell_id(i, j, np.minimum(k, nz - 1)), -1)
        fa[fid] = 2
        self.face_vertices = fv
        self.face_cells = fc
        self.face_axis = fa

    # -- queries ------------------------------------------------------------

    @property
    def jacobian_det(self) -> float:
        return float(np.prod(self.h))

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero((self.face_cells < 0).any(axis=1))

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero((self.face_cells >= 0).all(axis=1))

    def reference_to_physical(self, cell: int, xhat) -> np.ndarray:
        xhat = np.asarray(xhat, dtype=float)
        return self.cell_origins[cell] + self.h * xhat

    def physical_to_reference(self, cell: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.cell_origins[cell]) / self.h

    def _vertex_incidence(self):
        """CSR-style (offsets, values) of cells and faces incident to each vertex."""
        if self._vertex_csr is not None:
            return self._vertex_csr
        order = np.argsort(self.cell_vertices.ravel(), kind="stable")
        cells = np.repeat(np.arange(self.ncells), 8)[order]
        counts = np.bincount(self.cell_vertices.ravel(), minlength=self.nverts)
        cell_offs = np.concatenate([[0], np.cumsum(counts)])

        order = np.argsort(self.face_vertices.ravel(), kind="stable")
        faces = np.repeat(np.arange(self.nfaces), 4)[order]
        fcounts = np.bincount(self.face_vertices.ravel(), minlength=self.nverts)
        face_offs = np.concatenate([[0], np.cumsum(fcounts)])
        # stable sort keeps ids ascending within each vertex group
        self._vertex_csr = (cell_offs, cells, face_offs, faces)
        return self._vertex_csr

    def vertex_star(self, vertex: int):
        """Incident cells and (sorted) incident faces of a vertex."""
        cell_offs, cells, face_offs, faces = self._vertex_incidence()
        return (
            cells[cell_offs[vertex] : cell_offs[vertex + 1]],
            faces[face_offs[vertex] : face_offs[vertex + 1]],
        )


def build_mesh(box: DomainBox, n, neumann_rule=None) -> StructuredMesh:
    """Build a structured cuboid mesh.

    neumann_rule, if given, is a predicate on boundary face centroids marking
    Neumann faces; everything else (and the default) is Dirichlet.  The
    Dirichlet set must stay nonempty.
    """
    mesh = StructuredMesh(box, tuple(int(v) for v in n))
    if neumann_rule is not None:
        bnd = mesh.boundary_faces
        centroids = mesh.vertex_coords[mesh.face_vertices[bnd]].mean(axis=1)
        mask = np.asarray([bool(neumann_rule(c)) for c in centroids])
        mesh.neumann_faces[bnd[mask]] = True
        if mask.all():
            raise ValueError("Dirichlet boundary must be nonempty")
    return mesh
