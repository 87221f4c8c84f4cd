import numpy as np
import pytest

from msmfe import DomainBox, build_mesh, unit_box


def test_counts_and_jacobian():
    mesh = build_mesh(unit_box(), (2, 3, 4))
    assert mesh.ncells == 24
    assert mesh.nverts == 3 * 4 * 5
    assert mesh.nfaces == 3 * 3 * 4 + 2 * 4 * 4 + 2 * 3 * 5
    np.testing.assert_allclose(mesh.h, [0.5, 1 / 3, 0.25])
    assert mesh.jacobian_det == pytest.approx(0.5 / 3 * 0.25)


def test_cell_face_incidence_consistency():
    mesh = build_mesh(unit_box(), (3, 3, 3))
    for cell in range(mesh.ncells):
        for pos, face in enumerate(mesh.cell_faces[cell]):
            assert mesh.face_axis[face] == pos // 2
            side = pos % 2  # 0: cell is on the plus side, 1: on the minus side
            assert mesh.face_cells[face, 1 - side] == cell
    nb = len(mesh.boundary_faces)
    assert nb == 6 * 9
    assert nb + len(mesh.interior_faces) == mesh.nfaces


def test_face_vertices_lie_on_face():
    mesh = build_mesh(DomainBox(np.array([0.0, -1.0, 2.0]), np.array([2.0, 1.0, 3.0])), (2, 2, 2))
    coords = mesh.vertex_coords[mesh.face_vertices]
    axes = mesh.face_axis
    span = coords[np.arange(mesh.nfaces), :, axes]
    assert np.abs(span - span[:, :1]).max() == 0.0


def test_coordinate_maps_roundtrip():
    mesh = build_mesh(DomainBox(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 9.0])), (4, 2, 3))
    rng = np.random.default_rng(3)
    xhat = rng.random(3)
    for cell in (0, 5, mesh.ncells - 1):
        x = mesh.reference_to_physical(cell, xhat)
        np.testing.assert_allclose(mesh.physical_to_reference(cell, x), xhat, atol=1e-14)
        assert (x >= mesh.cell_origins[cell] - 1e-14).all()
        assert (x <= mesh.cell_origins[cell] + mesh.h + 1e-14).all()


def test_vertex_star_interior_vertex():
    mesh = build_mesh(unit_box(), (2, 2, 2))
    center = int(np.argmin(np.abs(mesh.vertex_coords - 0.5).sum(axis=1)))
    cells, faces = mesh.vertex_star(center)
    assert len(cells) == 8
    assert len(faces) == 12
    corner = int(np.argmin(np.abs(mesh.vertex_coords).sum(axis=1)))
    cells, faces = mesh.vertex_star(corner)
    assert len(cells) == 1
    assert len(faces) == 3


def test_neumann_tagging():
    mesh = build_mesh(unit_box(), (2, 2, 2), neumann_rule=lambda c: c[0] > 0.99)
    tagged = np.flatnonzero(mesh.neumann_faces)
    assert len(tagged) == 4
    assert (mesh.face_axis[tagged] == 0).all()
    with pytest.raises(ValueError):
        build_mesh(unit_box(), (2, 2, 2), neumann_rule=lambda c: True)


def test_degenerate_inputs_rejected():
    with pytest.raises(ValueError):
        DomainBox(np.zeros(3), np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        build_mesh(unit_box(), (0, 2, 2))
