import numpy as np
import pytest

from msmfe.io_cli import (
    curl_duality_residual,
    curl_identity_residual,
    reference_element_checks,
    stress_duality_residual,
    tangential_trace_residual,
)
from msmfe.ref_elements import (
    Ert0Basis,
    Poly,
    ThetaBasis,
    skew_eval_w0,
    skew_eval_w1,
    sxi_identity_residual,
    vec_curl,
    vec_div,
    vec_eval,
    vec_from_monos,
    xi,
)


@pytest.fixture(scope="module")
def stress():
    return Ert0Basis()


@pytest.fixture(scope="module")
def theta(stress):
    return ThetaBasis(stress)


def test_stress_dof_duality(stress):
    assert stress_duality_residual(stress) < 1e-12


def test_stress_normal_trace_bilinear_per_face(stress):
    # on each face the normal component depends bilinearly on the two
    # in-plane coordinates: second differences on a 4-point line vanish
    grid = np.linspace(0.0, 1.0, 5)
    for axis in range(3):
        tang = [a for a in range(3) if a != axis]
        for coord in (0.0, 1.0):
            for other_fixed in (0.3, 0.7):
                pts = np.zeros((5, 3))
                pts[:, axis] = coord
                pts[:, tang[0]] = grid
                pts[:, tang[1]] = other_fixed
                vals = stress.eval_many(pts)[:, :, axis]  # (5, 24)
                second_diff = vals[2:] - 2 * vals[1:-1] + vals[:-2]
                assert np.abs(second_diff).max() < 1e-12


def test_enhancement_field_is_divergence_free():
    field = vec_from_monos(cx=[(-3.0, (1, 1, 0))], cy=[(1.0, (0, 2, 0))], cz=[(1.0, (0, 1, 1))])
    assert vec_div(field).is_zero(1e-15)


def test_stress_divergence_constant_per_basis(stress):
    pts = np.random.default_rng(0).random((20, 3))
    for k in range(24):
        d = stress.div(k)
        assert isinstance(d, float)
    # the div operator is exact: check one basis function by finite differences
    step = 1e-6
    k = 7
    div_fd = sum(
        (stress.eval(k, pts[0] + step * np.eye(3)[a])[a] - stress.eval(k, pts[0] - step * np.eye(3)[a])[a])
        / (2 * step)
        for a in range(3)
    )
    assert div_fd == pytest.approx(stress.div(k), abs=1e-6)


def test_theta_dof_duality(theta):
    assert curl_duality_residual(theta) < 1e-12


def test_theta_vandermonde_invertible(theta):
    assert np.linalg.cond(theta.vandermonde) < 1e12


def test_curl_theta_lies_in_stress_span(theta):
    assert theta.curl_residual < 1e-12


def test_curl_matrix_rank_is_23(theta):
    # independently frozen numerical rank of the 48 -> 24 curl coefficient map
    assert np.linalg.matrix_rank(theta.curl_coeffs, tol=1e-9) == 23


def test_div_curl_is_zero(stress, theta):
    # expand each curl over the stress dof basis and apply the div operator
    for k in range(theta.ndof):
        span_coeffs = theta.curl(k)
        dofs = stress.expand(span_coeffs)
        assert abs(float(dofs @ stress.div_consts)) < 1e-12
        # stronger: the divergence of the curl vanishes coefficient-wise
        field = [Poly(), Poly(), Poly()]
        for s, c in zip(stress.span, span_coeffs):
            field = [field[i] + s[i] * c for i in range(3)]
        assert vec_div(tuple(field)).is_zero(1e-10)


def test_specific_curl_value_in_span(stress):
    # curl(0, xyz^2, -xy^2 z) = (-4xyz, y^2 z, y z^2) must be representable
    target = vec_from_monos(
        cx=[(-4.0, (1, 1, 1))], cy=[(1.0, (0, 2, 1))], cz=[(1.0, (0, 1, 2))]
    )
    pts = np.random.default_rng(1).random((40, 3))
    dofs = stress.dof_sign * vec_eval(target, stress.dof_points)[np.arange(24), stress.dof_axis]
    recon = np.einsum("j,njc->nc", dofs, stress.eval_many(pts))
    np.testing.assert_allclose(recon, vec_eval(target, pts), atol=1e-12)


def test_curl_of_gradient_vanishes():
    # grad(x^2 y^2 z) = (2xy^2 z, 2x^2 yz, x^2 y^2)
    grad = vec_from_monos(
        cx=[(2.0, (1, 2, 1))], cy=[(2.0, (2, 1, 1))], cz=[(1.0, (2, 2, 0))]
    )
    curl = vec_curl(grad)
    assert all(c.is_zero(1e-15) for c in curl)


def test_tangential_trace_vanishes_with_zero_face_dofs(theta):
    assert tangential_trace_residual(theta) < 1e-12


def test_skew_identity_random_fields(theta):
    rng = np.random.default_rng(5)
    assert curl_identity_residual(theta, rng, 100) < 1e-12


def test_skew_identity_constant_rows():
    rows = (
        vec_from_monos(cx=[(1.5, (0, 0, 0))]),
        vec_from_monos(cy=[(-0.5, (0, 0, 0))]),
        vec_from_monos(cz=[(2.0, (0, 0, 0))]),
    )
    w = xi(np.array([0.3, -1.0, 0.7]))
    pts = np.random.default_rng(2).random((10, 3))
    assert sxi_identity_residual(rows, w, pts).max() == 0.0


def test_skew_bases():
    w = skew_eval_w0(1)
    assert np.allclose(w, -w.T) and np.abs(w).max() == 1.0
    vals = skew_eval_w1(0, 2, np.zeros(3))
    np.testing.assert_allclose(vals, skew_eval_w0(2))
    # the hat factor vanishes at the opposite vertex
    assert np.abs(skew_eval_w1(0, 2, np.ones(3))).max() == 0.0


def test_reference_checks_bundle():
    checks, rank = reference_element_checks()
    assert all(value < bound for _, value, bound in checks)
    assert rank == 23
