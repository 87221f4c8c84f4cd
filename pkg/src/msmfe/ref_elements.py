"""Reference-element bases on the unit cube.

Provides the 24-dimensional enhanced lowest-order Raviart-Thomas space used
for each stress row (nodal face-corner degrees of freedom), the constant and
trilinear skew-symmetric rotation bases, and a 48-dimensional H(curl)-type
vector space used only for structural verification (its curl spans the
divergence-free part of the stress row space).
"""

from __future__ import annotations

import numpy as np

from .mesh import REF_VERTICES

# ---------------------------------------------------------------------------
# small sparse trivariate polynomials
# ---------------------------------------------------------------------------


class Poly:
    """Polynomial in (x, y, z) stored as {(i, j, k): coef}."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for mono, c in terms.items():
                if c != 0.0:
                    self.terms[tuple(mono)] = float(c)

    @classmethod
    def mono(cls, i, j, k, c=1.0):
        return cls({(i, j, k): c})

    def __add__(self, other):
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Poly(out)

    def __mul__(self, scalar):
        return Poly({m: c * scalar for m, c in self.terms.items()})

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + other * (-1.0)

    def diff(self, axis):
        out = {}
        for m, c in self.terms.items():
            if m[axis] > 0:
                mm = list(m)
                mm[axis] -= 1
                mm = tuple(mm)
                out[mm] = out.get(mm, 0.0) + c * m[axis]
        return Poly(out)

    def eval(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for (i, j, k), c in self.terms.items():
            out += c * pts[:, 0] ** i * pts[:, 1] ** j * pts[:, 2] ** k
        return out

    def integral(self):
        """Integral over the unit cube."""
        return sum(c / ((i + 1) * (j + 1) * (k + 1)) for (i, j, k), c in self.terms.items())

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.terms.values())


ZERO = Poly()


def _vec(px, py, pz):
    return (px, py, pz)


def vec_from_monos(cx=(), cy=(), cz=()):
    """Vector field from lists of (coef, (i,j,k)) per component."""
    comps = []
    for terms in (cx, cy, cz):
        p = Poly()
        for c, m in terms:
            p = p + Poly.mono(*m, c=c)
        comps.append(p)
    return tuple(comps)


def vec_div(v):
    return v[0].diff(0) + v[1].diff(1) + v[2].diff(2)


def vec_curl(v):
    return (
        v[2].diff(1) - v[1].diff(2),
        v[0].diff(2) - v[2].diff(0),
        v[1].diff(0) - v[0].diff(1),
    )


def vec_eval(v, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.stack([c.eval(pts) for c in v], axis=-1)


# ---------------------------------------------------------------------------
# skew-symmetry helpers
# ---------------------------------------------------------------------------


def xi(p):
    """Skew matrix of a 3-vector: xi(p) q = p x q up to sign convention."""
    p = np.asarray(p, dtype=float)
    return np.array(
        [
            [0.0, -p[2], p[1]],
            [p[2], 0.0, -p[0]],
            [-p[1], p[0], 0.0],
        ]
    )


XI_BASIS = np.stack([xi(e) for e in np.eye(3)])  # XI_BASIS[l] = xi(e_l)


def s_operator(m):
    """S(m) = tr(m) I - m^T on 3x3 matrices (also valid batched on (...,3,3))."""
    m = np.asarray(m, dtype=float)
    tr = np.trace(m, axis1=-2, axis2=-1)
    return tr[..., None, None] * np.eye(3) - np.swapaxes(m, -2, -1)


def hat_values(pts):
    """Trilinear nodal hat functions at the 8 reference vertices, (npts, 8)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.empty((pts.shape[0], 8))
    for v, (ox, oy, oz) in enumerate(REF_VERTICES):
        fx = pts[:, 0] if ox else 1.0 - pts[:, 0]
        fy = pts[:, 1] if oy else 1.0 - pts[:, 1]
        fz = pts[:, 2] if oz else 1.0 - pts[:, 2]
        out[:, v] = fx * fy * fz
    return out


def hat_values_2d(uv):
    """Bilinear hats on the unit square at the 4 lexicographic corners, (npts, 4)."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    u, v = uv[:, 0], uv[:, 1]
    return np.stack([(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v], axis=1)


# ---------------------------------------------------------------------------
# enhanced RT0 stress-row space
# ---------------------------------------------------------------------------

M = Poly.mono


def _ert0_span():
    x, y, z = (1, 0, 0), (0, 1, 0), (0, 0, 1)
    one = (0, 0, 0)
    s = []
    # lowest-order RT block
    s.append(_vec(M(*one), ZERO, ZERO))
    s.append(_vec(M(*x), ZERO, ZERO))
    s.append(_vec(ZERO, M(*one), ZERO))
    s.append(_vec(ZERO, M(*y), ZERO))
    s.append(_vec(ZERO, ZERO, M(*one)))
    s.append(_vec(ZERO, ZERO, M(*z)))
    # enhancement curls, first-component group
    s.append(_vec(M(0, 1, 0, -3), ZERO, ZERO))
    s.append(_vec(M(0, 0, 1, -3), ZERO, ZERO))
    s.append(_vec(M(0, 1, 1, -4), ZERO, ZERO))
    s.append(_vec(M(1, 1, 0, -3), M(0, 2, 0), M(0, 1, 1)))
    s.append(_vec(M(1, 0, 1, -3), M(0, 1, 1), M(0, 0, 2)))
    s.append(_vec(M(1, 1, 1, -4), M(0, 2, 1), M(0, 1, 2)))
    # second-component group
    s.append(_vec(ZERO, M(1, 0, 0, -3), ZERO))
    s.append(_vec(ZERO, M(0, 0, 1, -3), ZERO))
    s.append(_vec(ZERO, M(1, 0, 1, -4), ZERO))
    s.append(_vec(M(2, 0, 0), M(1, 1, 0, -3), M(1, 0, 1)))
    s.append(_vec(M(1, 0, 1), M(0, 1, 1, -3), M(0, 0, 2)))
    s.append(_vec(M(2, 0, 1), M(1, 1, 1, -4), M(1, 0, 2)))
    # third-component group
    s.append(_vec(ZERO, ZERO, M(1, 0, 0, -3)))
    s.append(_vec(ZERO, ZERO, M(0, 1, 0, -3)))
    s.append(_vec(ZERO, ZERO, M(1, 1, 0, -4)))
    s.append(_vec(M(2, 0, 0), M(1, 1, 0), M(1, 0, 1, -3)))
    s.append(_vec(M(1, 1, 0), M(0, 2, 0), M(0, 1, 1, -3)))
    s.append(_vec(M(2, 1, 0), M(1, 2, 0), M(1, 1, 1, -4)))
    return s


# face order (-x,+x,-y,+y,-z,+z); per face: outward axis, outward sign,
# in-plane axes (lower axis fastest for the lexicographic corner order)
_FACE_DATA = [
    (0, -1.0, (1, 2), 0.0),
    (0, +1.0, (1, 2), 1.0),
    (1, -1.0, (0, 2), 0.0),
    (1, +1.0, (0, 2), 1.0),
    (2, -1.0, (0, 1), 0.0),
    (2, +1.0, (0, 1), 1.0),
]


def _face_corner_point(face, corner):
    axis, _sign, (ua, va), coord = _FACE_DATA[face]
    pt = np.zeros(3)
    pt[axis] = coord
    pt[ua] = corner % 2
    pt[va] = corner // 2
    return pt


class Ert0Basis:
    """Dual basis of the enhanced RT0 space on the unit cube.

    Degrees of freedom are outward-normal components at the four corners of
    each of the six faces; dof index = 4*face + corner.
    """

    def __init__(self):
        self.span = _ert0_span()
        self.ndof = 24
        pts = np.array([_face_corner_point(f, c) for f in range(6) for c in range(4)])
        axes = np.array([_FACE_DATA[f][0] for f in range(6) for _ in range(4)])
        signs = np.array([_FACE_DATA[f][1] for f in range(6) for _ in range(4)])
        self.dof_points = pts
        self.dof_axis = axes
        self.dof_sign = signs
        self.dof_face = np.repeat(np.arange(6), 4)
        self.dof_corner = np.tile(np.arange(4), 6)
        # reference vertex carrying each dof
        self.dof_vertex = np.array(
            [int(np.flatnonzero((REF_VERTICES == p).all(axis=1))[0]) for p in pts]
        )
        vals = np.stack([vec_eval(s, pts) for s in self.span], axis=1)  # (24pts, 24span, 3)
        vander = signs[:, None] * vals[np.arange(24)[:, None], np.arange(24)[None, :], axes[:, None]]
        self.vandermonde = vander
        self.coeffs = np.linalg.inv(vander)  # column j = dual basis j over span fields
        self._div_span = np.array([vec_div(s).integral() for s in self.span])
        # enhancement fields are exact curls, so each span divergence is constant
        self.div_consts = self.coeffs.T @ self._div_span
        comp_ints = np.array([[c.integral() for c in s] for s in self.span])  # (24, 3)
        self.component_integrals = self.coeffs.T @ comp_ints  # (24 dof, 3)

    def eval_many(self, pts):
        """Values of all 24 dual basis functions at pts, shape (npts, 24, 3)."""
        span_vals = np.stack([vec_eval(s, pts) for s in self.span], axis=1)
        return np.einsum("kj,nkc->njc", self.coeffs, span_vals)

    def eval(self, k, xhat):
        if not 0 <= k < self.ndof:
            raise IndexError(f"basis index {k} out of range")
        return self.eval_many(np.atleast_2d(xhat))[0, k]

    def div(self, k):
        if not 0 <= k < self.ndof:
            raise IndexError(f"basis index {k} out of range")
        return float(self.div_consts[k])

    def expand(self, field_coeffs_over_span):
        """Dof values of a field given by coefficients over the span list."""
        c = np.asarray(field_coeffs_over_span, dtype=float)
        return self.vandermonde @ c


def skew_eval_w0(axis):
    """Constant skew basis for the piecewise-constant rotation space."""
    return XI_BASIS[axis].copy()


def skew_eval_w1(vertex, axis, xhat):
    """Trilinear skew basis: nodal hat at a reference vertex times xi(e_axis)."""
    h = hat_values(np.atleast_2d(xhat))[:, vertex]
    out = h[:, None, None] * XI_BASIS[axis]
    return out[0] if np.asarray(xhat).ndim == 1 else out


# ---------------------------------------------------------------------------
# verification-only H(curl)-type space
# ---------------------------------------------------------------------------

_THETA_MONOS_X = [
    (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, 1, 1), (0, 2, 0), (0, 0, 2), (1, 2, 0), (1, 0, 2), (0, 2, 1), (0, 1, 2),
]
_THETA_MONOS_Y = [
    (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, 1, 1), (2, 0, 0), (0, 0, 2), (2, 1, 0), (0, 1, 2), (2, 0, 1), (1, 0, 2),
]
_THETA_MONOS_Z = [
    (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, 1, 1), (2, 0, 0), (0, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 2, 0),
]


def _theta_span():
    s = []
    for m in _THETA_MONOS_X:
        s.append(_vec(M(*m), ZERO, ZERO))
    for m in _THETA_MONOS_Y:
        s.append(_vec(ZERO, M(*m), ZERO))
    for m in _THETA_MONOS_Z:
        s.append(_vec(ZERO, ZERO, M(*m)))
    s.append(_vec(ZERO, M(1, 1, 2), M(1, 2, 1, -1.0)))
    s.append(_vec(M(1, 1, 2, -1.0), ZERO, M(2, 1, 1)))
    s.append(_vec(M(1, 2, 1), M(2, 1, 1, -1.0), ZERO))
    s.append(_vec(M(1, 2, 1, 2.0), M(2, 1, 1, 2.0), M(2, 2, 0)))
    s.append(_vec(M(1, 1, 2, 2.0), M(2, 0, 2), M(2, 1, 1, 2.0)))
    s.append(_vec(M(0, 2, 2), M(1, 1, 2, 2.0), M(1, 2, 1, 2.0)))
    return s


def _theta_dof_points():
    """(component, point) pairs: per component, 8 vertices then 8 edge midpoints
    on the two faces where that component's coordinate is 0 or 1."""
    dofs = []
    for comp in range(3):
        for v in REF_VERTICES:
            dofs.append((comp, np.asarray(v, dtype=float)))
        mids = []
        for coord in (0.0, 1.0):
            others = [a for a in range(3) if a != comp]
            for fixed_axis, free_axis in ((others[0], others[1]), (others[1], others[0])):
                for fixed_val in (0.0, 1.0):
                    pt = np.zeros(3)
                    pt[comp] = coord
                    pt[fixed_axis] = fixed_val
                    pt[free_axis] = 0.5
                    mids.append(pt)
        mids = sorted(mids, key=lambda p: (p[0], p[1], p[2]))
        for pt in mids:
            dofs.append((comp, pt))
    return dofs


class ThetaBasis:
    """Verification basis whose curl spans the divergence-free stress rows."""

    def __init__(self, ert0: Ert0Basis | None = None):
        self.span = _theta_span()
        self.ndof = 48
        dofs = _theta_dof_points()
        assert len(dofs) == 48
        self.dof_component = np.array([c for c, _ in dofs])
        self.dof_points = np.array([p for _, p in dofs])
        vals = np.stack([vec_eval(s, self.dof_points) for s in self.span], axis=1)
        vander = vals[np.arange(48)[:, None], np.arange(48)[None, :], self.dof_component[:, None]]
        self.vandermonde = vander
        cond = np.linalg.cond(vander)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError("degrees of freedom do not determine the space")
        self.coeffs = np.linalg.inv(vander)
        self._ert0 = ert0 or Ert0Basis()
        self.curl_coeffs, self.curl_residual = self._project_curls()

    def _span_combination(self, k):
        """Dual basis k as a vector polynomial."""
        comps = [ZERO, ZERO, ZERO]
        for s, c in zip(self.span, self.coeffs[:, k]):
            comps = [comps[i] + s[i] * c for i in range(3)]
        return tuple(comps)

    def _project_curls(self):
        # least-squares expansion of each curl over the 24 stress-row span fields,
        # assembled in a common monomial coordinate system
        monos = set()
        curls = []
        for k in range(self.ndof):
            cc = vec_curl(self._span_combination(k))
            curls.append(cc)
            for comp in cc:
                monos.update(comp.terms)
        for s in self._ert0.span:
            for comp in s:
                monos.update(comp.terms)
        monos = sorted(monos)
        midx = {m: i for i, m in enumerate(monos)}
        nm = len(monos)

        def to_vec(field):
            v = np.zeros(3 * nm)
            for c_i, comp in enumerate(field):
                for m, c in comp.terms.items():
                    v[c_i * nm + midx[m]] = c
            return v

        span_mat = np.stack([to_vec(s) for s in self._ert0.span], axis=1)  # (3nm, 24)
        curl_mat = np.stack([to_vec(c) for c in curls], axis=1)  # (3nm, 48)
        sol, *_ = np.linalg.lstsq(span_mat, curl_mat, rcond=None)
        resid = np.abs(span_mat @ sol - curl_mat).max()
        return sol.T, resid  # (48, 24) coefficients over ert0 span fields

    def eval_many(self, pts):
        span_vals = np.stack([vec_eval(s, pts) for s in self.span], axis=1)
        return np.einsum("kj,nkc->njc", self.coeffs, span_vals)

    def eval(self, k, xhat):
        if not 0 <= k < self.ndof:
            raise IndexError(f"basis index {k} out of range")
        return self.eval_many(np.atleast_2d(xhat))[0, k]

    def curl(self, k):
        """Coefficients of curl(basis k) over the 24 stress-row span fields."""
        if not 0 <= k < self.ndof:
            raise IndexError(f"basis index {k} out of range")
        return self.curl_coeffs[k].copy()

    def random_field(self, rng):
        """A random matrix field with rows in the span, as a 3x3 matrix of Poly."""
        coeffs = rng.standard_normal((3, len(self.span)))
        rows = []
        for r in range(3):
            comps = [ZERO, ZERO, ZERO]
            for s, c in zip(self.span, coeffs[r]):
                comps = [comps[i] + s[i] * c for i in range(3)]
            rows.append(tuple(comps))
        return rows


def sxi_identity_residual(q_rows, w, pts):
    """Pointwise residual of the skew-pairing identity curl(q) : w = -xi(div S(q)) : w.

    The contraction against a skew test matrix only sees the skew part of
    curl(q); the underlying matrix identity is
    curl(q) - curl(q)^T = -xi(div S(q)), which is what gets sampled here.

    q_rows is a list of three vector polynomials (the rows of q); w is a
    constant skew matrix; pts are reference points, shape (npts, 3).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    w = np.asarray(w, dtype=float)
    curl_q = np.stack([vec_eval(vec_curl(row), pts) for row in q_rows], axis=1)  # (n,3,3)
    lhs = np.einsum("nrc,rc->n", curl_q - np.swapaxes(curl_q, 1, 2), w)
    # S(q) = tr(q) I - q^T, row-wise divergence, then xi
    tr_q = q_rows[0][0] + q_rows[1][1] + q_rows[2][2]
    s_rows = []
    for r in range(3):
        comps = []
        for c in range(3):
            p = q_rows[c][r] * (-1.0)
            if r == c:
                p = p + tr_q
            comps.append(p)
        s_rows.append(tuple(comps))
    div_s = np.stack([vec_div(row).eval(pts) for row in s_rows], axis=1)  # (n, 3)
    xi_div = np.einsum("lrc,nl->nrc", XI_BASIS, div_s)
    rhs = -np.einsum("nrc,rc->n", xi_div, w)
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0)
    return np.abs(lhs - rhs) / scale
