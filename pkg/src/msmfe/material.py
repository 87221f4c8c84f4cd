"""Isotropic linear-elastic material data and the compliance operator.

The compliance tensor acts on a stress matrix as

    A sigma = 1/(2 mu) * (sigma - lambda / (2 mu + 3 lambda) tr(sigma) I),

the inverse of the stiffness map sigma = 2 mu eps + lambda tr(eps) I.
Coefficients may vary in space; they are sampled pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# relative nudge toward the cell centroid when sampling at vertices, so that
# piecewise-constant coefficients are evaluated one-sided on interfaces
VERTEX_NUDGE = 1e-12


def lame_from_E_nu(E, nu):
    """Lame parameters (lam, mu) from Young's modulus and Poisson ratio."""
    E = float(E)
    nu = float(nu)
    if E <= 0.0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 1/2), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def _validate(lam, mu):
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0.0):
        raise ValueError("shear modulus mu must be positive")
    if np.any(lam <= -2.0 * mu / 3.0):
        raise ValueError("lambda must exceed -2 mu / 3 for a positive bulk modulus")


@dataclass
class ComplianceField:
    """Spatially varying isotropic Lame coefficients.

    lam_fn / mu_fn take an (npts, 3) array of coordinates and return npts
    values each.
    """

    lam_fn: Callable[[np.ndarray], np.ndarray]
    mu_fn: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def constant(cls, lam, mu):
        _validate(lam, mu)
        lam = float(lam)
        mu = float(mu)
        return cls(
            lam_fn=lambda pts: np.full(np.atleast_2d(pts).shape[0], lam),
            mu_fn=lambda pts: np.full(np.atleast_2d(pts).shape[0], mu),
        )

    @classmethod
    def from_E_nu(cls, E, nu):
        lam, mu = lame_from_E_nu(E, nu)
        return cls.constant(lam, mu)

    @classmethod
    def checker_corner(cls, kappa):
        """Coefficients lam = mu = kappa on [0, 1/2)^3 and 1 elsewhere."""
        kappa = float(kappa)
        _validate(kappa, kappa)

        def coef(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            inside = np.max(pts, axis=1) < 0.5
            return np.where(inside, kappa, 1.0)

        return cls(lam_fn=coef, mu_fn=coef)

    def sample(self, pts):
        """(lam, mu) arrays at the given points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lam = np.asarray(self.lam_fn(pts), dtype=float)
        mu = np.asarray(self.mu_fn(pts), dtype=float)
        _validate(lam, mu)
        return lam, mu

    def sample_nudged(self, pts, centroids):
        """Sample at pts pulled slightly toward matching centroids.

        Keeps vertex sampling one-sided for coefficients that jump across
        cell interfaces.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
        nudged = pts + VERTEX_NUDGE * (centroids - pts)
        return self.sample(nudged)


def apply_compliance(lam, mu, sig):
    """A sigma for stress matrices sig of shape (..., 3, 3); lam, mu broadcast
    over the leading axes."""
    sig = np.asarray(sig, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    tr = np.trace(sig, axis1=-2, axis2=-1)[..., None, None]
    return (sig - lam / (2.0 * mu + 3.0 * lam) * tr * np.eye(3)) / (2.0 * mu)


def apply_stiffness(lam, mu, eps):
    """sigma = 2 mu eps + lam tr(eps) I for strain matrices eps of shape (..., 3, 3)."""
    eps = np.asarray(eps, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
    return 2.0 * mu * eps + lam * tr * np.eye(3)
