"""Tensor-product Gauss rules on the unit interval/square/cube."""

from __future__ import annotations

import numpy as np


def gauss_1d(n):
    """Gauss-Legendre points and weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


def gauss_square(n):
    """(npts, 2) points and weights on the unit square."""
    x, w = gauss_1d(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    return np.stack([u.ravel(), v.ravel()], axis=1), (wu * wv).ravel()


def gauss_cube(n):
    """(npts, 3) points and weights on the unit cube."""
    x, w = gauss_1d(n)
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    return (
        np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1),
        (wx * wy * wz).ravel(),
    )
