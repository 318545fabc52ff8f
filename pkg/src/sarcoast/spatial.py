"""Bivariate Gaussian model of superpixel pixel coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Ridge added to every covariance estimate, in px^2.
RIDGE = 0.25
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SpatialParams:
    """Centroid ``m = (x, y)`` and 2x2 covariance ``cov`` in pixel units."""

    m: tuple[float, float]
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError("covariance must be 2x2")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if np.linalg.det(cov) <= 0:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "m", (float(self.m[0]), float(self.m[1])))


def gaussian2_log_pdf(q, sp: SpatialParams):
    """Log-density of the bivariate normal at coordinates ``q`` (shape ``(..., 2)``)."""
    q = np.asarray(q, dtype=float)
    cov = sp.cov
    return _log_pdf(
        q[..., 0], q[..., 1], sp.m[0], sp.m[1], cov[0, 0], cov[0, 1], cov[1, 1]
    )


def _log_pdf(x, y, mx, my, sxx, sxy, syy):
    # Closed-form 2x2 inverse so that parameter arrays broadcast per pixel.
    det = sxx * syy - sxy * sxy
    dx = x - mx
    dy = y - my
    quad = (syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det
    return -LOG_2PI - 0.5 * np.log(det) - 0.5 * quad


def estimate_spatial(coords, ridge: float = RIDGE) -> SpatialParams:
    """ML centroid and covariance (denominator ``n``) plus ``ridge * I``.

    ``coords`` is an ``(n, 2)`` array of ``(x, y)`` pixel coordinates.
    """
    q = np.asarray(coords, dtype=float).reshape(-1, 2)
    if q.shape[0] == 0:
        raise ValueError("cannot estimate spatial parameters from no pixels")
    m = q.mean(axis=0)
    d = q - m
    cov = d.T @ d / q.shape[0] + ridge * np.eye(2)
    return SpatialParams((m[0], m[1]), cov)
