"""Generalised Gamma Distribution (GGD) for SAR amplitudes.

Density with power ``v``, shape ``kappa`` and scale ``sigma``::

    p(a) = |v| kappa^kappa / (sigma Gamma(kappa)) * (a/sigma)^(kappa v - 1)
           * exp(-kappa (a/sigma)^v)

Parameters are estimated with the method of log-cumulants (second-kind
statistics). For ``y = log a`` the cumulants obey::

    c1 = log sigma + (psi(kappa) - log kappa) / v
    c2 = psi(1, kappa) / v^2
    c3 = psi(2, kappa) / v^3

so ``c3^2 / c2^3`` depends on ``kappa`` alone and is inverted by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

KAPPA_MIN = 0.05
KAPPA_MAX = 500.0
MIN_SAMPLES = 30
C2_TOL = 1e-12
RATIO_TOL = 1e-10

# B_2, B_4, ..., B_16
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)
_ASYMPTOTIC_FROM = 12.0


class EstimationFailed(ValueError):
    """Raised when log-cumulant estimation cannot produce valid parameters."""


@dataclass(frozen=True)
class GgdParams:
    """Power ``v``, shape ``kappa`` and scale ``sigma`` of one GGD component."""

    v: float
    kappa: float
    sigma: float

    def __post_init__(self):
        for name in ("v", "kappa", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.v == 0:
            raise ValueError("power v must be nonzero")
        if self.kappa <= 0:
            raise ValueError(f"shape kappa must be positive, got {self.kappa}")
        if self.sigma <= 0:
            raise ValueError(f"scale sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class LogCumulants:
    c1: float
    c2: float
    c3: float
    n: int


def polygamma(m: int, x):
    """Digamma (m=0), trigamma (m=1) or tetragamma (m=2) for ``x > 0``.

    Shifts the argument above 12 with the recurrence
    ``psi^(m)(x) = psi^(m)(x + 1) - (-1)^m m! / x^(m+1)`` and then sums the
    Bernoulli asymptotic series. Accepts scalars or arrays.
    """
    if m not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {m}")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("polygamma is only defined here for x > 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()

    acc = np.zeros_like(x)
    sign = -1.0 if m % 2 == 0 else 1.0  # -(-1)^m
    fact = float(math.factorial(m))
    while True:
        low = x < _ASYMPTOTIC_FROM
        if not low.any():
            break
        acc[low] += sign * fact / x[low] ** (m + 1)
        x[low] += 1.0

    inv = 1.0 / x
    if m == 0:
        series = np.log(x) - 0.5 * inv
        inv2 = inv * inv
        term = np.ones_like(x)
        for k, b in enumerate(_BERNOULLI, start=1):
            term = term * inv2
            series -= b / (2 * k) * term
    else:
        # (-1)^(m+1) [ (m-1)!/x^m + m!/(2 x^(m+1)) + sum B_2k (2k+m-1)!/(2k)! / x^(2k+m) ]
        series = math.factorial(m - 1) * inv**m + fact * 0.5 * inv ** (m + 1)
        for k, b in enumerate(_BERNOULLI, start=1):
            coef = b * math.factorial(2 * k + m - 1) / math.factorial(2 * k)
            series = series + coef * inv ** (2 * k + m)
        if m % 2 == 0:
            series = -series
    out = series + acc
    return float(out[0]) if scalar else out


def _check_params(p: GgdParams) -> GgdParams:
    if not isinstance(p, GgdParams):
        p = GgdParams(*p)
    return p


def ggd_log_pdf(a, p: GgdParams):
    """Log-density of the GGD, evaluated in log space."""
    p = _check_params(p)
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise ValueError("amplitudes must be strictly positive")
    return _log_pdf(a, p.v, p.kappa, p.sigma)


def _log_pdf(a, v, kappa, sigma):
    # Vectorised over broadcastable parameter arrays; no validation.
    log_ratio = np.log(a) - np.log(sigma)
    with np.errstate(over="ignore"):
        powered = np.exp(v * log_ratio)
    return (
        np.log(np.abs(v))
        + kappa * np.log(kappa)
        - np.log(sigma)
        - gammaln(kappa)
        + (kappa * v - 1.0) * log_ratio
        - kappa * powered
    )


def ggd_pdf(a, p: GgdParams):
    """Density of the GGD at amplitude(s) ``a``."""
    return np.exp(ggd_log_pdf(a, p))


def ggd_sample(p: GgdParams, n: int, rng=None) -> np.ndarray:
    """Draw ``n`` amplitudes as ``sigma * (X / kappa)^(1/v)``, ``X ~ Gamma(kappa, 1)``.

    ``rng`` may be a ``numpy.random.Generator`` or an integer seed.
    """
    p = _check_params(p)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng)
    x = rng.standard_gamma(p.kappa, size=n)
    # Gamma draws for small kappa can underflow to exactly zero.
    x = np.maximum(x, np.finfo(float).tiny)
    return p.sigma * (x / p.kappa) ** (1.0 / p.v)


def log_cumulants(samples) -> LogCumulants:
    """Sample log-cumulants: mean, unbiased variance and third central moment of ``log a``."""
    a = np.asarray(samples, dtype=float).ravel()
    if a.size < 3:
        raise ValueError("need at least 3 samples")
    if np.any(~(a > 0)):
        raise ValueError("samples must be strictly positive")
    y = np.log(a)
    c1 = y.mean()
    d = y - c1
    c2 = float(np.sum(d * d) / (a.size - 1))
    c3 = float(np.mean(d * d * d))
    return LogCumulants(float(c1), c2, c3, int(a.size))


def cumulant_ratio(kappa):
    """``psi(2, kappa)^2 / psi(1, kappa)^3``; decreases from 4 towards 0."""
    return polygamma(2, kappa) ** 2 / polygamma(1, kappa) ** 3


def solve_from_cumulants(c1, c2, c3, kappa_bounds=(KAPPA_MIN, KAPPA_MAX), c2_tol=C2_TOL):
    """Invert the log-cumulant relations for arrays of cumulant triples.

    Returns ``(v, kappa, sigma, ok)`` arrays; ``ok`` is False wherever the data
    are degenerate (``c2 <= c2_tol``) or the target ratio falls outside what
    the ``kappa`` bracket can reach.
    """
    c1, c2, c3 = (np.atleast_1d(np.asarray(c, dtype=float)) for c in (c1, c2, c3))
    lo_k, hi_k = kappa_bounds
    ok = np.isfinite(c1) & np.isfinite(c2) & np.isfinite(c3) & (c2 > c2_tol) & (c3 != 0)
    safe_c2 = np.where(ok, c2, 1.0)
    target = np.where(ok, c3 * c3 / safe_c2**3, 1.0)
    r_lo = cumulant_ratio(lo_k)
    r_hi = cumulant_ratio(hi_k)
    ok &= (target <= r_lo) & (target >= r_hi)

    # Bisection in log(kappa): the ratio is monotone decreasing on the bracket.
    lo = np.full(c1.shape, math.log(lo_k))
    hi = np.full(c1.shape, math.log(hi_k))
    root = 0.5 * (lo + hi)
    active = ok.copy()
    for _ in range(200):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        resid = cumulant_ratio(np.exp(mid)) - target
        root = np.where(active, mid, root)
        above = resid > 0
        lo = np.where(active & above, mid, lo)
        hi = np.where(active & ~above, mid, hi)
        active &= (np.abs(resid) > RATIO_TOL) & (hi - lo > 1e-15)
    kappa = np.exp(root)

    v_abs = np.sqrt(polygamma(1, kappa) / safe_c2)
    v = np.where(c3 > 0, -v_abs, v_abs)
    log_sigma = c1 - (polygamma(0, kappa) - np.log(kappa)) / v
    sigma = np.exp(log_sigma)
    ok &= np.isfinite(sigma) & (sigma > 0)
    return v, kappa, sigma, ok


def estimate_ggd(samples, min_samples: int = MIN_SAMPLES, clamp_floor: float | None = None) -> GgdParams:
    """Closed-form GGD fit by the method of log-cumulants.

    Parameters
    ----------
    samples : array_like
        Positive amplitudes or intensities.
    min_samples : int
        Fewer samples than this raise :class:`EstimationFailed`.
    clamp_floor : float, optional
        If given, values below it are raised to it before taking logs
        (zero padding in SAR rasters).

    Raises
    ------
    EstimationFailed
        Too few samples, near-constant data, or no root in the shape bracket.
    """
    a = np.asarray(samples, dtype=float).ravel()
    if clamp_floor is not None:
        a = np.maximum(a, clamp_floor)
    if a.size < max(min_samples, 3):
        raise EstimationFailed(f"{a.size} samples is below the minimum of {max(min_samples, 3)}")
    if np.any(~(a > 0)):
        raise ValueError("samples must be strictly positive")
    lc = log_cumulants(a)
    if lc.c2 <= C2_TOL:
        raise EstimationFailed("log-amplitude variance is zero (constant data)")
    v, kappa, sigma, ok = solve_from_cumulants(lc.c1, lc.c2, lc.c3)
    if not ok[0]:
        raise EstimationFailed(
            f"no shape root in [{KAPPA_MIN}, {KAPPA_MAX}] for ratio {lc.c3**2 / lc.c2**3:.4g}"
        )
    return GgdParams(float(v[0]), float(kappa[0]), float(sigma[0]))


def theoretical_log_cumulants(p: GgdParams) -> tuple[float, float, float]:
    """Population ``(c1, c2, c3)`` of ``log a`` under ``p``."""
    p = _check_params(p)
    c1 = math.log(p.sigma) + (polygamma(0, p.kappa) - math.log(p.kappa)) / p.v
    c2 = polygamma(1, p.kappa) / p.v**2
    c3 = polygamma(2, p.kappa) / p.v**3
    return c1, c2, c3
