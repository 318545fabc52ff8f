"""Synthetic coastal SAR scenes with known ground truth, and boundary scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .ggd import GgdParams, ggd_sample
from .superpixels import SarImage, SuperpixelMap, boundary_mask

DEFAULT_WATER = GgdParams(1.0, 1.0, 1.0)
DEFAULT_LAND = GgdParams(1.0, 8.0, 6.0)
N_HARMONICS = 5


@dataclass
class SyntheticScene:
    """Sampled image plus ground truth.

    ``truth_mask`` is True on land and includes any lakes and islets;
    ``coast_mask`` is the same split without them. ``truth_interface`` is an
    ``(n, 2, 2)`` array of 4-adjacent land/water pixel pairs
    ``[[row, col], [row, col]]`` taken from ``truth_mask``.
    """

    image: SarImage
    truth_mask: np.ndarray
    coast_mask: np.ndarray
    truth_interface: np.ndarray
    boundary_rows: np.ndarray
    meta: dict

    def interface_pixels(self) -> np.ndarray:
        return interface_pixels(self.truth_mask)


@dataclass(frozen=True)
class BoundaryScore:
    precision: float
    recall: float
    f1: float
    mean_distance: float
    hausdorff: float

    def as_dict(self) -> dict:
        def enc(x):
            return None if not math.isfinite(x) else x

        return {k: enc(v) for k, v in self.__dict__.items()}


def interface_pairs(mask: np.ndarray) -> np.ndarray:
    """All 4-adjacent pixel pairs whose classes differ, as ``(n, 2, 2)`` (row, col)."""
    mask = np.asarray(mask, dtype=bool)
    out = []
    r, c = np.nonzero(mask[1:, :] != mask[:-1, :])
    out.append(np.stack([np.stack([r, c], 1), np.stack([r + 1, c], 1)], 1))
    r, c = np.nonzero(mask[:, 1:] != mask[:, :-1])
    out.append(np.stack([np.stack([r, c], 1), np.stack([r, c + 1], 1)], 1))
    return np.concatenate(out).reshape(-1, 2, 2)


def interface_pixels(mask: np.ndarray) -> np.ndarray:
    """Distinct pixels taking part in any land/water 4-adjacency, sorted (row, col)."""
    pairs = interface_pairs(mask)
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=int)
    return np.unique(pairs.reshape(-1, 2), axis=0)


def coast_rows(width: int, height: int, roughness: float, rng: np.random.Generator) -> np.ndarray:
    """Sum of five random sinusoids around ``height / 2``; amplitudes sum to ``roughness``."""
    weights = rng.uniform(0.0, 1.0, N_HARMONICS)
    amps = roughness * weights / weights.sum()
    freqs = rng.integers(1, 9, N_HARMONICS)
    phases = rng.uniform(0.0, 2.0 * math.pi, N_HARMONICS)
    col = np.arange(width)
    b = np.full(width, height / 2.0)
    for a, f, p in zip(amps, freqs, phases):
        b += a * np.sin(2.0 * math.pi * f * col / width + p)
    return b


def _place_discs(free: np.ndarray, n: int, radius: float, rng, tries: int = 10_000):
    """Centres of ``n`` non-overlapping discs whose (padded) footprint lies inside ``free``."""
    H, W = free.shape
    rows, cols = np.indices((H, W))
    pad = 2 * radius + 2
    centres = []
    for _ in range(tries):
        if len(centres) == n:
            break
        r = rng.uniform(pad, H - pad)
        c = rng.uniform(pad, W - pad)
        if any(math.hypot(r - r0, c - c0) < 2 * pad for r0, c0 in centres):
            continue
        foot = (rows - r) ** 2 + (cols - c) ** 2 <= pad**2
        if free[foot].all():
            centres.append((r, c))
    if len(centres) < n:
        raise ValueError(f"could not place {n} discs of radius {radius}")
    return centres


def gen_coast_scene(
    width: int,
    height: int,
    seed: int,
    land_params: GgdParams = DEFAULT_LAND,
    water_params: GgdParams = DEFAULT_WATER,
    roughness: float = 0.0,
    n_lakes: int = 0,
    n_islets: int = 0,
    feature_radius: float = 5.0,
) -> SyntheticScene:
    """Generate a coastal scene: land above a sinusoidal coastline, water below.

    Lakes (water discs inside land) and islets (land discs in the sea) are
    optional. Both classes are sampled over the whole frame and then
    selected by the truth mask, so scenes with and without lakes/islets
    under one seed share their speckle everywhere else.
    """
    if roughness < 0 or roughness >= height / 4:
        raise ValueError("roughness must lie in [0, height/4)")
    if width < 2 or height < 2:
        raise ValueError("scene too small")
    rng = np.random.default_rng(seed)
    b = coast_rows(width, height, roughness, rng)
    rows = np.arange(height)[:, None]
    coast_mask = rows < b[None, :]

    n = width * height
    land = ggd_sample(land_params, n, rng).reshape(height, width)
    water = ggd_sample(water_params, n, rng).reshape(height, width)

    truth = coast_mask.copy()
    if n_lakes or n_islets:
        feat_rng = np.random.default_rng([seed, 1])
        rr, cc = np.indices((height, width))
        for centres, inside, value in (
            (_place_discs(coast_mask, n_lakes, feature_radius, feat_rng), coast_mask, False),
            (_place_discs(~coast_mask, n_islets, feature_radius, feat_rng), ~coast_mask, True),
        ):
            for r, c in centres:
                truth[(rr - r) ** 2 + (cc - c) ** 2 <= feature_radius**2] = value

    data = np.where(truth, land, water)
    meta = {
        "width": width,
        "height": height,
        "seed": seed,
        "roughness": roughness,
        "land_params": {"v": land_params.v, "kappa": land_params.kappa, "sigma": land_params.sigma},
        "water_params": {"v": water_params.v, "kappa": water_params.kappa, "sigma": water_params.sigma},
        "n_lakes": n_lakes,
        "n_islets": n_islets,
        "feature_radius": feature_radius,
    }
    return SyntheticScene(
        image=SarImage.from_array(data),
        truth_mask=truth,
        coast_mask=coast_mask,
        truth_interface=interface_pairs(truth),
        boundary_rows=b,
        meta=meta,
    )


def _nearest(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    if len(src) == 0:
        return np.zeros(0)
    if len(dst) == 0:
        return np.full(len(src), np.inf)
    d, _ = cKDTree(dst).query(src)
    return d


def boundary_score(extracted, truth, tol: float = 2.0) -> BoundaryScore:
    """Tolerance-based precision/recall of boundary pixels plus distance summaries.

    ``mean_distance`` averages the two directed mean nearest-neighbour
    distances; ``hausdorff`` is the larger directed maximum. Both are
    infinite when exactly one set is empty and 0 when both are.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    ext = np.asarray(extracted, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth, dtype=float).reshape(-1, 2)
    d_et = _nearest(ext, tru)
    d_te = _nearest(tru, ext)
    precision = float(np.mean(d_et <= tol)) if len(ext) else 0.0
    recall = float(np.mean(d_te <= tol)) if len(tru) else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    if len(ext) == 0 and len(tru) == 0:
        mean_d = haus = 0.0
    elif len(ext) == 0 or len(tru) == 0:
        mean_d = haus = math.inf
    else:
        mean_d = 0.5 * (float(d_et.mean()) + float(d_te.mean()))
        haus = float(max(d_et.max(), d_te.max()))
    return BoundaryScore(precision, recall, f1, mean_d, haus)


def superpixel_boundary_recall(spm: SuperpixelMap | np.ndarray, truth_pixels, tol: float = 1.0) -> float:
    """Fraction of truth-interface pixels within ``tol`` of a superpixel-boundary pixel."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    labels = spm.labels if isinstance(spm, SuperpixelMap) else np.asarray(spm)
    tru = np.asarray(truth_pixels, dtype=float).reshape(-1, 2)
    if len(tru) == 0:
        return 1.0
    bnd = np.argwhere(boundary_mask(labels)).astype(float)
    return float(np.mean(_nearest(tru, bnd) <= tol))
