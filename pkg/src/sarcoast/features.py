"""Per-superpixel texture/brightness features and land/water clustering."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .superpixels import SarImage, SuperpixelMap

WATER = 0
LAND = 1
DEFAULT_BINS = 64
# Minimum share of feature variance the two-cluster split must explain.
MIN_SEPARATION = 0.75


class DegenerateClustering(UserWarning):
    """The features carry no usable two-class structure."""


@dataclass(frozen=True)
class FeatureRow:
    superpixel_id: int
    entropy: float
    median: float


@dataclass
class ClassAssignment:
    """Mapping superpixel id -> WATER/LAND.

    ``separation`` is the between-cluster share of the total sum of squares
    in normalised feature space; ``degenerate`` is set when the features are
    constant or the split explains less than ``MIN_SEPARATION`` of them.
    """

    classes: dict
    separation: float = 1.0
    degenerate: bool = False

    def __getitem__(self, k):
        return self.classes[k]

    def __len__(self):
        return len(self.classes)


def _bin_index(values, global_min, global_max, bins):
    values = np.asarray(values, dtype=float)
    if not global_max > global_min:
        raise ValueError("global_max must exceed global_min")
    idx = np.floor((values - global_min) / (global_max - global_min) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _entropy_bits(hist):
    hist = np.asarray(hist, dtype=float)
    total = hist.sum(axis=-1, keepdims=True)
    p = hist / total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return np.maximum(-terms.sum(axis=-1), 0.0)


def superpixel_entropy(members, global_min: float, global_max: float, bins: int = DEFAULT_BINS) -> float:
    """Shannon entropy (bits) of members histogrammed into ``bins`` equal bins over the global range."""
    members = np.asarray(members, dtype=float).ravel()
    if members.size == 0:
        raise ValueError("empty superpixel")
    hist = np.bincount(_bin_index(members, global_min, global_max, bins), minlength=bins)
    return float(_entropy_bits(hist))


def superpixel_median(members) -> float:
    members = np.asarray(members, dtype=float).ravel()
    if members.size == 0:
        raise ValueError("empty superpixel")
    return float(np.median(members))


def compute_features(img: SarImage, spm: SuperpixelMap, bins: int = DEFAULT_BINS) -> list[FeatureRow]:
    """Entropy and median for every non-empty superpixel, ordered by id."""
    lab = spm.labels.ravel()
    vals = img.data.ravel()
    lo, hi = float(vals.min()), float(vals.max())
    if not hi > lo:
        # Constant image: every member falls in one bin.
        hi = lo + 1.0
    K = spm.K
    hist = np.zeros((K + 1, bins), dtype=np.int64)
    np.add.at(hist, (lab, _bin_index(vals, lo, hi, bins)), 1)
    counts = hist.sum(axis=1)

    order = np.lexsort((vals, lab))
    sorted_vals = vals[order]
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    rows = []
    for k in range(1, K + 1):
        n = counts[k]
        if n == 0:
            continue
        s = starts[k]
        if n % 2:
            med = sorted_vals[s + n // 2]
        else:
            med = 0.5 * (sorted_vals[s + n // 2 - 1] + sorted_vals[s + n // 2])
        rows.append(FeatureRow(k, float(_entropy_bits(hist[k])), float(med)))
    return rows


def cluster_two(rows: list[FeatureRow], min_separation: float = MIN_SEPARATION) -> ClassAssignment:
    """Ward agglomerative clustering of z-scored (entropy, median) into water and land.

    The cluster with the lower mean median is water; on a tie, the one with
    lower mean entropy.
    """
    if len(rows) < 2:
        raise ValueError("need at least two superpixels to cluster")
    ids = [r.superpixel_id for r in rows]
    raw = np.array([[r.entropy, r.median] for r in rows], dtype=float)
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0)
    z = np.where(sd > 0, (raw - mu) / np.where(sd > 0, sd, 1.0), 0.0)

    total_ss = float(np.sum(z * z))
    if total_ss == 0.0:
        warnings.warn("all superpixel features are identical", DegenerateClustering, stacklevel=2)
        return ClassAssignment({k: WATER for k in ids}, separation=0.0, degenerate=True)

    # Canonical row order makes the dendrogram independent of input order.
    canon = np.lexsort((raw[:, 1], raw[:, 0]))
    tree = linkage(z[canon], method="ward", metric="euclidean")
    groups = np.empty(len(rows), dtype=int)
    groups[canon] = fcluster(tree, t=2, criterion="maxclust")

    within = 0.0
    stats = {}
    for g in np.unique(groups):
        sel = groups == g
        within += float(np.sum((z[sel] - z[sel].mean(axis=0)) ** 2))
        stats[g] = (raw[sel, 1].mean(), raw[sel, 0].mean())
    separation = 1.0 - within / total_ss

    if len(stats) == 1:
        water_group = next(iter(stats))
    else:
        water_group = min(stats, key=lambda g: stats[g])
    classes = {k: (WATER if g == water_group else LAND) for k, g in zip(ids, groups)}
    degenerate = separation < min_separation
    if degenerate:
        warnings.warn(
            f"two-cluster split explains only {separation:.2f} of feature variance",
            DegenerateClustering,
            stacklevel=2,
        )
    return ClassAssignment(classes, separation=separation, degenerate=degenerate)


def build_binary_mask(spm: SuperpixelMap, ca: ClassAssignment) -> np.ndarray:
    """Land/water raster (True = land) obtained by painting each superpixel with its class."""
    lut = np.full(spm.K + 1, -1, dtype=np.int8)
    for k, cls in ca.classes.items():
        lut[k] = cls
    painted = lut[spm.labels]
    if np.any(painted < 0):
        missing = sorted(set(np.unique(spm.labels[painted < 0]).tolist()))
        raise KeyError(f"no class assigned to superpixels {missing[:10]}")
    return painted == LAND


def write_features_csv(rows: list[FeatureRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["superpixel_id", "entropy", "median"])
        for r in rows:
            w.writerow([r.superpixel_id, repr(r.entropy), repr(r.median)])
