"""MISP-GGD superpixel segmentation by block iterated conditional modes.

Every pixel carries an amplitude and its ``(x, y)`` position. Superpixel
``k`` models amplitudes with a GGD and positions with a bivariate normal,
and has a mixture proportion ``omega_k`` under a symmetric Dirichlet prior.
One ICM iteration

1. relabels boundary pixels to the best-scoring label among their own and
   their 4-neighbours' labels (scores computed against the frozen map),
2. restores 4-connectivity of every superpixel,
3. re-estimates GGD and spatial parameters per superpixel,
4. recomputes ``omega_k = (n_k + alpha - 1) / (N + K (alpha - 1))``.

Labels are 1-based; per-superpixel arrays have length ``K + 1`` and slot 0
is unused.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import ggd
from .ggd import GgdParams, estimate_ggd, EstimationFailed
from .spatial import RIDGE, SpatialParams, _log_pdf as _spatial_log_pdf

log = logging.getLogger(__name__)

_FOUR = ndimage.generate_binary_structure(2, 1)


def clamp_floor(data: np.ndarray) -> float:
    """Smallest admissible amplitude: 1e-6 of the image maximum."""
    return 1e-6 * float(np.max(data))


@dataclass
class SarImage:
    """Single-channel SAR raster, row-major ``(height, width)``, all values > 0."""

    data: np.ndarray
    channel_kind: str = "amplitude"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("SAR image must be two-dimensional")
        if not np.all(np.isfinite(data)):
            raise ValueError("SAR image contains non-finite values")
        if self.channel_kind not in ("amplitude", "intensity"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")
        if np.any(data <= 0):
            raise ValueError("SAR image values must be positive; use SarImage.from_array to clamp")
        self.data = data

    @classmethod
    def from_array(cls, arr, channel_kind: str = "amplitude") -> "SarImage":
        """Build an image, clamping values below 1e-6 x max up to that floor."""
        data = np.asarray(arr, dtype=np.float64)
        if data.size == 0 or not np.any(data > 0):
            raise ValueError("image has no positive values")
        return cls(np.maximum(data, clamp_floor(data)), channel_kind)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class EngineConfig:
    K: int
    alpha: float = 1.5
    max_iters: int = 100
    change_tol: float = 1e-4
    min_est_pixels: int = ggd.MIN_SAMPLES
    # Recorded for reproducibility; the engine itself draws no random numbers.
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.change_tol < 1:
            raise ValueError("change_tol must lie in [0, 1)")
        if self.min_est_pixels < 3:
            raise ValueError("min_est_pixels must be >= 3")


@dataclass
class SuperpixelMap:
    labels: np.ndarray
    K: int
    v: np.ndarray
    kappa: np.ndarray
    sigma: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    omega: np.ndarray
    iterations_run: int = 0
    changed_trace: list = field(default_factory=list)

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.K + 1)

    def active(self) -> np.ndarray:
        """Ids with at least one member pixel."""
        return np.flatnonzero(self.counts()[1:]) + 1

    def theta(self, k: int) -> tuple[GgdParams, SpatialParams]:
        return (
            GgdParams(float(self.v[k]), float(self.kappa[k]), float(self.sigma[k])),
            SpatialParams(tuple(self.mean[k]), self.cov[k]),
        )

    def copy(self) -> "SuperpixelMap":
        return dataclasses.replace(
            self,
            labels=self.labels.copy(),
            v=self.v.copy(),
            kappa=self.kappa.copy(),
            sigma=self.sigma.copy(),
            mean=self.mean.copy(),
            cov=self.cov.copy(),
            omega=self.omega.copy(),
            changed_trace=list(self.changed_trace),
        )


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels having at least one 4-neighbour with a different label."""
    out = np.zeros(labels.shape, dtype=bool)
    dv = labels[1:, :] != labels[:-1, :]
    dh = labels[:, 1:] != labels[:, :-1]
    out[1:, :] |= dv
    out[:-1, :] |= dv
    out[:, 1:] |= dh
    out[:, :-1] |= dh
    return out


def grid_labels(height: int, width: int, K: int) -> np.ndarray:
    """Partition the image into exactly ``K`` near-square rectangular cells.

    Rows of cells are chosen so that the cell step approximates
    ``sqrt(N / K)``; the ``K`` cells are spread as evenly as possible over
    those rows.
    """
    N = height * width
    if K > N // 9:
        raise ValueError(f"K={K} too large for a {width}x{height} image (max {N // 9})")
    step = np.sqrt(N / K)
    n_rows = int(np.clip(round(height / step), 1, K))
    base, extra = divmod(K, n_rows)
    row_edges = (np.arange(n_rows + 1) * height) // n_rows
    labels = np.empty((height, width), dtype=np.int32)
    next_id = 1
    for i in range(n_rows):
        n_cols = base + ((i + 1) * extra // n_rows - i * extra // n_rows)
        if n_cols > width:
            raise ValueError(f"K={K} too large for image width {width}")
        col_edges = (np.arange(n_cols + 1) * width) // n_cols
        band = labels[row_edges[i] : row_edges[i + 1]]
        for j in range(n_cols):
            band[:, col_edges[j] : col_edges[j + 1]] = next_id
            next_id += 1
    return labels


def _fallback_ggd(data: np.ndarray, min_samples: int) -> GgdParams:
    try:
        return estimate_ggd(data, min_samples=min_samples)
    except EstimationFailed:
        # Unit-power, unit-shape GGD is the exponential law with scale sigma.
        return GgdParams(1.0, 1.0, float(np.mean(data)))


def init_grid(img: SarImage, cfg: EngineConfig) -> SuperpixelMap:
    labels = grid_labels(img.height, img.width, cfg.K)
    K = cfg.K
    fb = _fallback_ggd(img.data, cfg.min_est_pixels)
    spm = SuperpixelMap(
        labels=labels,
        K=K,
        v=np.full(K + 1, fb.v),
        kappa=np.full(K + 1, fb.kappa),
        sigma=np.full(K + 1, fb.sigma),
        mean=np.zeros((K + 1, 2)),
        cov=np.tile(RIDGE * np.eye(2), (K + 1, 1, 1)),
        omega=np.r_[0.0, np.full(K, 1.0 / K)],
    )
    return update_theta(img, spm, cfg.min_est_pixels)


def _coords(shape):
    rows, cols = np.indices(shape)
    return cols.astype(float), rows.astype(float)


def score(img: SarImage, spm: SuperpixelMap, labels, flat_index) -> np.ndarray:
    """Per-pixel log posterior score of assigning ``labels`` to pixels ``flat_index``.

    ``log GGD(a | theta_k) + log N2(q | m_k, Sigma_k) + log omega_k``; shapes
    of ``labels`` and ``flat_index`` broadcast.
    """
    labels = np.asarray(labels)
    flat_index = np.asarray(flat_index)
    a = img.data.ravel()[flat_index]
    y, x = np.divmod(flat_index, img.width)
    with np.errstate(divide="ignore"):
        log_omega = np.log(spm.omega[labels])
    return (
        ggd._log_pdf(a, spm.v[labels], spm.kappa[labels], spm.sigma[labels])
        + _spatial_log_pdf(
            x.astype(float),
            y.astype(float),
            spm.mean[labels, 0],
            spm.mean[labels, 1],
            spm.cov[labels, 0, 0],
            spm.cov[labels, 0, 1],
            spm.cov[labels, 1, 1],
        )
        + log_omega
    )


def total_score(img: SarImage, spm: SuperpixelMap, labels: np.ndarray | None = None) -> float:
    """Summed per-pixel score of a label grid under the frozen parameters of ``spm``."""
    labels = spm.labels if labels is None else labels
    return float(np.sum(score(img, spm, labels.ravel(), np.arange(labels.size))))


def candidate_labels(labels: np.ndarray):
    """Boundary pixel indices and their candidate label table.

    Returns ``(flat_index, cands)`` where ``cands`` has columns
    own, up, down, left, right; 0 marks a missing (off-image) neighbour.
    """
    H, W = labels.shape
    bnd = boundary_mask(labels)
    r, c = np.nonzero(bnd)
    padded = np.pad(labels, 1, constant_values=0)
    cands = np.stack(
        [
            labels[r, c],
            padded[r, c + 1],
            padded[r + 2, c + 1],
            padded[r + 1, c],
            padded[r + 1, c + 2],
        ],
        axis=1,
    )
    return r * W + c, cands


def update_labels(img: SarImage, spm: SuperpixelMap) -> tuple[SuperpixelMap, float]:
    """One two-phase ICM label sweep over superpixel boundary pixels.

    Ties keep the current label, then favour up, down, left, right in that order.
    """
    flat, cands = candidate_labels(spm.labels)
    out = spm.copy()
    if flat.size == 0:
        return out, 0.0
    scores = score(img, spm, cands, flat[:, None])
    scores = np.where(cands > 0, scores, -np.inf)
    best = cands[np.arange(len(flat)), np.argmax(scores, axis=1)]
    changed = best != cands[:, 0]
    out.labels.ravel()[flat[changed]] = best[changed]
    return out, float(np.count_nonzero(changed)) / img.n_pixels


def update_theta(img: SarImage, spm: SuperpixelMap, min_est_pixels: int = ggd.MIN_SAMPLES) -> SuperpixelMap:
    """Re-estimate per-superpixel GGD and spatial parameters from member pixels.

    Superpixels with fewer than ``min_est_pixels`` members, or whose
    log-cumulant fit fails, keep their previous GGD parameters. Empty
    superpixels are left untouched.
    """
    out = spm.copy()
    K = spm.K
    lab = spm.labels.ravel()
    n = np.bincount(lab, minlength=K + 1).astype(float)
    nz = n > 0
    nz[0] = False
    safe_n = np.where(nz, n, 1.0)

    x, y = _coords(spm.labels.shape)
    x = x.ravel()
    y = y.ravel()
    mx = np.bincount(lab, x, K + 1) / safe_n
    my = np.bincount(lab, y, K + 1) / safe_n
    dx = x - mx[lab]
    dy = y - my[lab]
    sxx = np.bincount(lab, dx * dx, K + 1) / safe_n + RIDGE
    sxy = np.bincount(lab, dx * dy, K + 1) / safe_n
    syy = np.bincount(lab, dy * dy, K + 1) / safe_n + RIDGE
    out.mean[nz] = np.stack([mx, my], axis=1)[nz]
    out.cov[nz, 0, 0] = sxx[nz]
    out.cov[nz, 0, 1] = sxy[nz]
    out.cov[nz, 1, 0] = sxy[nz]
    out.cov[nz, 1, 1] = syy[nz]

    ly = np.log(img.data.ravel())
    c1 = np.bincount(lab, ly, K + 1) / safe_n
    d = ly - c1[lab]
    c2 = np.bincount(lab, d * d, K + 1) / np.maximum(n - 1, 1.0)
    c3 = np.bincount(lab, d * d * d, K + 1) / safe_n
    eligible = n >= max(min_est_pixels, 3)
    eligible[0] = False
    if eligible.any():
        v, kappa, sigma, ok = ggd.solve_from_cumulants(c1[eligible], c2[eligible], c3[eligible])
        idx = np.flatnonzero(eligible)[ok]
        out.v[idx] = v[ok]
        out.kappa[idx] = kappa[ok]
        out.sigma[idx] = sigma[ok]
    return out


def update_omega(spm: SuperpixelMap, alpha: float) -> SuperpixelMap:
    """Closed-form MAP mixture proportions under a symmetric Dirichlet(alpha) prior."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    out = spm.copy()
    counts = spm.counts()[1:].astype(float)
    N = counts.sum()
    out.omega = np.r_[0.0, (counts + alpha - 1.0) / (N + spm.K * (alpha - 1.0))]
    return out


def _fragments(labels: np.ndarray):
    """Label every 4-connected fragment of every superpixel.

    Returns ``(frag, is_main)``: a grid of fragment ids starting at 1, and a
    boolean array indexed by fragment id marking the largest fragment of
    each superpixel (earliest in raster order on size ties).
    """
    frag = np.zeros(labels.shape, dtype=np.int64)
    main = [False]
    next_id = 1
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        sub = labels[sl] == k
        comp, n = ndimage.label(sub, structure=_FOUR)
        sizes = np.bincount(comp.ravel(), minlength=n + 1)[1:]
        biggest = int(np.argmax(sizes))
        view = frag[sl]
        view[sub] = comp[sub] + (next_id - 1)
        main.extend(i == biggest for i in range(n))
        next_id += n
    return frag, np.array(main, dtype=bool)


def enforce_connectivity(spm: SuperpixelMap, max_passes: int = 100) -> SuperpixelMap:
    """Keep each superpixel's largest 4-connected fragment and absorb the rest.

    A stray fragment takes the majority label among its outside
    4-neighbour pixels that belong to retained fragments (smallest id wins
    ties). Fragments with no such neighbour wait for a later pass.
    """
    out = spm.copy()
    labels = out.labels
    H, W = labels.shape
    for _ in range(max_passes):
        frag, is_main = _fragments(labels)
        if is_main[1:].all():
            return out
        f = frag.ravel()
        lab = labels.ravel()
        idx = np.arange(f.size).reshape(H, W)
        pairs = []
        for a, b in (
            (idx[1:, :], idx[:-1, :]),
            (idx[:-1, :], idx[1:, :]),
            (idx[:, 1:], idx[:, :-1]),
            (idx[:, :-1], idx[:, 1:]),
        ):
            a = a.ravel()
            b = b.ravel()
            keep = ~is_main[f[a]] & is_main[f[b]]
            pairs.append(np.stack([f[a[keep]], b[keep]], axis=1))
        pairs = np.unique(np.concatenate(pairs), axis=0)  # distinct outside pixels
        votes, n_votes = np.unique(
            np.stack([pairs[:, 0], lab[pairs[:, 1]]], axis=1), axis=0, return_counts=True
        )
        # Sort by fragment, then count descending, then label ascending.
        order = np.lexsort((votes[:, 1], -n_votes, votes[:, 0]))
        votes = votes[order]
        first = np.r_[True, votes[1:, 0] != votes[:-1, 0]]
        winner = np.zeros(is_main.size, dtype=labels.dtype)
        winner[votes[first, 0]] = votes[first, 1]
        move = winner[f] > 0
        lab[move] = winner[f][move]
    raise RuntimeError("connectivity repair did not converge")


def is_connected(labels: np.ndarray) -> bool:
    """True when every label present forms a single 4-connected region."""
    _, is_main = _fragments(labels)
    return bool(is_main[1:].all())


def segment(img: SarImage, cfg: EngineConfig) -> SuperpixelMap:
    """Run grid initialisation followed by block-ICM iterations to convergence."""
    spm = init_grid(img, cfg)
    for it in range(cfg.max_iters):
        spm, changed = update_labels(img, spm)
        spm = enforce_connectivity(spm)
        spm = update_theta(img, spm, cfg.min_est_pixels)
        spm = update_omega(spm, cfg.alpha)
        spm.iterations_run = it + 1
        spm.changed_trace.append(changed)
        log.debug("iteration %d: %.5f of pixels changed", it + 1, changed)
        if changed < cfg.change_tol:
            break
    return spm
