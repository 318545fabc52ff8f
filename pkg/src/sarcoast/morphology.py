"""Land/water mask clean-up and coastline extraction.

Masks are boolean arrays with True for land. Land components are taken
4-connected and water components 8-connected so that a diagonal crossing
never joins both classes at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

LAND_CONNECTIVITY = 4
WATER_CONNECTIVITY = 8
MAX_FILL_PASSES = 10

_STRUCT = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}
# Moore neighbourhood, edge-adjacent offsets first.
_NEIGHBOURS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, -1), (-1, 1))


class OneClassOnly(ValueError):
    """The mask holds a single class, so no coastline exists."""


@dataclass
class FillResult:
    mask: np.ndarray
    components_before: int
    components_after: int
    passes: int


@dataclass
class Coastline:
    border_mask: np.ndarray
    chains: list = field(default_factory=list)

    def pixels(self) -> np.ndarray:
        return np.argwhere(self.border_mask)


def label_components(mask: np.ndarray, cls: bool, connectivity: int):
    """``scipy.ndimage.label`` of the pixels equal to ``cls``."""
    if connectivity not in _STRUCT:
        raise ValueError("connectivity must be 4 or 8")
    return ndimage.label(np.asarray(mask, dtype=bool) == cls, structure=_STRUCT[connectivity])


def connected_components(mask: np.ndarray, cls: bool, connectivity: int = 4) -> list[np.ndarray]:
    """Components of class ``cls`` as ``(n, 2)`` (row, col) arrays.

    Sorted by size descending, then by first pixel in raster order.
    """
    lab, n = label_components(mask, cls, connectivity)
    if n == 0:
        return []
    flat = lab.ravel()
    order = np.argsort(flat, kind="stable")
    sizes = np.bincount(flat, minlength=n + 1)
    bounds = np.cumsum(sizes)
    W = lab.shape[1]
    comps = []
    for k in range(1, n + 1):
        idx = order[bounds[k - 1] : bounds[k]]
        comps.append(np.stack(np.divmod(idx, W), axis=1))
    # ndimage.label numbers components in raster order of their first pixel.
    comps.sort(key=lambda c: -len(c))
    return comps


def count_components(mask: np.ndarray) -> int:
    """Land components (4-connected) plus water components (8-connected)."""
    return (
        label_components(mask, True, LAND_CONNECTIVITY)[1]
        + label_components(mask, False, WATER_CONNECTIVITY)[1]
    )


def _largest(lab: np.ndarray, n: int) -> int:
    sizes = np.bincount(lab.ravel(), minlength=n + 1)
    sizes[0] = -1
    return int(np.argmax(sizes))


def fill_voids(mask: np.ndarray) -> FillResult:
    """Flip every component but the largest land and largest water one.

    Water holes are filled first, then stray land components are sunk; the
    two largest components found on entry are never modified.

    Raises
    ------
    OneClassOnly
        If the mask lacks land or water entirely.
    """
    m = np.asarray(mask, dtype=bool).copy()
    if m.all() or not m.any():
        raise OneClassOnly("mask contains a single class")
    before = count_components(m)

    land_lab, n_land = label_components(m, True, LAND_CONNECTIVITY)
    water_lab, n_water = label_components(m, False, WATER_CONNECTIVITY)
    keep_land = land_lab == _largest(land_lab, n_land)
    keep_water = water_lab == _largest(water_lab, n_water)

    passes = 0
    while passes < MAX_FILL_PASSES:
        water_lab, n_water = label_components(m, False, WATER_CONNECTIVITY)
        land_lab, n_land = label_components(m, True, LAND_CONNECTIVITY)
        if n_water == 1 and n_land == 1:
            break
        passes += 1
        main_water = np.unique(water_lab[keep_water])
        m |= (water_lab > 0) & ~np.isin(water_lab, main_water)
        land_lab, n_land = label_components(m, True, LAND_CONNECTIVITY)
        main_land = np.unique(land_lab[keep_land])
        m &= ~((land_lab > 0) & ~np.isin(land_lab, main_land))
    else:
        raise RuntimeError("void filling did not converge")

    after = count_components(m)
    if n_land > 1 or n_water > 1:
        raise RuntimeError("void filling left extra components")
    return FillResult(m, before, after, passes)


def extract_border(filled: np.ndarray, side: str = "land") -> Coastline:
    """Pixels of ``side`` class with an opposite-class 4-neighbour, frame excluded.

    The outermost ring of pixels is dropped before neighbours are examined,
    so a pixel whose only opposite-class neighbour lies on the frame is not
    a border pixel. This keeps land-side and water-side borders within one
    pixel of each other.

    Raises ``OneClassOnly`` if a class is missing and ``ValueError`` if the
    mask has more than one component per class.
    """
    m = np.asarray(filled, dtype=bool)
    if m.all() or not m.any():
        raise OneClassOnly("mask contains a single class")
    if label_components(m, True, LAND_CONNECTIVITY)[1] != 1 or label_components(
        m, False, WATER_CONNECTIVITY
    )[1] != 1:
        raise ValueError("border extraction needs exactly one land and one water component")
    if side not in ("land", "water"):
        raise ValueError("side must be 'land' or 'water'")
    own = m if side == "land" else ~m
    border = np.zeros_like(own)
    if own.shape[0] > 2 and own.shape[1] > 2:
        # Only interior pixels take part, on both sides of each adjacency.
        inner = own[1:-1, 1:-1]
        other = np.pad(~inner, 1, constant_values=False)
        touches = other[:-2, 1:-1] | other[2:, 1:-1] | other[1:-1, :-2] | other[1:-1, 2:]
        border[1:-1, 1:-1] = inner & touches
    return Coastline(border)


def trace_polyline(border_mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """Group border pixels into ordered 8-connected chains of (row, col).

    Each 8-connected group is walked from an endpoint (a pixel with at most
    one border neighbour), or from its topmost-leftmost pixel when it has
    none. At every step the walk moves to the unvisited Moore neighbour
    with the fewest unvisited neighbours of its own, edge neighbours first
    on ties, so that spurs at thick spots are consumed rather than stranded.
    Pixels still left behind start new chains, again from an endpoint or
    the topmost-leftmost remaining pixel.
    """
    b = np.asarray(border_mask, dtype=bool)
    H, W = b.shape
    if not b.any():
        return []
    remaining = b.copy()

    def open_neighbours(r, c):
        return [
            (r + dr, c + dc)
            for dr, dc in _NEIGHBOURS
            if 0 <= r + dr < H and 0 <= c + dc < W and remaining[r + dr, c + dc]
        ]

    def walk(start):
        chain = [start]
        remaining[start] = False
        cur = start
        while True:
            cands = open_neighbours(*cur)
            if not cands:
                return chain
            # min() keeps the first of equal keys, i.e. the _NEIGHBOURS order.
            cur = min(cands, key=lambda p: len(open_neighbours(*p)))
            remaining[cur] = False
            chain.append(cur)

    chains = []
    groups, n = ndimage.label(b, structure=_STRUCT[8])
    for g in range(1, n + 1):
        pts = [(int(r), int(c)) for r, c in np.argwhere(groups == g)]  # raster order
        while True:
            left = [p for p in pts if remaining[p]]
            if not left:
                break
            ends = [p for p in left if len(open_neighbours(*p)) <= 1]
            chains.append(walk(ends[0] if ends else left[0]))
    return chains


def extract_coastline(filled: np.ndarray, side: str = "land") -> Coastline:
    coast = extract_border(filled, side)
    coast.chains = trace_polyline(coast.border_mask)
    return coast


def junction_count(border_mask: np.ndarray) -> int:
    """Border pixels with more than two border neighbours (8-connectivity)."""
    b = np.asarray(border_mask, dtype=bool)
    H, W = b.shape
    padded = np.pad(b, 1)
    deg = sum(padded[1 + dr : 1 + dr + H, 1 + dc : 1 + dc + W].astype(int) for dr, dc in _NEIGHBOURS)
    return int(np.count_nonzero(b & (deg > 2)))
