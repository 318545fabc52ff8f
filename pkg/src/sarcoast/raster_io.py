"""Raster and vector I/O: binary PGM, raw float32 with JSON sidecar, world files,
GeoJSON and CSV coastlines.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .superpixels import SarImage, SuperpixelMap, boundary_mask


class RasterFormatError(ValueError):
    """Malformed or unsupported raster/vector file."""


@dataclass(frozen=True)
class WorldTransform:
    """Pixel-centre affine map ``x = A col + B row + C``, ``y = D col + E row + F``."""

    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    def __post_init__(self):
        if self.A * self.E - self.B * self.D == 0:
            raise RasterFormatError("world transform has a singular linear part")

    @classmethod
    def identity(cls) -> "WorldTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    def apply(self, col, row):
        col = np.asarray(col, dtype=float)
        row = np.asarray(row, dtype=float)
        return self.A * col + self.B * row + self.C, self.D * col + self.E * row + self.F

    def invert(self, x, y):
        det = self.A * self.E - self.B * self.D
        dx = np.asarray(x, dtype=float) - self.C
        dy = np.asarray(y, dtype=float) - self.F
        return (self.E * dx - self.B * dy) / det, (-self.D * dx + self.A * dy) / det


# ---------------------------------------------------------------- PGM


_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pgm(raw: bytes):
    if not raw.startswith(b"P5"):
        raise RasterFormatError("unsupported magic; only binary P5 PGM is read")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PGM_TOKEN.match(raw, pos)
        if m is None:
            raise RasterFormatError("malformed PGM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise RasterFormatError(f"malformed PGM header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if width <= 0 or height <= 0 or not 0 < maxval <= 65535:
        raise RasterFormatError("invalid PGM dimensions or maxval")
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise RasterFormatError("malformed PGM header")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise RasterFormatError(f"truncated PGM payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width), maxval


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Raw integer grid and maxval of a P5 PGM."""
    return _parse_pgm(Path(path).read_bytes())


def write_pgm(path, grid: np.ndarray, maxval: int | None = None) -> None:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("PGM grid must be 2-D")
    if maxval is None:
        maxval = 255 if grid.max(initial=0) <= 255 else 65535
    if np.any(grid < 0) or np.any(grid > maxval):
        raise ValueError("PGM values out of range")
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + grid.astype(dtype).tobytes())


# ---------------------------------------------------------------- raw float32


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_rawf32(path) -> np.ndarray:
    """Little-endian float32 grid described by ``<path>.json`` = ``{"width": W, "height": H}``."""
    path = Path(path)
    try:
        header = json.loads(sidecar_path(path).read_text())
        width, height = int(header["width"]), int(header["height"])
    except (ValueError, KeyError, TypeError) as exc:
        raise RasterFormatError(f"malformed sidecar header: {exc}") from None
    if width <= 0 or height <= 0:
        raise RasterFormatError("sidecar dimensions must be positive")
    raw = path.read_bytes()
    need = width * height * 4
    if len(raw) < need:
        raise RasterFormatError(f"truncated raw payload: {len(raw)} of {need} bytes")
    if len(raw) > need:
        raise RasterFormatError(f"raw payload has {len(raw) - need} trailing bytes")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width)


def write_rawf32(path, grid: np.ndarray, extra: dict | None = None) -> None:
    grid = np.asarray(grid)
    header = {"width": int(grid.shape[1]), "height": int(grid.shape[0])}
    if extra:
        header.update(extra)
    Path(path).write_bytes(grid.astype("<f4").tobytes())
    sidecar_path(path).write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")


def read_raster(path, fmt: str = "pgm", channel_kind: str = "amplitude") -> SarImage:
    """Load a PGM or raw-f32 raster, clamping values below 1e-6 x max to that floor."""
    if fmt == "pgm":
        grid, _ = read_pgm(path)
    elif fmt == "rawf32":
        grid = read_rawf32(path)
    else:
        raise ValueError(f"unknown raster format {fmt!r}")
    grid = grid.astype(np.float64)
    if not np.all(np.isfinite(grid)):
        raise RasterFormatError("raster contains non-finite values")
    if not np.any(grid > 0):
        raise RasterFormatError("raster is all zero (or non-positive)")
    return SarImage.from_array(grid, channel_kind)


# ---------------------------------------------------------------- masks and figures


def write_mask(mask: np.ndarray, path) -> None:
    """P5 PGM with land = 255, water = 0."""
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), 255)


def read_mask(path) -> np.ndarray:
    grid, maxval = read_pgm(path)
    return grid > maxval // 2


def stretch_to_u8(data: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(data)), float(np.max(data))
    if hi <= lo:
        return np.zeros(data.shape, dtype=np.uint8)
    return np.round((data - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_label_visualization(spm: SuperpixelMap, img: SarImage, path) -> None:
    """Min-max stretched image with superpixel-boundary pixels set to 255."""
    out = stretch_to_u8(img.data)
    out[boundary_mask(spm.labels)] = 255
    write_pgm(path, out, 255)


# ---------------------------------------------------------------- world files and coastlines


def read_world_file(path) -> WorldTransform:
    """ESRI world file: six lines A, D, B, E, C, F."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) != 6:
        raise RasterFormatError(f"world file needs 6 lines, found {len(lines)}")
    try:
        a, d, b, e, c, f = (float(x) for x in lines)
    except ValueError as exc:
        raise RasterFormatError(f"non-numeric world file line: {exc}") from None
    return WorldTransform(a, b, c, d, e, f)


def write_world_file(wt: WorldTransform, path) -> None:
    Path(path).write_text("".join(f"{x!r}\n" for x in (wt.A, wt.D, wt.B, wt.E, wt.C, wt.F)))


def _chain_xy(chain, wt):
    rc = np.asarray(chain, dtype=float).reshape(-1, 2)
    if wt is None:
        return rc[:, 1], rc[:, 0]
    return wt.apply(rc[:, 1], rc[:, 0])


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def export_coastline(chains, path, fmt: str = "geojson", wt: WorldTransform | None = None) -> None:
    """Write chains of (row, col) pixels as GeoJSON LineStrings or CSV rows.

    GeoJSON positions are ``(x, y)``: world coordinates when ``wt`` is
    given, otherwise ``x = col`` and ``y = row``. CSV rows are
    ``chain_id, seq, col, row, x, y`` with ``x, y`` equal to ``col, row``
    when no transform is supplied.
    """
    if fmt == "geojson":
        features = []
        for i, chain in enumerate(chains):
            xs, ys = _chain_xy(chain, wt)
            features.append(
                {
                    "type": "Feature",
                    "properties": {"chain_id": i, "n_pixels": len(chain)},
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[_num(x), _num(y)] for x, y in zip(xs, ys)],
                    },
                }
            )
        doc = {
            "type": "FeatureCollection",
            "properties": {
                "coordinates": "world" if wt is not None else "pixel",
                "convention": "x = col, y = row, pixel centres"
                if wt is None
                else "x = A*col + B*row + C, y = D*col + E*row + F, pixel centres",
                "world_transform": None if wt is None else [wt.A, wt.B, wt.C, wt.D, wt.E, wt.F],
            },
            "features": features,
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain_id", "seq", "col", "row", "x", "y"])
            for i, chain in enumerate(chains):
                xs, ys = _chain_xy(chain, wt)
                for j, ((r, c), x, y) in enumerate(zip(chain, xs, ys)):
                    w.writerow([i, j, int(c), int(r), _num(x), _num(y)])
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def read_coastline(path, wt: WorldTransform | None = None) -> list[list[tuple[int, int]]]:
    """Read chains back as (row, col) pixel sequences.

    GeoJSON in world coordinates needs the transform, either passed in or
    stored in the file's ``properties.world_transform``.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        chains: dict[int, list] = {}
        for row in csv.DictReader(text.splitlines()):
            chains.setdefault(int(row["chain_id"]), []).append(
                (int(row["seq"]), int(row["row"]), int(row["col"]))
            )
        return [[(r, c) for _, r, c in sorted(chains[k])] for k in sorted(chains)]
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RasterFormatError(f"not a GeoJSON file: {exc}") from None
    props = doc.get("properties") or {}
    if wt is None and props.get("coordinates") == "world":
        wt = WorldTransform(*props["world_transform"])
    out = []
    for feat in doc.get("features", []):
        xy = np.asarray(feat["geometry"]["coordinates"], dtype=float).reshape(-1, 2)
        if wt is not None:
            col, row = wt.invert(xy[:, 0], xy[:, 1])
        else:
            col, row = xy[:, 0], xy[:, 1]
        out.append([(int(round(r)), int(round(c))) for r, c in zip(row, col)])
    return out


def coastline_sequences(path) -> list[list[tuple[float, float]]]:
    """Raw (x, y) sequences as stored, for cross-format comparison."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        chains: dict[int, list] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                chains.setdefault(int(row["chain_id"]), []).append(
                    (int(row["seq"]), float(row["x"]), float(row["y"]))
                )
        return [[(x, y) for _, x, y in sorted(chains[k])] for k in sorted(chains)]
    doc = json.loads(path.read_text())
    return [[(float(x), float(y)) for x, y in f["geometry"]["coordinates"]] for f in doc["features"]]

