"""End-to-end coastline extraction and the artifact layout used by the CLI."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features, morphology, raster_io
from .features import DegenerateClustering
from .morphology import OneClassOnly
from .superpixels import EngineConfig, SarImage, SuperpixelMap, segment

log = logging.getLogger(__name__)

MIN_SIDE = 16
# Discarded components above this share of the image trigger a warning.
LARGE_COMPONENT_SHARE = 0.05


class ConfigError(ValueError):
    pass


def default_superpixels(n_pixels: int) -> int:
    """About one superpixel per 20x20 pixels, clamped to [16, 5000]."""
    return int(min(max(n_pixels // 400, 16), 5000, n_pixels // 9))


@dataclass
class PipelineConfig:
    input: str | None = None
    format: str = "pgm"
    out_dir: str = "out"
    superpixels: int | None = None
    alpha: float = 1.5
    max_iters: int = 100
    change_tol: float = 1e-4
    bins: int = features.DEFAULT_BINS
    min_est_pixels: int = 30
    min_separation: float = features.MIN_SEPARATION
    seed: int = 0
    channel_kind: str = "amplitude"
    world_file: str | None = None
    export: str = "geojson"

    def validate(self) -> None:
        if self.format not in ("pgm", "rawf32"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.export not in ("geojson", "csv"):
            raise ConfigError(f"unknown export format {self.export!r}")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")
        if self.channel_kind not in ("amplitude", "intensity"):
            raise ConfigError(f"unknown channel kind {self.channel_kind!r}")
        self.engine_config(10**9)

    def engine_config(self, n_pixels: int) -> EngineConfig:
        K = self.superpixels if self.superpixels is not None else default_superpixels(n_pixels)
        try:
            return EngineConfig(
                K=K,
                alpha=self.alpha,
                max_iters=self.max_iters,
                change_tol=self.change_tol,
                min_est_pixels=self.min_est_pixels,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ExtractResult:
    spm: SuperpixelMap
    rows: list
    assignment: features.ClassAssignment
    prefill: np.ndarray
    fill: morphology.FillResult
    coastline: morphology.Coastline
    timings: dict


@contextmanager
def _timed(stages: dict, name: str):
    t0 = time.perf_counter()
    yield
    stages[name] = time.perf_counter() - t0


def run_segmentation(img: SarImage, cfg: PipelineConfig) -> SuperpixelMap:
    ecfg = cfg.engine_config(img.n_pixels)
    if ecfg.K > img.n_pixels // 9:
        raise ConfigError(f"K={ecfg.K} too large for a {img.width}x{img.height} image")
    return segment(img, ecfg)


def extract(img: SarImage, cfg: PipelineConfig) -> ExtractResult:
    """Segment, classify superpixels, fill voids and trace the coastline.

    Raises ``OneClassOnly`` when the classification has no usable land/water
    split.
    """
    stages: dict = {}
    with _timed(stages, "segment"):
        spm = run_segmentation(img, cfg)
    with _timed(stages, "features"):
        rows = features.compute_features(img, spm, cfg.bins)
    with _timed(stages, "cluster"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateClustering)
            ca = features.cluster_two(rows, cfg.min_separation)
        if ca.degenerate:
            raise OneClassOnly(
                f"no land/water split: clustering explains {ca.separation:.2f} of feature variance"
            )
        prefill = features.build_binary_mask(spm, ca)
    with _timed(stages, "fill"):
        fill = morphology.fill_voids(prefill)
        discarded = prefill != fill.mask
        if discarded.any():
            share = _largest_flipped_share(prefill, discarded)
            if share > LARGE_COMPONENT_SHARE:
                log.warning("void filling discarded a component covering %.1f%% of the image", 100 * share)
    with _timed(stages, "border"):
        coast = morphology.extract_coastline(fill.mask)
    return ExtractResult(spm, rows, ca, prefill, fill, coast, stages)


def _largest_flipped_share(prefill, discarded) -> float:
    best = 0
    for cls, conn in ((True, morphology.LAND_CONNECTIVITY), (False, morphology.WATER_CONNECTIVITY)):
        lab, _ = morphology.label_components(prefill, cls, conn)
        hit = lab[discarded & (lab > 0)]
        if hit.size:
            best = max(best, int(np.bincount(hit).max()))
    return best / prefill.size


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _segment_report(spm: SuperpixelMap, cfg: PipelineConfig) -> dict:
    return {
        "config": dataclasses.asdict(cfg),
        "K": spm.K,
        "active_superpixels": int(len(spm.active())),
        "iterations": spm.iterations_run,
        "changed_fraction_trace": [float(x) for x in spm.changed_trace],
        "image": {"width": int(spm.labels.shape[1]), "height": int(spm.labels.shape[0])},
    }


def load_input(cfg: PipelineConfig) -> SarImage:
    if cfg.input is None:
        raise ConfigError("no input raster given")
    img = raster_io.read_raster(cfg.input, cfg.format, cfg.channel_kind)
    if img.width < MIN_SIDE or img.height < MIN_SIDE:
        raise raster_io.RasterFormatError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}")
    return img


def write_segmentation(out: Path, spm: SuperpixelMap, img: SarImage) -> None:
    raster_io.write_rawf32(out / "labels.f32", spm.labels.astype(np.float32), {"K": spm.K})
    raster_io.write_label_visualization(spm, img, out / "segmentation.pgm")


def cmd_segment(cfg: PipelineConfig) -> dict:
    """Write ``labels.f32``, ``segmentation.pgm``, ``report.json`` and ``timings.json``."""
    cfg.validate()
    img = load_input(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    spm = run_segmentation(img, cfg)
    elapsed = time.perf_counter() - t0
    write_segmentation(out, spm, img)
    report = _segment_report(spm, cfg)
    _dump_json(report, out / "report.json")
    _dump_json({"segment": elapsed}, out / "timings.json")
    return report


def cmd_extract(cfg: PipelineConfig) -> dict:
    """Full chain; writes labels, pre-fill and filled masks, coastline and report."""
    cfg.validate()
    img = load_input(cfg)
    wt = raster_io.read_world_file(cfg.world_file) if cfg.world_file else None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = extract(img, cfg)

    write_segmentation(out, res.spm, img)
    features.write_features_csv(res.rows, out / "features.csv")
    raster_io.write_mask(res.prefill, out / "mask_prefill.pgm")
    raster_io.write_mask(res.fill.mask, out / "mask_filled.pgm")
    coast_path = out / ("coastline.geojson" if cfg.export == "geojson" else "coastline.csv")
    raster_io.export_coastline(res.coastline.chains, coast_path, cfg.export, wt)

    report = _segment_report(res.spm, cfg)
    classes = list(res.assignment.classes.values())
    report.update(
        {
            "cluster_separation": res.assignment.separation,
            "water_superpixels": classes.count(features.WATER),
            "land_superpixels": classes.count(features.LAND),
            "components_before_fill": res.fill.components_before,
            "components_after_fill": res.fill.components_after,
            "fill_passes": res.fill.passes,
            "coast_pixels": int(res.coastline.border_mask.sum()),
            "chains": len(res.coastline.chains),
            "junctions": morphology.junction_count(res.coastline.border_mask),
            "coastline": coast_path.name,
        }
    )
    _dump_json(report, out / "report.json")
    _dump_json(res.timings, out / "timings.json")
    return report


def cmd_synth(
    out_dir,
    width: int = 256,
    height: int = 256,
    seed: int = 0,
    roughness: float = 20.0,
    land=None,
    water=None,
    n_lakes: int = 0,
    n_islets: int = 0,
    feature_radius: float = 5.0,
) -> dict:
    """Write ``scene.f32`` (+ sidecar), ``truth_mask.pgm``, ``coast_mask.pgm`` and ``scene.json``."""
    from . import synth

    scene = synth.gen_coast_scene(
        width,
        height,
        seed,
        land_params=land or synth.DEFAULT_LAND,
        water_params=water or synth.DEFAULT_WATER,
        roughness=roughness,
        n_lakes=n_lakes,
        n_islets=n_islets,
        feature_radius=feature_radius,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raster_io.write_rawf32(out / "scene.f32", scene.image.data)
    raster_io.write_mask(scene.truth_mask, out / "truth_mask.pgm")
    raster_io.write_mask(scene.coast_mask, out / "coast_mask.pgm")
    _dump_json(scene.meta, out / "scene.json")
    return scene.meta


def cmd_eval(coastline_path, truth_mask_path, tol: float = 2.0, wt=None, out_path=None) -> dict:
    """Score an exported coastline against the interface of a truth mask."""
    from . import synth

    chains = raster_io.read_coastline(coastline_path, wt)
    extracted = [p for chain in chains for p in chain]
    truth = synth.interface_pixels(raster_io.read_mask(truth_mask_path))
    score = synth.boundary_score(np.asarray(extracted, dtype=float).reshape(-1, 2), truth, tol)
    result = score.as_dict()
    result["tol_px"] = tol
    if out_path is not None:
        _dump_json(result, out_path)
    return result
