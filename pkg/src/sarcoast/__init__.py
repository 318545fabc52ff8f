"""Coastline extraction from single-channel SAR rasters with MISP-GGD superpixels."""

from .ggd import EstimationFailed, GgdParams, estimate_ggd, ggd_log_pdf, ggd_pdf, ggd_sample
from .morphology import OneClassOnly
from .pipeline import PipelineConfig, extract
from .superpixels import EngineConfig, SarImage, SuperpixelMap, segment

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "EstimationFailed",
    "GgdParams",
    "OneClassOnly",
    "PipelineConfig",
    "SarImage",
    "SuperpixelMap",
    "estimate_ggd",
    "extract",
    "ggd_log_pdf",
    "ggd_pdf",
    "ggd_sample",
    "segment",
]
