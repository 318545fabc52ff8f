"""Command-line interface: ``sarcoast {segment,extract,synth,eval}``.

Exit codes: 0 success, 1 quality gate failed, 2 usage/config error,
3 I/O error, 4 degenerate input (single class, no coastline).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline, raster_io
from .ggd import GgdParams
from .morphology import OneClassOnly

EXIT_OK = 0
EXIT_GATE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

# argparse dest -> PipelineConfig field
_PIPELINE_FLAGS = {
    "input": "input",
    "format": "format",
    "out_dir": "out_dir",
    "superpixels": "superpixels",
    "alpha": "alpha",
    "max_iters": "max_iters",
    "change_tol": "change_tol",
    "bins": "bins",
    "min_est_pixels": "min_est_pixels",
    "min_separation": "min_separation",
    "seed": "seed",
    "channel": "channel_kind",
    "world_file": "world_file",
    "export": "export",
}


def _ggd_arg(text: str) -> GgdParams:
    try:
        v, kappa, sigma = (float(x) for x in text.split(","))
        return GgdParams(v, kappa, sigma)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected v,kappa,sigma: {exc}") from None


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="input raster")
    p.add_argument("--format", choices=["pgm", "rawf32"])
    p.add_argument("--out-dir")
    p.add_argument("--superpixels", type=int, metavar="K", help="superpixel count (default N/400)")
    p.add_argument("--alpha", type=float, help="Dirichlet concentration (>= 1)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--change-tol", type=float)
    p.add_argument("--bins", type=int, help="histogram bins for the entropy feature")
    p.add_argument("--min-est-pixels", type=int)
    p.add_argument("--min-separation", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--channel", choices=["amplitude", "intensity"])
    p.add_argument("--world-file")
    p.add_argument("--export", choices=["geojson", "csv"])
    p.add_argument("--config", help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarcoast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_pipeline_args(sub.add_parser("segment", help="superpixel segmentation only"))
    _add_pipeline_args(sub.add_parser("extract", help="full coastline extraction"))

    s = sub.add_parser("synth", help="generate a synthetic coastal scene")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--width", type=int, default=256)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--roughness", type=float, default=20.0)
    s.add_argument("--land", type=_ggd_arg, help="land GGD as v,kappa,sigma")
    s.add_argument("--water", type=_ggd_arg, help="water GGD as v,kappa,sigma")
    s.add_argument("--lakes", type=int, default=0)
    s.add_argument("--islets", type=int, default=0)
    s.add_argument("--feature-radius", type=float, default=5.0)

    e = sub.add_parser("eval", help="score a coastline against a truth mask")
    e.add_argument("--input", required=True, help="coastline (.geojson or .csv)")
    e.add_argument("--truth", required=True, help="truth mask PGM (land = 255)")
    e.add_argument("--tol-px", type=float, default=2.0)
    e.add_argument("--f1-threshold", type=float, default=0.9)
    e.add_argument("--world-file")
    e.add_argument("--out-dir")
    return parser


def pipeline_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.from_json(args.config) if args.config else pipeline.PipelineConfig()
    overrides = {
        field: getattr(args, dest)
        for dest, field in _PIPELINE_FLAGS.items()
        if getattr(args, dest, None) is not None
    }
    return dataclasses.replace(cfg, **overrides)


def _run(args) -> int:
    if args.command in ("segment", "extract"):
        cfg = pipeline_config(args)
        cfg.validate()
        if args.command == "segment":
            report = pipeline.cmd_segment(cfg)
        else:
            report = pipeline.cmd_extract(cfg)
        print(json.dumps({k: report[k] for k in report if k != "config"}, sort_keys=True))
        return EXIT_OK

    if args.command == "synth":
        meta = pipeline.cmd_synth(
            args.out_dir,
            args.width,
            args.height,
            args.seed,
            args.roughness,
            args.land,
            args.water,
            args.lakes,
            args.islets,
            args.feature_radius,
        )
        print(json.dumps(meta, sort_keys=True))
        return EXIT_OK

    wt = raster_io.read_world_file(args.world_file) if args.world_file else None
    out_path = None
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        out_path = Path(args.out_dir) / "score.json"
    result = pipeline.cmd_eval(args.input, args.truth, args.tol_px, wt, out_path)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK if result["f1"] >= args.f1_threshold else EXIT_GATE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except OneClassOnly as exc:
        print(f"sarcoast: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (pipeline.ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"sarcoast: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, raster_io.RasterFormatError) as exc:
        print(f"sarcoast: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"sarcoast: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
