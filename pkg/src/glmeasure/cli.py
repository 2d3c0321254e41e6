"""Command-line entry point: ``glmeasure {run,segment,scale,measure}``.

Exit codes: 0 success, 2 stage failure, 3 invalid configuration.
``GLMEASURE_THREADS`` caps the BLAS/OpenMP worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

from . import houghscale as hs
from .imagegrid import ImageFormatError, load_image, load_mask, save_mask
from .measure import MeasureError, ScaleEstimate, convert_measurements, region_props, scale_prior_from_head
from .nystrom import NystromError
from .pipeline import (
    ConfigError,
    PipelineConfig,
    PipelineError,
    detect_head,
    detect_scale,
    load_config,
    load_dictionary,
    refine,
    run_full,
    semi_supervised_segment,
)

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 2, 3
STAGE_ERRORS = (PipelineError, hs.HoughError, MeasureError, NystromError, ImageFormatError, OSError, ValueError)


def _thread_limit():
    raw = os.environ.get("GLMEASURE_THREADS")
    if raw is None:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GLMEASURE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("GLMEASURE_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    return cfg.override(
        solver=getattr(args, "solver", None),
        seed=getattr(args, "seed", None),
        ruler_type=getattr(args, "ruler", None),
        mode=getattr(args, "mode", None),
    )


def _emit(payload: dict, report: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if report:
        Path(report).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    keep = [int(k) for k in args.keep_components.split(",")] if args.keep_components else None
    out = run_full(args.image, args.head_dict, args.blaze_dict, cfg, keep_components=keep)
    if args.report:
        Path(args.report).write_text(out.report.to_json())
        print(out.report.table())
    else:
        sys.stdout.write(out.report.to_json())
    if args.overlay_dir:
        from .overlay import geometry_overlay, mask_overlay

        d = Path(args.overlay_dir)
        d.mkdir(parents=True, exist_ok=True)
        img = load_image(args.image)
        mask_overlay(img, out.blaze_mask, d / "blaze_overlay.png")
        mask_overlay(img, out.head.mask, d / "head_overlay.png", color=(0, 128, 255))
        geometry_overlay(img, out.scale.lines, out.scale.circles, d / "ruler_overlay.png")
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = _config(args)
    img = load_image(args.image)
    dictionary = load_dictionary(args.dict)
    seg = semi_supervised_segment(img, dictionary, cfg)
    mask = refine(seg.mask, cfg.refinement_fraction) if seg.mask.count() else seg.mask
    save_mask(mask, args.out)
    _emit(
        {
            "mask": str(args.out),
            "pixels": mask.count(),
            "iterations": seg.result.iterations,
            "converged": bool(seg.result.converged),
            "landmarks": seg.n_landmarks,
            "flags": [str(f) for f in seg.flags],
        },
        args.report,
    )
    return EXIT_OK


def cmd_scale(args) -> int:
    cfg = _config(args)
    img = load_image(args.image)
    if args.px_per_mm_prior:
        prior = scale_prior_from_head(args.px_per_mm_prior * cfg.head_prior_mm, cfg.head_prior_mm, cfg.tick_mm)
    elif args.head_dict:
        head = detect_head(img, load_dictionary(args.head_dict), cfg)
        prior = scale_prior_from_head(head.equiv_diameter_px, cfg.head_prior_mm, cfg.tick_mm)
    else:
        raise ConfigError("scale needs --head-dict or --px-per-mm-prior")
    det = detect_scale(img, cfg.ruler_type, prior, cfg)
    _emit(
        {
            "scale": det.scale.__dict__,
            "prior_px_per_mm": prior.px_per_mm,
            "spacings_px": [float(s) for s in det.spacings],
            "outlier_spacings_px": [float(s) for s in det.outliers],
            "circles": [c.__dict__ for c in det.circles],
            "flags": det.flags,
        },
        args.report,
    )
    return EXIT_OK


def cmd_measure(args) -> int:
    mask = load_mask(args.mask)
    if args.scale_report:
        data = json.loads(Path(args.scale_report).read_text())
        scale = ScaleEstimate(**data["scale"])
    elif args.px_per_mm:
        scale = ScaleEstimate(args.px_per_mm, args.rsd * args.px_per_mm / 100.0, args.rsd, 0, 0, "manual")
    else:
        raise ConfigError("measure needs --scale-report or --px-per-mm")
    report = convert_measurements(region_props(mask), scale)
    if args.report:
        Path(args.report).write_text(report.to_json())
        print(report.table())
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glmeasure", description="Graph GL/MBO segmentation and ruler-based measurement.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="flat key=value config file")
        sp.add_argument("--solver", choices=("gl", "mbo"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--report", help="write the JSON report here instead of stdout")

    r = sub.add_parser("run", help="full pipeline: head, blaze, refinement, scale, measurement")
    r.add_argument("--image", required=True)
    r.add_argument("--head-dict", required=True)
    r.add_argument("--blaze-dict", required=True)
    r.add_argument("--ruler", choices=("linear", "circular"), required=True)
    r.add_argument("--keep-components", help="comma-separated component ids to keep in refinement")
    r.add_argument("--overlay-dir", help="write overlay PNGs here")
    common(r, config_required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("segment", help="semi-supervised segmentation of an image from a dictionary")
    s.add_argument("--image", required=True)
    s.add_argument("--dict", required=True)
    s.add_argument("--mode", choices=("gray", "rgb", "texture", "rgb+texture"))
    s.add_argument("--out", required=True, help="output mask (PGM)")
    common(s)
    s.set_defaults(func=cmd_segment)

    c = sub.add_parser("scale", help="ruler detection and px/mm estimate")
    c.add_argument("--image", required=True)
    c.add_argument("--ruler", choices=("linear", "circular"), required=True)
    c.add_argument("--head-dict", help="dictionary for the head-size prior")
    c.add_argument("--px-per-mm-prior", type=float, help="rough px/mm instead of the head prior")
    common(c)
    c.set_defaults(func=cmd_scale)

    m = sub.add_parser("measure", help="convert a mask to mm given a scale")
    m.add_argument("--mask", required=True)
    m.add_argument("--scale-report", help="JSON from 'glmeasure scale'")
    m.add_argument("--px-per-mm", type=float)
    m.add_argument("--rsd", type=float, default=0.0, help="RSD in percent for --px-per-mm")
    m.add_argument("--report")
    m.set_defaults(func=cmd_measure)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return args.func(args)
    except ConfigError as exc:
        print(f"glmeasure: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except STAGE_ERRORS as exc:
        print(f"glmeasure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
