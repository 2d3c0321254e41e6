"""Five-stage measurement pipeline: head, blaze, refinement, scale, measurement.

Segmentation is semi-supervised on a joint graph whose vertices are the
pixels of every dictionary image plus the target pixels; dictionary pixels
carry their labels as fidelity, target pixels start unlabelled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import houghscale as hs
from .features import MODES, combined_features
from .glsolver import SegmentationResult, SolverParams, run_gl, run_mbo
from .imagegrid import (
    BinaryMask,
    ImageGrid,
    LabelField,
    downscale,
    load_image,
    load_label_field,
    to_grayscale,
    upscale_mask,
)
from .measure import (
    HEAD_PRIOR_MM,
    MeasurementReport,
    ScaleEstimate,
    ScalePrior,
    circular_scale,
    convert_measurements,
    iqr_filter,
    region_props,
    scale_prior_from_head,
    scale_stats,
)
from .nystrom import nystrom_decomposition


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    # graph / Nystrom
    sigma2: float = 20.0
    head_sigma2: float = 0.0  # 0 -> use sigma2
    seed: int = 0
    tau: int = 1
    mode: str = "rgb+texture"
    head_mode: str = "rgb"
    landmark_fraction: float = 0.05
    max_landmarks: int = 500
    head_landmarks: int = 200
    # solver
    solver: str = "gl"
    epsilon: float = 0.01
    C: float = 0.0  # 0 -> 3/epsilon + 1
    dt: float = 0.1
    max_iters: int = 500
    tol: float = 1e-6
    tau_mbo: float = 0.005
    K_inner: int = 50
    # pipeline
    downscale_factor: int = 10
    crop_margin: float = 0.05
    refinement_fraction: float = 0.10
    # scale detection
    ruler_type: str = "linear"
    head_prior_mm: float = HEAD_PRIOR_MM
    tick_mm: float = 1.0
    inner_mm: float = 10.0
    outer_mm: float = 30.0
    lambda_tv: float = 10.0
    tv_iters: int = 100
    canny_low: float = 0.1
    canny_high: float = 0.25
    rho_res: float = 1.0
    theta_res_deg: float = 1.0
    acc: float = 3.0
    circle_thresh: float = 0.5

    def __post_init__(self):
        checks = [
            (self.sigma2 > 0, "sigma2 must be positive"),
            (self.head_sigma2 >= 0, "head_sigma2 must be >= 0"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.mode in MODES and self.head_mode in MODES, f"modes must be one of {MODES}"),
            (0 < self.landmark_fraction <= 1, "landmark_fraction must lie in (0, 1]"),
            (self.max_landmarks >= 2 and self.head_landmarks >= 2, "landmark counts must be >= 2"),
            (self.solver in ("gl", "mbo"), "solver must be gl or mbo"),
            (self.epsilon > 0 and self.dt > 0 and self.tau_mbo > 0, "epsilon, dt, tau_mbo must be positive"),
            (self.C >= 0, "C must be >= 0"),
            (self.max_iters >= 1 and self.K_inner >= 1 and self.tol > 0, "invalid iteration settings"),
            (self.downscale_factor >= 1, "downscale_factor must be >= 1"),
            (0 <= self.crop_margin < 1, "crop_margin must lie in [0, 1)"),
            (0 <= self.refinement_fraction <= 1, "refinement_fraction must lie in [0, 1]"),
            (self.ruler_type in ("linear", "circular"), "ruler_type must be linear or circular"),
            (self.head_prior_mm > 0 and self.tick_mm > 0, "head_prior_mm and tick_mm must be positive"),
            (0 < self.inner_mm < self.outer_mm, "need 0 < inner_mm < outer_mm"),
            (self.lambda_tv > 0 and self.tv_iters >= 0, "invalid TV settings"),
            (0 <= self.canny_low < self.canny_high <= 1, "need 0 <= canny_low < canny_high <= 1"),
            (self.rho_res > 0 and 0 < self.theta_res_deg <= 180, "invalid Hough resolution"),
            (self.acc >= 0 and 0 < self.circle_thresh <= 1, "invalid acc / circle_thresh"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def solver_params(self) -> SolverParams:
        return SolverParams(
            epsilon=self.epsilon,
            C=self.C or None,
            dt=self.dt,
            max_iters=self.max_iters,
            tol=self.tol,
            tau_mbo=self.tau_mbo,
            K_inner=self.K_inner,
        )

    def hough_params(self, s_min: float = 7.0, s_max: float = 28.0, obj_max: int = 500, thresh: float = 0.2):
        return hs.HoughParams(s_min, s_max, obj_max, thresh, self.acc, self.rho_res, math.radians(self.theta_res_deg))

    def override(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return dataclasses.replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(name: str, raw: str, kind):
    try:
        if kind is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    kinds = {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(base)}
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _coerce(key, raw, kinds[key])
    return base.override(**values)


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


# ------------------------------------------------------------------ dictionary


@dataclass(frozen=True)
class Dictionary:
    entries: tuple  # of (ImageGrid, LabelField)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty dictionary")
        for img, lab in self.entries:
            if (img.height, img.width) != lab.shape:
                raise ValueError("dictionary image and labels differ in size")
            if not (np.any(lab.labels > 0) and np.any(lab.labels < 0)):
                raise ValueError("every dictionary entry needs both +1 and -1 labels")


def load_dictionary(directory) -> Dictionary:
    """``name.png`` / ``name.ppm`` / ``name.pgm`` paired with ``name.labels.pgm``."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"dictionary directory not found: {d}")
    entries = []
    for img_path in sorted(d.iterdir()):
        if img_path.suffix.lower() not in (".png", ".ppm", ".pgm") or img_path.name.endswith(".labels.pgm"):
            continue
        lab_path = img_path.with_name(img_path.stem + ".labels.pgm")
        if lab_path.exists():
            entries.append((load_image(img_path), load_label_field(lab_path)))
    if not entries:
        raise FileNotFoundError(f"no labelled images in {d}")
    return Dictionary(tuple(entries))


def _downscale_labels(lab: LabelField, factor: int) -> LabelField:
    if factor == 1:
        return lab
    v = lab.labels.astype(np.float64)
    h, w = v.shape
    rows, cols = np.arange(0, h, factor), np.arange(0, w, factor)
    s = np.add.reduceat(np.add.reduceat(v, rows, axis=0), cols, axis=1)
    return LabelField(np.sign(s).astype(np.int8))


# --------------------------------------------------------------------- stages


@dataclass
class Segmentation:
    mask: BinaryMask
    result: SegmentationResult
    n_landmarks: int
    flags: list = field(default_factory=list)


def semi_supervised_segment(
    target: ImageGrid,
    dictionary: Dictionary,
    cfg: PipelineConfig,
    mode: str | None = None,
    n_landmarks: int | None = None,
    sigma2: float | None = None,
) -> Segmentation:
    """Segment ``target`` on the joint dictionary + target graph."""
    if not isinstance(dictionary, Dictionary) or not dictionary.entries:
        raise ValueError("empty dictionary")
    mode = mode or cfg.mode
    try:
        feats = [combined_features(img, cfg.tau, mode).vectors for img, _ in dictionary.entries]
        feats.append(combined_features(target, cfg.tau, mode).vectors)
    except ValueError as exc:
        raise ValueError(f"dictionary/target feature-mode mismatch: {exc}") from exc
    if len({f.shape[1] for f in feats}) != 1:
        raise ValueError("dictionary/target feature-mode mismatch")
    Z = np.vstack(feats)
    labels = np.concatenate(
        [lab.labels.ravel() for _, lab in dictionary.entries] + [np.zeros(target.height * target.width, np.int8)]
    )
    S = Z.shape[0]
    if n_landmarks is None:
        n_landmarks = int(round(cfg.landmark_fraction * S))
    L = int(min(max(n_landmarks, 2), cfg.max_landmarks, S))
    basis = nystrom_decomposition(Z, L, sigma2 or cfg.sigma2, cfg.seed)
    params = cfg.solver_params()
    res = run_gl(basis, labels, params) if cfg.solver == "gl" else run_mbo(basis, labels, params)
    n_t = target.height * target.width
    mask = BinaryMask(res.mask[S - n_t:].reshape(target.height, target.width))
    return Segmentation(mask, res, L, list(res.flags))


def refine(mask: BinaryMask, fraction: float = 0.10, keep: list[int] | None = None) -> BinaryMask:
    """Drop 8-connected components smaller than ``fraction`` of the largest.

    ``keep`` lists component ids (1-based, raster order of first pixel) to
    retain instead, bypassing the size rule.
    """
    bits = np.asarray(mask.bits, dtype=bool)
    if not bits.any():
        raise ValueError("empty mask")
    lab, n = ndimage.label(bits, structure=np.ones((3, 3)))
    sizes = np.bincount(lab.ravel())[1:]
    if keep is not None:
        good = np.zeros(n + 1, dtype=bool)
        for k in keep:
            if not 1 <= k <= n:
                raise ValueError(f"component id {k} out of range 1..{n}")
            good[k] = True
    else:
        good = np.r_[False, sizes >= fraction * sizes.max()]
    return BinaryMask(good[lab])


def largest_component(mask: BinaryMask) -> BinaryMask:
    lab, n = ndimage.label(mask.bits, structure=np.ones((3, 3)))
    if n == 0:
        return mask
    sizes = np.bincount(lab.ravel())[1:]
    return BinaryMask(lab == 1 + int(np.argmax(sizes)))


def crop_box(mask: BinaryMask, margin: float = 0.05) -> tuple[int, int, int, int]:
    """Bounding box (top, left, bottom, right) grown by ``margin`` of its size."""
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise ValueError("empty mask")
    t, b, l, r = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    mh, mw = int(math.ceil(margin * (b - t))), int(math.ceil(margin * (r - l)))
    return (max(0, t - mh), max(0, l - mw), min(mask.height, b + mh), min(mask.width, r + mw))


@dataclass
class HeadDetection:
    mask: BinaryMask  # full resolution, largest component
    box: tuple
    equiv_diameter_px: float
    flags: list


def detect_head(image: ImageGrid, head_dict: Dictionary, cfg: PipelineConfig) -> HeadDetection:
    f = cfg.downscale_factor
    small = downscale(image, f)
    small_dict = Dictionary(tuple((downscale(img, f), _downscale_labels(lab, f)) for img, lab in head_dict.entries))
    seg = semi_supervised_segment(
        small, small_dict, cfg, mode=cfg.head_mode, n_landmarks=cfg.head_landmarks, sigma2=cfg.head_sigma2 or None
    )
    full = upscale_mask(seg.mask, f, image.width, image.height)
    if full.count() == 0:
        raise ValueError("empty head mask")
    # the head is a solid region; interior parts unlike the head dictionary
    # (e.g. a white blaze) would otherwise shrink its equivalent diameter
    head = BinaryMask(ndimage.binary_fill_holes(largest_component(full).bits))
    props = region_props(head)
    return HeadDetection(head, crop_box(head, cfg.crop_margin), props.equiv_diameter_px, seg.flags)


def segment_blaze(crop: ImageGrid, blaze_dict: Dictionary, cfg: PipelineConfig) -> Segmentation:
    seg = semi_supervised_segment(crop, blaze_dict, cfg, mode=cfg.mode)
    if seg.mask.count() < 0.001 * crop.width * crop.height:
        seg.flags.append("near-empty blaze mask")
    return seg


@dataclass
class ScaleDetection:
    scale: ScaleEstimate
    lines: list = field(default_factory=list)
    circles: list = field(default_factory=list)
    spacings: list = field(default_factory=list)
    outliers: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def detect_scale(image: ImageGrid, ruler_type: str, prior: ScalePrior, cfg: PipelineConfig) -> ScaleDetection:
    gray = to_grayscale(image)
    smooth = hs.tv_denoise(gray, cfg.lambda_tv, cfg.tv_iters)
    edges = hs.canny_edges(smooth, cfg.canny_low, cfg.canny_high)
    if edges.count() == 0:
        raise hs.HoughError("no edges: ruler absent")
    if ruler_type == "linear":
        params = cfg.hough_params(prior.s_min, prior.s_max)
        edge_line = hs.longest_line(edges, params)
        notches = hs.detect_ruler_notches(edges, edge_line.theta, params)
        spacings = hs.notch_spacings(notches)
        filt = iqr_filter(spacings)
        flags = ["iqr pass-through: fewer than 4 spacings"] if filt.passthrough else []
        scale = scale_stats(filt.retained, cfg.tick_mm, "linear_ruler", len(filt.outliers))
        return ScaleDetection(scale, [edge_line] + notches, [], spacings.tolist(), filt.outliers.tolist(), flags)
    if ruler_type == "circular":
        ppm = prior.px_per_mm
        r_min = max(2.0, 0.5 * ppm * cfg.inner_mm / 2.0)
        r_max = min(2.0 * ppm * cfg.outer_mm / 2.0, 0.5 * math.hypot(image.height, image.width))
        if not r_min < r_max:
            raise hs.HoughError("radius range from the prior is empty")
        params = cfg.hough_params(obj_max=2, thresh=cfg.circle_thresh)
        circles = hs.hough_circles(edges, r_min, r_max, params, gray=smooth)
        if len(circles) < 2:
            raise hs.HoughError(f"no circle pair found ({len(circles)} circle(s))")
        scale = circular_scale(circles, cfg.inner_mm, cfg.outer_mm)
        return ScaleDetection(scale, [], circles)
    raise ValueError(f"unknown ruler type {ruler_type!r}")


@dataclass
class RunOutput:
    report: MeasurementReport
    head: HeadDetection
    blaze_mask: BinaryMask  # full-image coordinates, refined
    scale: ScaleDetection


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        raise PipelineError(name, str(exc)) from exc


def run_full(
    image,
    head_dict,
    blaze_dict,
    cfg: PipelineConfig = PipelineConfig(),
    keep_components: list[int] | None = None,
) -> RunOutput:
    """Head detection, blaze segmentation, refinement, scale, measurement."""
    if not isinstance(image, ImageGrid):
        image = _stage("load", load_image, image)
    if not isinstance(head_dict, Dictionary):
        head_dict = _stage("load", load_dictionary, head_dict)
    if not isinstance(blaze_dict, Dictionary):
        blaze_dict = _stage("load", load_dictionary, blaze_dict)

    head = _stage("head", detect_head, image, head_dict, cfg)
    t, l, b, r = head.box
    crop = image.crop(t, l, b, r)
    seg = _stage("blaze", segment_blaze, crop, blaze_dict, cfg)
    refined = _stage("refine", refine, seg.mask, cfg.refinement_fraction, keep_components)
    full = np.zeros((image.height, image.width), dtype=bool)
    full[t:b, l:r] = refined.bits
    blaze = BinaryMask(full)

    prior = _stage("scale", scale_prior_from_head, head.equiv_diameter_px, cfg.head_prior_mm, cfg.tick_mm)
    scale = _stage("scale", detect_scale, image, cfg.ruler_type, prior, cfg)
    props = _stage("measure", region_props, blaze)
    meta = {
        "solver": cfg.solver,
        "seed": cfg.seed,
        "parameters": dataclasses.asdict(cfg),
        "head_box": [int(v) for v in head.box],
        "head_equiv_diameter_px": head.equiv_diameter_px,
        "prior_px_per_mm": prior.px_per_mm,
        "blaze_landmarks": seg.n_landmarks,
        "blaze_iterations": seg.result.iterations,
        "blaze_converged": bool(seg.result.converged),
        "area_px": props.area_px,
        "perimeter_px": props.perimeter_px,
        "bbox_px": list(props.bbox),
        "spacings_px": [float(s) for s in scale.spacings],
        "outlier_spacings_px": [float(s) for s in scale.outliers],
        "flags": [str(f) for f in head.flags + seg.flags + scale.flags + list(props.flags)],
    }
    report = convert_measurements(props, scale.scale, meta)
    return RunOutput(report, head, blaze, scale)
