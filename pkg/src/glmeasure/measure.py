"""Scale statistics, region properties and unit conversion with error propagation.

Quartiles are Tukey hinges (medians of the lower and upper halves, the
median itself excluded for odd n) and standard deviations use the n - 1
denominator; both conventions are written into every report's metadata.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .imagegrid import BinaryMask

HEAD_PRIOR_MM = 15.1
CONVENTIONS = {"quartiles": "tukey_hinges", "sd_denominator": "n-1", "perimeter": "8-chain, diagonal sqrt(2)"}


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleEstimate:
    px_per_mm: float
    sd_px: float
    rsd_percent: float
    n_retained: int
    n_outliers: int
    source: str  # linear_ruler | circular_ruler | head_prior

    def __post_init__(self):
        if not self.px_per_mm > 0:
            raise ValueError("px_per_mm must be positive")


@dataclass(frozen=True)
class ScalePrior:
    px_per_mm: float
    spacing_px: float
    s_min: float
    s_max: float


@dataclass(frozen=True)
class IQRResult:
    retained: np.ndarray
    outliers: np.ndarray
    lower: float
    upper: float
    passthrough: bool = False


@dataclass(frozen=True)
class RegionProps:
    area_px: int
    perimeter_px: float
    equiv_diameter_px: float
    bbox: tuple  # (width, height)
    flags: tuple = ()


@dataclass(frozen=True)
class MeasurementReport:
    scale: ScaleEstimate
    area_mm2: float
    area_err_mm2: float
    perimeter_mm: float
    perimeter_err_mm: float
    width_mm: float
    width_err_mm: float
    height_mm: float
    height_err_mm: float
    equiv_diameter_mm: float
    equiv_diameter_err_mm: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metadata"] = {**CONVENTIONS, **self.metadata}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        rows = [
            ("scale (px/mm)", self.scale.px_per_mm, self.scale.px_per_mm * self.scale.rsd_percent / 100),
            ("area (mm^2)", self.area_mm2, self.area_err_mm2),
            ("perimeter (mm)", self.perimeter_mm, self.perimeter_err_mm),
            ("width (mm)", self.width_mm, self.width_err_mm),
            ("height (mm)", self.height_mm, self.height_err_mm),
            ("equiv. diameter (mm)", self.equiv_diameter_mm, self.equiv_diameter_err_mm),
        ]
        lines = [f"{name:<22s}{val:12.4f} +- {err:.4f}" for name, val, err in rows]
        lines.append(f"{'RSD (%)':<22s}{self.scale.rsd_percent:12.4f}")
        return "\n".join(lines)


def tukey_hinges(values) -> tuple[float, float]:
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n < 2:
        raise MeasureError("need at least 2 values for hinges")
    half = n // 2
    return float(np.median(x[:half])), float(np.median(x[n - half:]))


def iqr_filter(values) -> IQRResult:
    """Drop values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]; input order is kept.

    With fewer than 4 values nothing is removed and ``passthrough`` is set.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 4:
        return IQRResult(v.copy(), np.zeros(0), -np.inf, np.inf, True)
    q1, q3 = tukey_hinges(v)
    spread = q3 - q1
    lo, hi = q1 - 1.5 * spread, q3 + 1.5 * spread
    keep = (v >= lo) & (v <= hi)
    return IQRResult(v[keep], v[~keep], lo, hi, False)


def scale_stats(spacings_px, mm_per_tick: float = 1.0, source: str = "linear_ruler", n_outliers: int = 0) -> ScaleEstimate:
    s = np.asarray(spacings_px, dtype=np.float64).ravel()
    if s.size < 2:
        raise MeasureError("need at least 2 retained spacings")
    if not mm_per_tick > 0:
        raise MeasureError("mm_per_tick must be positive")
    mean = float(s.mean())
    if mean <= 0:
        raise MeasureError("nonpositive mean spacing")
    sd = float(s.std(ddof=1))
    return ScaleEstimate(mean / mm_per_tick, sd, 100.0 * sd / mean, int(s.size), int(n_outliers), source)


# Freeman codes, counter-clockwise from east, as (drow, dcol)
_FREEMAN = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _trace_outer(img: np.ndarray, start: tuple[int, int]) -> float:
    """Length of the outer 8-boundary of the component containing ``start``.

    ``start`` must be its first pixel in raster order and ``img`` zero padded.
    Stops when the first step is about to be repeated.
    """
    p0 = start
    d = 7
    p = p0
    length = 0.0
    first_move = None
    while True:
        s0 = (d + 7) % 8 if d % 2 == 0 else (d + 6) % 8
        for k in range(8):
            nd = (s0 + k) % 8
            q = (p[0] + _FREEMAN[nd][0], p[1] + _FREEMAN[nd][1])
            if img[q]:
                break
        else:
            return 0.0  # isolated pixel
        if first_move is None:
            first_move = (p, nd)
        elif p == first_move[0] and nd == first_move[1]:
            return length
        length += np.sqrt(2.0) if nd % 2 else 1.0
        p, d = q, nd


def region_props(mask: BinaryMask) -> RegionProps:
    """Area, outer-boundary chain length, equivalent diameter and bbox.

    The perimeter sums the outer boundaries of all 8-connected components;
    hole boundaries are not counted.
    """
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    area = int(bits.sum())
    if area == 0:
        raise MeasureError("empty mask")
    padded = np.pad(bits, 1)
    lab, n = ndimage.label(padded, structure=np.ones((3, 3)))
    perim = 0.0
    for sl_idx, sl in enumerate(ndimage.find_objects(lab), start=1):
        comp = lab[sl] == sl_idx
        r, c = np.argwhere(comp)[0]
        start = (int(r + sl[0].start), int(c + sl[1].start))
        perim += _trace_outer(lab == sl_idx if n > 1 else padded, start)
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    bbox = (int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))
    flags = ("degenerate: zero perimeter",) if perim == 0 else ()
    return RegionProps(area, float(perim), float(2.0 * np.sqrt(area / np.pi)), bbox, flags)


def scale_prior_from_head(head_equiv_diam_px: float, prior_mm: float = HEAD_PRIOR_MM, mm_per_tick: float = 1.0) -> ScalePrior:
    """Rough px/mm from the head's equivalent diameter; spacing window (s/2, 2s)."""
    if not (head_equiv_diam_px > 0 and prior_mm > 0 and mm_per_tick > 0):
        raise MeasureError("head diameter, prior and tick spacing must be positive")
    ppm = head_equiv_diam_px / prior_mm
    s = ppm * mm_per_tick
    return ScalePrior(ppm, s, s / 2.0, 2.0 * s)


def convert_measurements(props: RegionProps, scale: ScaleEstimate, metadata: dict | None = None) -> MeasurementReport:
    """px -> mm with first-order error propagation (lengths RSD, areas 2 RSD)."""
    k = scale.px_per_mm
    rel = scale.rsd_percent / 100.0
    area = props.area_px / k**2
    per = props.perimeter_px / k
    w, h = props.bbox[0] / k, props.bbox[1] / k
    eqd = props.equiv_diameter_px / k
    return MeasurementReport(
        scale=scale,
        area_mm2=area,
        area_err_mm2=2.0 * rel * area,
        perimeter_mm=per,
        perimeter_err_mm=rel * per,
        width_mm=w,
        width_err_mm=rel * w,
        height_mm=h,
        height_err_mm=rel * h,
        equiv_diameter_mm=eqd,
        equiv_diameter_err_mm=rel * eqd,
        metadata=dict(metadata or {}),
    )


def circular_scale(circles, inner_mm: float = 10.0, outer_mm: float = 30.0, max_offset: float = 2.0) -> ScaleEstimate:
    """Scale from a concentric pair of circles with known diameters.

    Each circle implies ``2 r / diameter_mm`` px/mm; the estimate is their
    mean and the SD their sample SD (reported in px per mm of ruler).
    """
    if len(circles) != 2:
        raise MeasureError(f"need exactly 2 circles, got {len(circles)}")
    inner, outer = sorted(circles, key=lambda c: c.r)
    off = float(np.hypot(inner.c1 - outer.c1, inner.c2 - outer.c2))
    if off > max_offset:
        raise MeasureError(f"circles are not concentric (centres {off:.1f} px apart)")
    implied = np.array([2.0 * inner.r / inner_mm, 2.0 * outer.r / outer_mm])
    mean = float(implied.mean())
    sd = float(implied.std(ddof=1))
    return ScaleEstimate(mean, sd, 100.0 * sd / mean, 2, 0, "circular_ruler")
