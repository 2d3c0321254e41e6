"""Synthetic rasters with known ground truth.

Used by the test-suite and the experiment scripts: two-class colour/texture
images, ruler and concentric-circle rasters, and complete measurement
scenes (head, blaze, ruler) that can be rendered at any resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagegrid import BinaryMask, ImageGrid, LabelField, save_image, save_label_field

FOREGROUND_RGB = (0.85, 0.80, 0.70)
BACKGROUND_RGB = (0.20, 0.18, 0.22)


def _ellipse(h, w, cy, cx, ry, rx, angle=0.0, supersample=1):
    """Fractional coverage of a rotated ellipse on an h x w grid."""
    s = supersample
    off = (np.arange(s) + 0.5) / s - 0.5
    yy = (np.arange(h)[:, None] + off[None, :]).ravel()
    xx = (np.arange(w)[:, None] + off[None, :]).ravel()
    Y, X = np.meshgrid(yy, xx, indexing="ij")
    c, sn = np.cos(angle), np.sin(angle)
    u = (X - cx) * c + (Y - cy) * sn
    v = -(X - cx) * sn + (Y - cy) * c
    inside = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    return inside.reshape(h, s, w, s).mean(axis=(1, 3))


def two_class_image(size: int = 64, seed: int = 0, noise_var: float = 0.0):
    """Textured bright blob on a dark, differently textured background.

    Returns ``(image, truth)`` where ``truth`` is the blob mask.
    """
    rng = np.random.default_rng(seed)
    h = w = size
    cy, cx = size * rng.uniform(0.42, 0.58, 2)
    ry, rx = size * rng.uniform(0.22, 0.3, 2)
    cover = _ellipse(h, w, cy, cx, ry, rx, rng.uniform(0, np.pi))
    truth = cover >= 0.5
    yy, xx = np.mgrid[0:h, 0:w]
    phase = ndimage.gaussian_filter(rng.standard_normal((h, w)), 2.0) * 6.0
    stripes = 0.08 * np.sin(2 * np.pi * (xx + yy) / 4.0 + phase)
    stripes += 0.03 * rng.standard_normal((h, w))
    speckle = 0.06 * ndimage.gaussian_filter(rng.standard_normal((h, w)), 0.7)
    fg = np.array(FOREGROUND_RGB)[None, None, :] + stripes[:, :, None]
    bg = np.array(BACKGROUND_RGB)[None, None, :] + speckle[:, :, None]
    img = np.where(truth[:, :, None], fg, bg)
    if noise_var > 0:
        img = img + rng.normal(0.0, np.sqrt(noise_var), img.shape)
    return ImageGrid(np.clip(img, 0.0, 1.0)), BinaryMask(truth)


def sample_labels(truth: BinaryMask, fraction: float, seed: int = 0) -> LabelField:
    """Label a random ``fraction`` of pixels with their true class (+1/-1)."""
    rng = np.random.default_rng(seed)
    n = truth.bits.size
    k = max(2, int(round(fraction * n)))
    idx = rng.choice(n, size=k, replace=False)
    labels = np.zeros(n, dtype=np.int8)
    labels[idx] = np.where(truth.bits.ravel()[idx], 1, -1)
    return LabelField(labels.reshape(truth.shape))


def _render_bars(h, w, bars, ss=4):
    """Rasterise thick line segments with supersampling.

    ``bars`` holds (x0, y0, x1, y1, half_width) tuples in pixel units.
    Returns fractional coverage in [0, 1].
    """
    off = (np.arange(ss) + 0.5) / ss - 0.5
    out = np.zeros((h, w))
    for x0, y0, x1, y1, hw in bars:
        pad = hw + 2
        r0 = int(max(0, np.floor(min(y0, y1) - pad)))
        r1 = int(min(h, np.ceil(max(y0, y1) + pad) + 1))
        c0 = int(max(0, np.floor(min(x0, x1) - pad)))
        c1 = int(min(w, np.ceil(max(x0, x1) + pad) + 1))
        if r0 >= r1 or c0 >= c1:
            continue
        ys = (np.arange(r0, r1)[:, None] + off).ravel()
        xs = (np.arange(c0, c1)[:, None] + off).ravel()
        Y, X = np.meshgrid(ys, xs, indexing="ij")
        dx, dy = x1 - x0, y1 - y0
        L2 = dx * dx + dy * dy
        t = np.clip(((X - x0) * dx + (Y - y0) * dy) / L2, 0.0, 1.0)
        dist = np.hypot(X - (x0 + t * dx), Y - (y0 + t * dy))
        cov = (dist <= hw).reshape(r1 - r0, ss, c1 - c0, ss).mean(axis=(1, 3))
        out[r0:r1, c0:c1] = np.maximum(out[r0:r1, c0:c1], cov)
    return out


@dataclass(frozen=True)
class RulerSpec:
    spacing: float = 14.0
    n_ticks: int = 20
    angle_deg: float = 3.0
    tick_length: float = 40.0
    tick_half_width: float = 0.9
    body_height: float = 90.0
    blur: float = 0.8
    spurious_offset: float | None = None  # extra tick-like line, px after first tick


def ruler_raster(width=1000, height=400, spec: RulerSpec = RulerSpec(), seed=0,
                 origin=None, noise_sd=0.01):
    """Light ruler body with dark ticks on a mid-grey background.

    The ruler's long edge runs along x (rotated by ``angle_deg``); ticks are
    perpendicular to it and start at the edge. Returns ``(image, tick_xs)``
    with tick positions measured along the ruler axis.
    """
    rng = np.random.default_rng(seed)
    a = np.deg2rad(spec.angle_deg)
    ux, uy = np.cos(a), np.sin(a)  # along the ruler
    nx, ny = -np.sin(a), np.cos(a)  # into the ruler body
    span = spec.spacing * (spec.n_ticks - 1)
    length = span + 8 * spec.spacing
    if origin is None:
        origin = ((width - length * ux) / 2.0, height / 2.0 - spec.body_height / 2.0)
    ox, oy = origin
    corners = np.array([[0, 0], [length, 0], [length, spec.body_height], [0, spec.body_height]])
    cx = ox + corners[:, 0] * ux + corners[:, 1] * nx
    cy = oy + corners[:, 0] * uy + corners[:, 1] * ny
    from matplotlib.path import Path as MplPath

    ss = 4
    off = (np.arange(ss) + 0.5) / ss - 0.5
    ys = (np.arange(height)[:, None] + off).ravel()
    xs = (np.arange(width)[:, None] + off).ravel()
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    inside = MplPath(np.c_[cx, cy]).contains_points(np.c_[X.ravel(), Y.ravel()])
    body = inside.reshape(height, ss, width, ss).mean(axis=(1, 3))
    start = 4 * spec.spacing
    positions = start + spec.spacing * np.arange(spec.n_ticks)
    bars = []
    for k, t in enumerate(positions):
        tl = spec.tick_length * (1.5 if k % 5 == 0 else 1.0)
        bx, by = ox + t * ux, oy + t * uy
        bars.append((bx, by, bx + tl * nx, by + tl * ny, spec.tick_half_width))
    if spec.spurious_offset is not None:
        t = start + spec.spurious_offset
        bx, by = ox + t * ux + 50 * nx, oy + t * uy + 50 * ny
        bars.append((bx, by, bx + 30 * nx, by + 30 * ny, spec.tick_half_width))
    ticks = _render_bars(height, width, bars)
    img = 0.35 + 0.55 * body - 0.75 * ticks * body
    if spec.blur > 0:
        img = ndimage.gaussian_filter(img, spec.blur)
    img = img + rng.normal(0.0, noise_sd, img.shape)
    return ImageGrid(np.clip(img, 0.0, 1.0)), positions


def circles_raster(size=240, center=(120.0, 118.0), radii=(30.0, 90.0), half_width=1.0,
                   blur=0.6, seed=0):
    """Dark concentric rings on a light background; returns a gray ImageGrid."""
    rng = np.random.default_rng(seed)
    ss = 4
    off = (np.arange(ss) + 0.5) / ss - 0.5
    ys = (np.arange(size)[:, None] + off).ravel()
    Y, X = np.meshgrid(ys, ys, indexing="ij")
    r = np.hypot(X - center[1], Y - center[0])
    ring = np.zeros_like(r, dtype=bool)
    for rad in radii:
        ring |= np.abs(r - rad) <= half_width
    cov = ring.reshape(size, ss, size, ss).mean(axis=(1, 3))
    img = 0.9 - 0.7 * cov
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur)
    img = img + rng.normal(0.0, 0.01, img.shape)
    return ImageGrid(np.clip(img, 0.0, 1.0))


def midpoint_circle(h, w, cy, cx, r) -> np.ndarray:
    """Boolean raster of a circle outline by the midpoint algorithm."""
    out = np.zeros((h, w), dtype=bool)
    x, y, err = r, 0, 1 - r
    while x >= y:
        for dx, dy in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            rr, cc = cy + dy, cx + dx
            if 0 <= rr < h and 0 <= cc < w:
                out[rr, cc] = True
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    return out


@dataclass(frozen=True)
class Scene:
    image: ImageGrid
    head: BinaryMask
    blaze: BinaryMask
    px_per_mm: float
    blaze_area_mm2: float  # analytic ellipse area


def _smooth_noise(rng, shape, sigma_px, amp):
    return amp * ndimage.gaussian_filter(rng.standard_normal(shape), max(sigma_px, 0.3))


def measurement_scene(scale: float = 1.0, seed: int = 0, px_per_mm: float = 5.0, jitter: bool = False) -> Scene:
    """Bird-head stand-in with a white textured blaze and a linear ruler.

    Geometry is fixed in millimetres (canvas 100 x 70 mm, head diameter
    15.1 mm, blaze ellipse 8 x 5 mm, ruler with 1 mm ticks) and rendered at
    ``px_per_mm * scale``, so renders at different scales show the same
    object. ``jitter`` moves head and blaze by a few mm (for dictionaries).
    """
    rng = np.random.default_rng(seed)
    p = px_per_mm * scale
    H, W = int(round(70 * p)), int(round(100 * p))
    hy, hx = 28.0, 32.0
    by, bx, b_ang = hy - 2.5, hx + 1.0, np.deg2rad(20.0)
    if jitter:
        hy, hx = hy + rng.uniform(-3, 3), hx + rng.uniform(-6, 6)
        by, bx = hy - 2.5 + rng.uniform(-1, 1), hx + 1.0 + rng.uniform(-1, 1)
        b_ang += rng.uniform(-0.4, 0.4)
    head_cov = _ellipse(H, W, hy * p, hx * p, 7.55 * p, 7.55 * p, 0.0, supersample=4)
    blaze_cov = _ellipse(H, W, by * p, bx * p, 2.5 * p, 4.0 * p, b_ang, supersample=4) * head_cov
    yy, xx = np.mgrid[0:H, 0:W] / p  # mm
    bg = np.array([0.42, 0.52, 0.33])[None, None, :] + _smooth_noise(rng, (H, W), 1.5 * p, 0.04)[:, :, None]
    head = np.array([0.13, 0.11, 0.10])[None, None, :] + _smooth_noise(rng, (H, W), 0.3 * p, 0.03)[:, :, None]
    phase = _smooth_noise(rng, (H, W), 1.0 * p, 1.5)
    stripes = 0.07 * np.sin(2 * np.pi * (xx * np.cos(0.5) + yy * np.sin(0.5)) / 1.2 + phase)
    blaze = np.array([0.90, 0.88, 0.84])[None, None, :] + stripes[:, :, None]
    img = bg * (1 - head_cov[:, :, None]) + head * head_cov[:, :, None]
    img = img * (1 - blaze_cov[:, :, None]) + blaze * blaze_cov[:, :, None]

    # ruler: body 80 x 12 mm rotated by 2 degrees, ticks every mm from its top edge
    a = np.deg2rad(2.0)
    ux, uy = np.cos(a), np.sin(a)
    nx, ny = -np.sin(a), np.cos(a)
    ox, oy = 10.0, 50.0
    from matplotlib.path import Path as MplPath

    corners = np.array([[0, 0], [80, 0], [80, 12], [0, 12]], dtype=float)
    cx = (ox + corners[:, 0] * ux + corners[:, 1] * nx) * p
    cy = (oy + corners[:, 0] * uy + corners[:, 1] * ny) * p
    ss = 4
    off = (np.arange(ss) + 0.5) / ss - 0.5
    Y, X = np.meshgrid((np.arange(H)[:, None] + off).ravel(), (np.arange(W)[:, None] + off).ravel(), indexing="ij")
    body = MplPath(np.c_[cx, cy]).contains_points(np.c_[X.ravel(), Y.ravel()]).reshape(H, ss, W, ss).mean(axis=(1, 3))
    bars = []
    for k in range(71):
        t = 5.0 + k
        tl = 5.0 if k % 5 == 0 else 3.0
        bx0, by0 = ox + t * ux, oy + t * uy
        bars.append((bx0 * p, by0 * p, (bx0 + tl * nx) * p, (by0 + tl * ny) * p, 0.12 * p))
    ticks = _render_bars(H, W, bars) * body
    ruler = 0.93 - 0.8 * ticks
    img = img * (1 - body[:, :, None]) + ruler[:, :, None] * body[:, :, None]
    img = img + rng.normal(0.0, 0.015, img.shape)
    return Scene(
        ImageGrid(np.clip(img, 0.0, 1.0)),
        BinaryMask(head_cov >= 0.5),
        BinaryMask(blaze_cov >= 0.5),
        p,
        float(np.pi * 2.5 * 4.0),
    )


def scene_labels(scene: Scene, target: str = "head") -> LabelField:
    """Fully labelled field (+1 inside the target region, -1 elsewhere)."""
    bits = (scene.head if target == "head" else scene.blaze).bits
    return LabelField(np.where(bits, 1, -1).astype(np.int8))


SCENE_CONFIG = """\
# settings used for the synthetic measurement scenes
sigma2 = 1.0
head_sigma2 = 0.05
epsilon = 1.0
mode = rgb+texture
head_mode = rgb
max_landmarks = 300
head_landmarks = 200
downscale_factor = 5
lambda_tv = 100
seed = 0
"""


def write_scene_bundle(root, scale: float = 1.0, seed: int = 0, n_dict: int = 1):
    """Write target image, head/blaze dictionaries and a config under ``root``.

    Dictionary scenes use seeds ``seed + 1 ...`` with jittered geometry; the
    blaze dictionary holds head crops (bbox + 5%) labelled for the blaze.
    Returns ``(image_path, head_dir, blaze_dir, config_path, scene)``.
    """
    from pathlib import Path

    root = Path(root)
    head_dir, blaze_dir = root / "head_dict", root / "blaze_dict"
    head_dir.mkdir(parents=True, exist_ok=True)
    blaze_dir.mkdir(parents=True, exist_ok=True)
    scene = measurement_scene(scale, seed)
    save_image(scene.image, root / "scene.png")
    for k in range(n_dict):
        d = measurement_scene(scale, seed + 1 + k, jitter=True)
        save_image(d.image, head_dir / f"d{k}.png")
        save_label_field(scene_labels(d, "head"), head_dir / f"d{k}.labels.pgm")
        rows = np.flatnonzero(d.head.bits.any(axis=1))
        cols = np.flatnonzero(d.head.bits.any(axis=0))
        mh = int(np.ceil(0.05 * (rows[-1] + 1 - rows[0])))
        mw = int(np.ceil(0.05 * (cols[-1] + 1 - cols[0])))
        t, b = max(0, rows[0] - mh), min(d.head.height, rows[-1] + 1 + mh)
        l, r = max(0, cols[0] - mw), min(d.head.width, cols[-1] + 1 + mw)
        save_image(d.image.crop(t, l, b, r), blaze_dir / f"d{k}.png")
        save_label_field(LabelField(scene_labels(d, "blaze").labels[t:b, l:r]), blaze_dir / f"d{k}.labels.pgm")
    cfg = root / "config.txt"
    cfg.write_text(SCENE_CONFIG)
    return root / "scene.png", head_dir, blaze_dir, cfg, scene
