"""Debug overlays: mask boundary and detected ruler geometry drawn on the image."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .imagegrid import BinaryMask, ImageGrid, to_bytes


def _rgb(img: ImageGrid) -> Image.Image:
    b = to_bytes(img)
    if b.shape[2] == 1:
        b = np.repeat(b, 3, axis=2)
    return Image.fromarray(b)


def mask_overlay(img: ImageGrid, mask: BinaryMask, path, color=(255, 0, 0)) -> None:
    bits = mask.bits
    edge = bits & ~ndimage.binary_erosion(bits, structure=np.ones((3, 3)))
    out = np.asarray(_rgb(img)).copy()
    out[edge] = color
    Image.fromarray(out).save(path)


def geometry_overlay(img: ImageGrid, lines=(), circles=(), path=None, color=(0, 200, 0)) -> Image.Image:
    im = _rgb(img)
    draw = ImageDraw.Draw(im)
    for ln in lines:
        if ln.endpoints is not None:
            (x0, y0), (x1, y1) = ln.endpoints
            draw.line([(x0, y0), (x1, y1)], fill=color, width=1)
    for c in circles:
        draw.ellipse([c.c2 - c.r, c.c1 - c.r, c.c2 + c.r, c.c1 + c.r], outline=color, width=1)
    if path is not None:
        im.save(path)
    return im
