"""Raster containers, image/mask I/O and resolution changes.

Images are held as float64 arrays of shape ``(height, width, channels)`` with
values in [0, 1]. Label fields use the byte codec 0 -> -1, 128 -> 0,
255 -> +1; binary masks use 0 -> False, 255 -> True.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

SUPPORTED_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or malformed raster files."""


@dataclass(frozen=True)
class ImageGrid:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) array, got shape {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("zero-dimension image")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def plane(self) -> np.ndarray:
        """The single channel as a 2-D array (1-channel images only)."""
        if self.channels != 1:
            raise ValueError("plane() needs a 1-channel image")
        return self.data[:, :, 0]

    def crop(self, top: int, left: int, bottom: int, right: int) -> "ImageGrid":
        return ImageGrid(self.data[top:bottom, left:right])


@dataclass(frozen=True)
class LabelField:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label field must be 2-D")
        if not np.all(np.isin(labels, (-1, 0, 1))):
            raise ValueError("labels must be in {-1, 0, +1}")
        labels = labels.astype(np.int8)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @classmethod
    def unlabeled(cls, height: int, width: int) -> "LabelField":
        return cls(np.zeros((height, width), dtype=np.int8))


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        bits = bits.astype(bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())


def _open_raster(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ImageFormatError(f"unsupported format: {path.suffix or path.name}")
    if not path.is_file():
        raise ImageFormatError(f"unreadable file: {path} does not exist")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("1", "L", "P", "LA"):
                im = im.convert("L")
            elif im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.array(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"unreadable file: {path} ({exc})") from exc
    if arr.dtype != np.uint8:
        raise ImageFormatError(f"unsupported format: {path} is not 8-bit")
    if arr.size == 0:
        raise ImageFormatError(f"unreadable file: {path} has zero dimension")
    return arr


def load_image(path) -> ImageGrid:
    """Read an 8-bit PNG/PPM/PGM raster; bytes are mapped to v/255."""
    arr = _open_raster(path)
    return ImageGrid(arr.astype(np.float64) / 255.0)


def to_bytes(img: ImageGrid) -> np.ndarray:
    return np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)


def save_image(img: ImageGrid, path) -> None:
    arr = to_bytes(img)
    if img.channels == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def to_grayscale(img: ImageGrid) -> ImageGrid:
    if img.channels == 1:
        return img
    gray = img.data @ np.array([0.299, 0.587, 0.114])
    return ImageGrid(np.clip(gray, 0.0, 1.0))


def downscale(img: ImageGrid, factor: int) -> ImageGrid:
    """Block-average pooling over ``factor x factor`` blocks.

    Trailing partial blocks are averaged over the pixels they actually
    contain, so the output has ``ceil(h/f) x ceil(w/f)`` pixels.
    """
    if factor < 1:
        raise ValueError("downscale factor must be >= 1")
    if factor == 1:
        return img
    return ImageGrid(_block_mean(img.data, factor))


def _block_mean(data: np.ndarray, factor: int) -> np.ndarray:
    h, w = data.shape[:2]
    rows = np.arange(0, h, factor)
    cols = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(data, rows, axis=0), cols, axis=1)
    rcount = np.diff(np.append(rows, h))
    ccount = np.diff(np.append(cols, w))
    counts = np.outer(rcount, ccount)
    if data.ndim == 3:
        counts = counts[:, :, None]
    return np.clip(sums / counts, 0.0, 1.0)


def upscale_mask(mask: BinaryMask, factor: int, target_w: int, target_h: int) -> BinaryMask:
    if factor < 1:
        raise ValueError("upscale factor must be >= 1")
    if -(-target_w // factor) != mask.width or -(-target_h // factor) != mask.height:
        raise ValueError(
            f"dimension mismatch: {mask.width}x{mask.height} mask cannot cover "
            f"{target_w}x{target_h} at factor {factor}"
        )
    big = np.repeat(np.repeat(mask.bits, factor, axis=0), factor, axis=1)
    return BinaryMask(big[:target_h, :target_w])


def load_label_field(path) -> LabelField:
    arr = _open_raster(path)
    if arr.ndim != 2:
        raise ImageFormatError(f"label field must be single-channel PGM: {path}")
    bad = ~np.isin(arr, (0, 128, 255))
    if bad.any():
        value = int(arr[bad][0])
        raise ImageFormatError(f"invalid label byte {value} in {path}")
    labels = np.zeros(arr.shape, dtype=np.int8)
    labels[arr == 0] = -1
    labels[arr == 255] = 1
    return LabelField(labels)


def encode_labels(field: LabelField) -> np.ndarray:
    out = np.full(field.shape, 128, dtype=np.uint8)
    out[field.labels == -1] = 0
    out[field.labels == 1] = 255
    return out


def save_label_field(field: LabelField, path) -> None:
    Image.fromarray(encode_labels(field)).save(Path(path), format="PPM")


def load_mask(path) -> BinaryMask:
    arr = _open_raster(path)
    if arr.ndim != 2:
        raise ImageFormatError(f"mask must be single-channel PGM: {path}")
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        raise ImageFormatError(f"invalid mask byte {int(arr[bad][0])} in {path}")
    return BinaryMask(arr == 255)


def save_mask(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr).save(Path(path), format="PPM")
