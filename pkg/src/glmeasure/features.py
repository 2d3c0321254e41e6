"""Per-pixel feature vectors built from mirrored square neighbourhoods.

A pixel's feature vector concatenates, over its ``(2*tau+1)**2`` neighbours
taken in row-major order, the per-pixel channels selected by the mode:
intensities (1 or 3 values), MR8 texture responses (8 values) or both,
interleaved neighbour by neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagegrid import ImageGrid, to_grayscale

MODES = ("gray", "rgb", "texture", "rgb+texture")


@dataclass(frozen=True)
class FeatureField:
    width: int
    height: int
    vectors: np.ndarray  # (height * width, K), row-major pixel order

    def __post_init__(self):
        if self.vectors.shape[0] != self.width * self.height:
            raise ValueError("feature rows must equal width * height")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("feature vectors must be finite")

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class FilterBank:
    """Oriented edge/bar filters plus an isotropic Gaussian and LoG.

    ``kernels`` holds the 2 * len(scales) * n_orientations anisotropic
    kernels first (edges then bars, grouped by scale), followed by the
    Gaussian and the Laplacian of Gaussian.
    """

    kernels: tuple
    tags: tuple
    support: int
    scales: tuple
    n_orientations: int


def _axes(support: int):
    half = support // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    return np.meshgrid(coords, coords, indexing="ij")  # (row, col)


def _l1_normalize(kernel: np.ndarray, zero_mean: bool) -> np.ndarray:
    if zero_mean:
        kernel = kernel - kernel.mean()
    return kernel / np.abs(kernel).sum()


def make_filter_bank(
    support: int = 19,
    scales=((1.0, 2.0), (2.0, 4.0), (4.0, 8.0)),
    n_orientations: int = 6,
    iso_sigma: float = 3.0,
) -> FilterBank:
    if support % 2 == 0 or support < 3:
        raise ValueError("filter support must be an odd integer >= 3")
    rr, cc = _axes(support)
    kernels, tags = [], []
    for kind, order in (("edge", 1), ("bar", 2)):
        for sx, sy in scales:
            for k in range(n_orientations):
                theta = np.pi * k / n_orientations
                # u runs across the filter (derivative axis), v along it
                u = cc * np.cos(theta) - rr * np.sin(theta)
                v = cc * np.sin(theta) + rr * np.cos(theta)
                g = np.exp(-0.5 * (u**2 / sx**2 + v**2 / sy**2))
                if order == 1:
                    ker = -u / sx**2 * g
                else:
                    ker = (u**2 / sx**4 - 1.0 / sx**2) * g
                kernels.append(_l1_normalize(ker, zero_mean=True))
                tags.append((kind, (sx, sy), theta))
    r2 = rr**2 + cc**2
    gauss = np.exp(-0.5 * r2 / iso_sigma**2)
    kernels.append(gauss / gauss.sum())
    tags.append(("gaussian", (iso_sigma, iso_sigma), None))
    log = (r2 / iso_sigma**4 - 2.0 / iso_sigma**2) * gauss
    kernels.append(_l1_normalize(log, zero_mean=True))
    tags.append(("log", (iso_sigma, iso_sigma), None))
    return FilterBank(tuple(kernels), tuple(tags), support, tuple(scales), n_orientations)


def neighborhood_vector(x: tuple[int, int], tau: int, dims: tuple[int, int]) -> list[tuple[int, int]]:
    """Row-major coordinates of the (2tau+1)^2 square around ``x = (row, col)``.

    Out-of-range coordinates are reflected across the border without
    repeating the edge pixel, so ``-1`` maps to ``1``.
    """
    h, w = dims
    r0, c0 = x
    return [
        (_reflect(r0 + dr, h), _reflect(c0 + dc, w))
        for dr in range(-tau, tau + 1)
        for dc in range(-tau, tau + 1)
    ]


def _reflect(i: int, n: int) -> int:
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def _neighbourhood_stack(planes: np.ndarray, tau: int) -> np.ndarray:
    """(h, w, c) per-pixel channels -> (h*w, (2tau+1)^2 * c) interleaved."""
    h, w, c = planes.shape
    if tau == 0:
        return planes.reshape(h * w, c)
    rows = np.array([_reflect(i, h) for i in range(-tau, h + tau)])
    cols = np.array([_reflect(j, w) for j in range(-tau, w + tau)])
    padded = planes[rows][:, cols]
    side = 2 * tau + 1
    parts = [padded[dr:dr + h, dc:dc + w] for dr in range(side) for dc in range(side)]
    return np.stack(parts, axis=2).reshape(h * w, side * side * c)


def intensity_features(img: ImageGrid, tau: int = 1) -> FeatureField:
    vecs = _neighbourhood_stack(img.data, tau)
    return FeatureField(img.width, img.height, vecs)


def mr8_features(gray: ImageGrid, bank: FilterBank | None = None) -> np.ndarray:
    """MR8 texture responses, shape (h, w, 8).

    Channels 0-5 are the maximum over orientations of |edge| and bar
    responses for each scale (edges first); channel 6 is the Gaussian and
    channel 7 the Laplacian of Gaussian.
    """
    if gray.channels != 1:
        raise ValueError("mr8_features needs a 1-channel image")
    bank = bank or make_filter_bank()
    half = bank.support // 2
    if half >= gray.height or half >= gray.width:
        raise ValueError(
            f"filter support {bank.support} exceeds image dimensions {gray.width}x{gray.height}"
        )
    plane = gray.plane()
    n_or = bank.n_orientations
    n_aniso = 2 * len(bank.scales) * n_or
    out = []
    for g in range(n_aniso // n_or):
        resp = np.stack(
            [ndimage.convolve(plane, bank.kernels[g * n_or + k], mode="mirror") for k in range(n_or)]
        )
        if bank.tags[g * n_or][0] == "edge":
            resp = np.abs(resp)
        out.append(resp.max(axis=0))
    for ker in bank.kernels[n_aniso:]:
        out.append(ndimage.convolve(plane, ker, mode="mirror"))
    return np.stack(out, axis=2)


def combined_features(
    img: ImageGrid, tau: int = 1, mode: str = "rgb+texture", bank: FilterBank | None = None
) -> FeatureField:
    if mode not in MODES:
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {MODES}")
    parts = []
    if mode == "gray":
        parts.append(to_grayscale(img).data)
    elif mode in ("rgb", "rgb+texture"):
        if img.channels != 3:
            raise ValueError(f"mode {mode!r} needs a 3-channel image")
        parts.append(img.data)
    if mode in ("texture", "rgb+texture"):
        parts.append(mr8_features(to_grayscale(img), bank))
    planes = np.concatenate(parts, axis=2)
    return FeatureField(img.width, img.height, _neighbourhood_stack(planes, tau))


def feature_dim(mode: str, tau: int) -> int:
    per = {"gray": 1, "rgb": 3, "texture": 8, "rgb+texture": 11}[mode]
    return per * (2 * tau + 1) ** 2
