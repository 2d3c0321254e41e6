"""Edge extraction and Hough detection of ruler lines and circles.

Edges come from Canny run on a total-variation denoised image (the TV step
replaces Canny's usual Gaussian prefilter). Lines use the normal form
``rho = x cos(theta) + y sin(theta)`` with ``x`` the column and ``y`` the row
index; circles use a (row, col, r) accumulator with votes restricted to a
small window around the local edge normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagegrid import BinaryMask, ImageGrid


class HoughError(ValueError):
    pass


@dataclass(frozen=True)
class HoughParams:
    s_min: float = 7.0
    s_max: float = 28.0
    obj_max: int = 500
    thresh: float = 0.2
    acc: float = 3.0  # lines: max gap (px) inside a segment; circles: normal window (deg)
    rho_res: float = 1.0
    theta_res: float = np.pi / 180.0

    def __post_init__(self):
        if not 0 < self.s_min < self.s_max:
            raise ValueError("need 0 < s_min < s_max")
        if not 0 < self.thresh <= 1:
            raise ValueError("thresh must lie in (0, 1]")
        if self.obj_max < 1:
            raise ValueError("obj_max must be >= 1")
        if not (self.rho_res > 0 and 0 < self.theta_res <= np.pi):
            raise ValueError("invalid accumulator resolution")
        if self.acc < 0:
            raise ValueError("acc must be nonnegative")


@dataclass(frozen=True)
class DetectedLine:
    rho: float
    theta: float
    votes: float
    endpoints: tuple | None = None  # ((x0, y0), (x1, y1))

    def residual(self, x: float, y: float) -> float:
        return abs(x * np.cos(self.theta) + y * np.sin(self.theta) - self.rho)


@dataclass(frozen=True)
class DetectedCircle:
    c1: float  # row
    c2: float  # col
    r: float
    votes: float


@dataclass(frozen=True)
class LineAccumulator:
    votes: np.ndarray  # (n_rho, n_theta)
    rhos: np.ndarray
    thetas: np.ndarray
    edges: np.ndarray  # bool edge map the votes came from


# ---------------------------------------------------------------- TV + Canny


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    # negative adjoint of the forward-difference gradient (Neumann boundary)
    dx = np.zeros_like(px)
    dx[:, 0] = px[:, 0]
    dx[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    dx[:, -1] = -px[:, -2]
    dy = np.zeros_like(py)
    dy[0, :] = py[0, :]
    dy[1:-1, :] = py[1:-1, :] - py[:-2, :]
    dy[-1, :] = -py[-2, :]
    return dx + dy


def tv_denoise(gray: ImageGrid, lambda_tv: float = 10.0, iters: int = 100) -> ImageGrid:
    """ROF denoising, ``min_u TV(u) + lambda/2 ||u - f||^2``, by projected dual steps.

    The dual field p is updated as ``p <- proj(p + tau grad(div p - lambda f))``
    with ``|p| <= 1`` and ``u = f - div(p) / lambda``.
    """
    if gray.channels != 1:
        raise ValueError("tv_denoise needs a 1-channel image")
    if lambda_tv <= 0:
        raise ValueError("lambda_tv must be positive")
    f = gray.plane()
    if f.shape[0] < 2 or f.shape[1] < 2:
        return gray
    theta = 1.0 / lambda_tv
    tau = 0.24
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    for _ in range(iters):
        gx, gy = _grad(_div(px, py) - f / theta)
        px += tau * gx
        py += tau * gy
        norm = np.maximum(1.0, np.hypot(px, py))
        px /= norm
        py /= norm
    u = f - theta * _div(px, py)
    return ImageGrid(np.clip(u, 0.0, 1.0))


_NEIGHBOURS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}  # (drow, dcol) per direction bin


def canny_edges(gray: ImageGrid, low: float = 0.1, high: float = 0.25) -> BinaryMask:
    """Central-difference gradient, non-maximum suppression, hysteresis.

    ``low`` and ``high`` are fractions of the maximum gradient magnitude.
    """
    if not 0 <= low < high <= 1:
        raise ValueError("need 0 <= low < high <= 1")
    if gray.channels != 1:
        raise ValueError("canny_edges needs a 1-channel image")
    u = gray.plane()
    if min(u.shape) < 2:
        return BinaryMask(np.zeros(u.shape, dtype=bool))
    gy, gx = np.gradient(u)
    mag = np.hypot(gx, gy)
    top = mag.max()
    if top <= 1e-12:
        return BinaryMask(np.zeros(u.shape, dtype=bool))
    ang = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((ang + 22.5) / 45.0).astype(int)) % 4
    h, w = u.shape
    pad = np.pad(mag, 1)
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dr, dc) in _NEIGHBOURS.items():
        nxt = pad[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        prv = pad[1 - dr:1 - dr + h, 1 - dc:1 - dc + w]
        # >= on one side, > on the other: a tied pair yields exactly one pixel
        keep |= (sector == s) & (mag >= prv) & (mag > nxt)
    nms = np.where(keep, mag, 0.0)
    strong = nms >= high * top
    weak = nms >= max(low * top, 1e-12)
    lab, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return BinaryMask(np.zeros(u.shape, dtype=bool))
    hit = np.zeros(n + 1, dtype=bool)
    hit[lab[strong]] = True
    hit[0] = False
    return BinaryMask(hit[lab])


def edge_map(gray: ImageGrid, lambda_tv=10.0, tv_iters=100, low=0.1, high=0.25) -> BinaryMask:
    return canny_edges(tv_denoise(gray, lambda_tv, tv_iters), low, high)


# --------------------------------------------------------------------- lines


def _edge_bits(edges) -> np.ndarray:
    return np.asarray(getattr(edges, "bits", edges), dtype=bool)


def hough_line_accumulate(edges, params: HoughParams = HoughParams(), thetas=None) -> LineAccumulator:
    """Vote every edge pixel once per theta bin into a (rho, theta) array.

    Each vote is split linearly between the two rho bins around the exact
    rho, so a line lying exactly on a bin keeps its full count there. rho spans ``[-D, D]`` with D the (ceiled) image diagonal. ``thetas`` may
    override the default ``[0, pi)`` grid, e.g. to restrict to a band.
    """
    bits = _edge_bits(edges)
    ys, xs = np.nonzero(bits)
    if xs.size == 0:
        raise HoughError("empty edge mask")
    h, w = bits.shape
    D = float(np.ceil(np.hypot(h, w)))
    n_rho = int(np.round(2 * D / params.rho_res)) + 1
    rhos = -D + params.rho_res * np.arange(n_rho)
    if thetas is None:
        n_theta = max(1, int(np.round(np.pi / params.theta_res)))
        thetas = params.theta_res * np.arange(n_theta)
    thetas = np.asarray(thetas, dtype=np.float64)
    n_theta = thetas.size
    cos, sin = np.cos(thetas), np.sin(thetas)
    votes = np.zeros(n_rho * n_theta, dtype=np.float64)
    cols = np.arange(n_theta)
    chunk = max(1, 2_000_000 // n_theta)
    for s in range(0, xs.size, chunk):
        rho = xs[s:s + chunk, None] * cos[None, :] + ys[s:s + chunk, None] * sin[None, :]
        pos = (rho + D) / params.rho_res
        i0 = np.floor(pos)
        frac = pos - i0
        i0 = np.clip(i0.astype(np.int64), 0, n_rho - 1)
        i1 = np.minimum(i0 + 1, n_rho - 1)
        # linear split between the two nearest rho bins; each pixel still casts one vote per theta
        votes += np.bincount((i0 * n_theta + cols).ravel(), (1.0 - frac).ravel(), n_rho * n_theta)
        votes += np.bincount((i1 * n_theta + cols).ravel(), frac.ravel(), n_rho * n_theta)
    return LineAccumulator(votes.reshape(n_rho, n_theta), rhos, thetas, bits)


def _segment(bits, rho, theta, tol, gap):
    """Longest run of edge pixels near the line, endpoints projected onto it."""
    ys, xs = np.nonzero(bits)
    c, s = np.cos(theta), np.sin(theta)
    near = np.abs(xs * c + ys * s - rho) <= tol
    if not np.any(near):
        return None
    t = np.sort(-xs[near] * s + ys[near] * c)
    breaks = np.flatnonzero(np.diff(t) > gap)
    starts = np.r_[0, breaks + 1]
    ends = np.r_[breaks, t.size - 1]
    k = int(np.argmax(t[ends] - t[starts]))
    t0, t1 = t[starts[k]], t[ends[k]]
    base = np.array([rho * c, rho * s])
    direction = np.array([-s, c])
    p0, p1 = base + t0 * direction, base + t1 * direction
    return (tuple(p0.tolist()), tuple(p1.tolist()))


def _normalise(rho, theta):
    """Map (rho, theta) to the same line with theta in [0, pi)."""
    k = int(np.floor(theta / np.pi))
    theta = float(theta - k * np.pi)
    if theta >= np.pi:  # rounding
        theta, k = theta - np.pi, k + 1
    return (float(-rho) if k % 2 else float(rho)), theta


def _aligned_rho(line: DetectedLine, ref_theta: float) -> float:
    """rho of ``line`` re-expressed with the theta nearest ``ref_theta`` (mod 2 pi)."""
    k = int(round((ref_theta - line.theta) / np.pi))
    return -line.rho if k % 2 else line.rho


def find_line_peaks(acc: LineAccumulator, params: HoughParams = HoughParams()) -> list[DetectedLine]:
    """Greedy peak extraction with rho suppression and spacing chains.

    The global maximum is taken while it is at least ``thresh`` times the
    accumulator maximum; peaks closer than ``s_min`` in rho (within a few
    degrees in theta) are zeroed. With ``obj_max == 1`` the strongest peak
    is returned. Otherwise candidates are sorted by rho and split wherever
    consecutive spacing exceeds ``s_max``; the largest such chain is kept
    (ties to the larger vote total) and trimmed to ``obj_max`` by votes.
    Ties between equal bins go to the smaller rho index, then theta index.
    """
    votes = acc.votes.astype(np.float64)
    top = votes.max()
    if top <= 0:
        return []
    floor = params.thresh * top
    n_rho, n_theta = votes.shape
    rad = int(np.ceil(params.s_min / params.rho_res)) - 1  # |drho| < s_min
    half = int(np.ceil(params.s_min / 2.0 / params.rho_res))
    twin = max(2, int(round(np.deg2rad(5.0) / params.theta_res)))
    work = votes.copy()
    cands = []
    limit = params.obj_max if params.obj_max == 1 else 4 * params.obj_max + 8
    while len(cands) < limit:
        flat = int(np.argmax(work))
        i, j = divmod(flat, n_theta)
        peak = work[i, j]
        if peak < floor or peak <= 0:
            break
        lo, hi = max(0, i - half), min(n_rho, i + half + 1)
        col = votes[lo:hi, j]
        sel = col >= 0.5 * peak
        rho = float(np.dot(acc.rhos[lo:hi][sel], col[sel]) / col[sel].sum())
        cands.append((rho, acc.thetas[j], float(votes[i, j])))
        r0, r1 = max(0, i - rad), min(n_rho, i + rad + 1)
        t0, t1 = max(0, j - twin), min(n_theta, j + twin + 1)
        work[r0:r1, t0:t1] = 0.0
    if not cands:
        return []
    if params.obj_max > 1 and len(cands) > 1:
        cands.sort(key=lambda c: c[0])
        groups, cur = [], [cands[0]]
        for c in cands[1:]:
            if c[0] - cur[-1][0] <= params.s_max:
                cur.append(c)
            else:
                groups.append(cur)
                cur = [c]
        groups.append(cur)
        best = max(groups, key=lambda g: (len(g), sum(c[2] for c in g)))
        cands = sorted(best, key=lambda c: -c[2])[: params.obj_max]
    tol = max(params.rho_res, 1.0)
    out = []
    for rho, theta, v in cands:
        seg = _segment(acc.edges, rho, theta, tol, params.acc)
        out.append(DetectedLine(*_normalise(rho, theta), v, seg))
    return out


def longest_line(edges, params: HoughParams = HoughParams()) -> DetectedLine:
    """Strongest line (obj_max 1, thresh 0.85)."""
    p = HoughParams(params.s_min, params.s_max, 1, 0.85, params.acc, params.rho_res, params.theta_res)
    peaks = find_line_peaks(hough_line_accumulate(edges, p), p)
    if not peaks:
        raise HoughError("no line found")
    return peaks[0]


def detect_ruler_notches(edges, theta0: float, params: HoughParams = HoughParams()) -> list[DetectedLine]:
    """Lines perpendicular to direction ``theta0`` (the ruler edge normal).

    Votes are restricted to within two theta bins of ``theta0 + pi/2``. The
    notches are parallel, so peaks are taken in the single band column whose
    votes are most concentrated (largest sum of squares), with obj_max 500
    and thresh 0.2. Lines are returned sorted along the ruler.
    """
    p = HoughParams(params.s_min, params.s_max, 500, 0.20, params.acc, params.rho_res, params.theta_res)
    centre = theta0 + np.pi / 2.0
    thetas = centre + params.theta_res * np.arange(-2, 3)
    band = hough_line_accumulate(edges, p, thetas)
    j = int(np.argmax((band.votes**2).sum(axis=0)))
    column = LineAccumulator(band.votes[:, j:j + 1], band.rhos, band.thetas[j:j + 1], band.edges)
    raw = find_line_peaks(column, p)
    if len(raw) < 3:
        raise HoughError(f"insufficient notches: found {len(raw)}, need at least 3")
    return sorted(raw, key=lambda ln: _aligned_rho(ln, centre))


def notch_spacings(lines: list[DetectedLine]) -> np.ndarray:
    """Consecutive perpendicular distances between sorted parallel lines."""
    if len(lines) < 2:
        return np.zeros(0)
    rhos = np.array([_aligned_rho(ln, lines[0].theta) for ln in lines])
    return np.abs(np.diff(rhos))


# ------------------------------------------------------------------- circles


def _edge_normals(bits: np.ndarray) -> np.ndarray:
    """Unit normal angle of the edge map from its structure tensor."""
    f = ndimage.gaussian_filter(bits.astype(np.float64), 1.0)
    gy, gx = np.gradient(f)
    jxx = ndimage.gaussian_filter(gx * gx, 1.5)
    jxy = ndimage.gaussian_filter(gx * gy, 1.5)
    jyy = ndimage.gaussian_filter(gy * gy, 1.5)
    return 0.5 * np.arctan2(2 * jxy, jxx - jyy)  # dominant direction, mod pi


def hough_circles(
    edges, r_min: float, r_max: float, params: HoughParams = HoughParams(), gray: ImageGrid | None = None
) -> list[DetectedCircle]:
    """Circle detection over centres (row, col) and radii r in 1 px steps.

    Each edge pixel votes for centres at distance r along its normal (both
    senses) over a +-``acc`` degree arc sampled about 1 px apart. Normals
    come from the gradient of ``gray`` when given, else from the structure
    tensor of the edge map. A radius slice is scored by 3x3-summed votes
    divided by ``2 pi r``, so a full circle scores about the same at any
    radius; only per-slice local maxima are kept as candidates, which avoids
    storing the full 3-D array. Candidates at or above ``thresh`` times the
    best score are accepted greedily; one is suppressed when an accepted
    circle has centre distance below ``r_min`` and radius difference below
    ``r_min`` (so concentric circles survive). The centre is refined by a
    3x3 score centroid and the radius by the mean distance of the edge
    pixels within ``max(1.5, r_min/4)`` px of the peak circle.
    """
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    bits = _edge_bits(edges)
    ys, xs = np.nonzero(bits)
    if ys.size == 0:
        return []
    h, w = bits.shape
    if gray is not None:
        gy, gx = np.gradient(ndimage.gaussian_filter(gray.plane(), 1.0))
        phi = np.arctan2(gy[ys, xs], gx[ys, xs])
    else:
        phi = _edge_normals(bits)[ys, xs]
    radii = np.arange(int(np.ceil(r_min)), int(np.floor(r_max)) + 1)
    if radii.size == 0:
        return []
    half_arc = np.deg2rad(params.acc)
    fy, fx = ys.astype(np.float64), xs.astype(np.float64)
    cands = []  # (score, r, i, j, slice)
    for r in radii:
        n_off = int(np.ceil(r * half_arc))
        offs = np.linspace(-half_arc, half_arc, 2 * n_off + 1) if n_off else np.zeros(1)
        ang = (phi[:, None] + offs[None, :]).ravel()
        ang = np.concatenate([ang, ang + np.pi])
        py = np.tile(np.repeat(fy, offs.size), 2)
        px = np.tile(np.repeat(fx, offs.size), 2)
        cy = np.rint(py + r * np.sin(ang)).astype(np.int64)
        cx = np.rint(px + r * np.cos(ang)).astype(np.int64)
        ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        flat = np.bincount(cy[ok] * w + cx[ok], minlength=h * w).astype(np.float64)
        score = ndimage.uniform_filter(flat.reshape(h, w), 3, mode="constant") * 9.0 / (2 * np.pi * r)
        peaks = (score == ndimage.maximum_filter(score, 5, mode="constant")) & (score > 0)
        pi, pj = np.nonzero(peaks)
        if pi.size > 20:
            top = np.argsort(-score[pi, pj], kind="stable")[:20]
            pi, pj = pi[top], pj[top]
        for i, j in zip(pi, pj):
            i0, i1, j0, j1 = max(0, i - 1), min(h, i + 2), max(0, j - 1), min(w, j + 2)
            cands.append((float(score[i, j]), int(r), int(i), int(j), score[i0:i1, j0:j1].copy(), (i0, j0)))
    if not cands:
        return []
    cands.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    floor = params.thresh * cands[0][0]
    win = max(1.5, r_min / 4.0)
    found: list[DetectedCircle] = []
    for sc, r, i, j, patch, (i0, j0) in cands:
        if sc < floor or len(found) >= params.obj_max:
            break
        gi, gj = np.mgrid[i0:i0 + patch.shape[0], j0:j0 + patch.shape[1]]
        c1 = float((gi * patch).sum() / patch.sum())
        c2 = float((gj * patch).sum() / patch.sum())
        if any(np.hypot(c1 - f.c1, c2 - f.c2) < r_min and abs(r - f.r) < r_min for f in found):
            continue
        dist = np.hypot(fy - c1, fx - c2)
        near = np.abs(dist - r) <= win
        r_ref = float(dist[near].mean()) if np.any(near) else float(r)
        found.append(DetectedCircle(c1, c2, r_ref, sc))
    return found
