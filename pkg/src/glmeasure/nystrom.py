"""Nystrom extension for the spectrum of the symmetric graph Laplacian.

Only the landmark rows ``W_XX`` (L x L) and ``W_XY`` (L x (S-L)) of the
weight matrix are ever formed. Degrees are approximated from the implied
completion ``W_YY ~ W_YX W_XX^+ W_XY`` and the normalised blocks are
orthogonalised in one shot, giving eigenpairs of ``D^{-1/2} W D^{-1/2}``
and hence of ``L_s = I - D^{-1/2} W D^{-1/2}``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureField
from .graph import kernel_matrix

DEGREE_FLOOR = 1e-12
EIG_FLOOR = 1e-10


class NystromWarning(UserWarning):
    pass


class NystromError(ValueError):
    pass


@dataclass(frozen=True)
class LandmarkPartition:
    X: np.ndarray
    Y: np.ndarray
    seed: int | None

    @property
    def L(self) -> int:
        return len(self.X)

    @property
    def S(self) -> int:
        return len(self.X) + len(self.Y)

    @property
    def order(self) -> np.ndarray:
        """Vertex indices in block order [X; Y]."""
        return np.concatenate([self.X, self.Y])


@dataclass(frozen=True)
class NystromDecomposition:
    ls_eigenvalues: np.ndarray  # ascending, eigenvalues of L_s
    eigenvectors: np.ndarray  # (S, m), orthonormal columns, original vertex order
    clipped: float = 0.0  # largest |adjustment| made when clipping to [0, 2]
    dropped_modes: int = 0
    events: tuple = field(default_factory=tuple)

    @property
    def num_modes(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def S(self) -> int:
        return self.eigenvectors.shape[0]


def sample_landmarks(S: int, L: int, seed: int | None = 0) -> LandmarkPartition:
    if not 2 <= L <= S:
        raise ValueError(f"landmark count L={L} out of range [2, {S}]")
    rng = np.random.default_rng(seed)
    X = np.sort(rng.choice(S, size=L, replace=False))
    mask = np.ones(S, dtype=bool)
    mask[X] = False
    return LandmarkPartition(X, np.flatnonzero(mask), seed)


def build_submatrices(features: FeatureField | np.ndarray, part: LandmarkPartition, sigma2: float):
    Z = features.vectors if isinstance(features, FeatureField) else np.asarray(features, float)
    ZX = Z[part.X]
    W_XX = kernel_matrix(ZX, ZX, sigma2)
    W_XX = 0.5 * (W_XX + W_XX.T)
    np.fill_diagonal(W_XX, 1.0)
    W_XY = kernel_matrix(ZX, Z[part.Y], sigma2)
    return W_XX, W_XY


def _pinv_sym(A: np.ndarray, rcond: float = 1e-12):
    """Pseudo-inverse of a symmetric PSD matrix and its condition estimate."""
    vals, vecs = np.linalg.eigh(A)
    top = max(vals.max(), 0.0)
    keep = vals > rcond * top
    inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    cond = np.inf if vals.min() <= 0 else top / vals.min()
    return inv, cond


def approximate_degree(W_XX: np.ndarray, W_XY: np.ndarray):
    """Row sums of the Nystrom completion of W.

    Returns ``(d, info)`` with ``d = [d_X; d_Y]`` and an info dict holding
    the condition estimate of ``W_XX`` and whether any entry was clamped.
    ``W_XX`` is inverted in the pseudo-inverse sense so rank-deficient
    kernels (e.g. identical features) complete exactly.
    """
    if not (np.all(np.isfinite(W_XX)) and np.all(np.isfinite(W_XY))):
        raise NystromError("non-finite weights")
    ones_y = np.ones(W_XY.shape[1])
    row_y = W_XY @ ones_y
    d_X = W_XX.sum(axis=1) + row_y
    pinv, cond = _pinv_sym(W_XX)
    d_Y = W_XY.sum(axis=0) + W_XY.T @ (pinv @ row_y)
    d = np.concatenate([d_X, d_Y])
    clamped = bool(np.any(d < DEGREE_FLOOR))
    if clamped:
        warnings.warn("approximate degrees clamped at 1e-12", NystromWarning, stacklevel=2)
        d = np.maximum(d, DEGREE_FLOOR)
    return d, {"condition": cond, "clamped": clamped}


def normalize_submatrices(W_XX: np.ndarray, W_XY: np.ndarray, d: np.ndarray):
    """Element-wise ``W_XX / sqrt(d_X d_X^T)`` and ``W_XY / sqrt(d_X d_Y^T)``."""
    if np.any(d <= 0):
        raise NystromError("nonpositive degree")
    L = W_XX.shape[0]
    sx = np.sqrt(d[:L])
    sy = np.sqrt(d[L:])
    A = W_XX / np.outer(sx, sx)
    B = W_XY / np.outer(sx, sy)
    return 0.5 * (A + A.T), B


def orthogonalized_eigenpairs(
    A: np.ndarray,
    B: np.ndarray,
    part: LandmarkPartition | None = None,
    strict: bool = True,
) -> NystromDecomposition:
    """One-shot orthogonalised Nystrom eigenpairs.

    With ``A = W^_XX`` and ``B = W^_XY`` forms
    ``Q = A + A^{-1/2} B B^T A^{-1/2} = U Lam U^T`` and
    ``V = [A; B^T] A^{-1/2} U Lam^{-1/2}``, whose columns are orthonormal.

    ``strict=True`` rejects an ``A`` that is not numerically positive
    definite. Otherwise directions of ``A`` (and of ``Q``) with eigenvalue
    at or below 1e-10 are discarded, leaving fewer than L modes.
    """
    L = A.shape[0]
    events = []
    a_vals, a_vecs = np.linalg.eigh(A)
    if a_vals.min() <= EIG_FLOOR:
        msg = (
            f"normalised W_XX is not positive definite (smallest eigenvalue "
            f"{a_vals.min():.3e}); use a smaller sigma2, fewer landmarks or another seed"
        )
        if strict:
            raise NystromError(msg)
        events.append(msg)
    keep = a_vals > EIG_FLOOR
    dropped = int(L - keep.sum())
    if keep.sum() < 1:
        raise NystromError("no usable Nystrom modes")
    a_vecs = a_vecs[:, keep]
    a_isqrt = a_vecs / np.sqrt(a_vals[keep])  # A^{-1/2} restricted to range(A), (L, r)
    # A^{-1/2} A A^{-1/2} on range(A) is the identity, so Q = diag(a) + R R^T in that basis.
    R = a_isqrt.T @ B
    Q = np.diag(a_vals[keep]) + R @ R.T
    Q = 0.5 * (Q + Q.T)
    lam, U = np.linalg.eigh(Q)
    good = lam > EIG_FLOOR
    if not np.all(good):
        dropped += int((~good).sum())
        events.append(f"dropped {int((~good).sum())} near-null Nystrom modes")
        lam, U = lam[good], U[:, good]
    T = a_isqrt @ (U / np.sqrt(lam))  # (L, m)
    V_blocks = np.vstack([A @ T, B.T @ T])
    ls = 1.0 - lam
    clipped_vals = np.clip(ls, 0.0, 2.0)
    clipped = float(np.max(np.abs(clipped_vals - ls))) if ls.size else 0.0
    if clipped > 1e-6:
        events.append(f"L_s eigenvalues clipped by up to {clipped:.3e}")
    order = np.argsort(clipped_vals, kind="stable")
    V_blocks = V_blocks[:, order]
    if part is not None:
        V = np.empty_like(V_blocks)
        V[part.order] = V_blocks
    else:
        V = V_blocks
    if dropped:
        warnings.warn(f"Nystrom basis truncated by {dropped} modes", NystromWarning, stacklevel=2)
    return NystromDecomposition(clipped_vals[order], V, clipped, dropped, tuple(events))


def nystrom_decomposition(
    features: FeatureField | np.ndarray,
    L: int,
    sigma2: float,
    seed: int | None = 0,
    strict: bool = False,
) -> NystromDecomposition:
    """Sample landmarks and run the full Nystrom pipeline."""
    Z = features.vectors if isinstance(features, FeatureField) else np.asarray(features, float)
    part = sample_landmarks(Z.shape[0], L, seed)
    W_XX, W_XY = build_submatrices(Z, part, sigma2)
    d, info = approximate_degree(W_XX, W_XY)
    A, B = normalize_submatrices(W_XX, W_XY, d)
    dec = orthogonalized_eigenpairs(A, B, part, strict=strict)
    if info["clamped"]:
        dec = replace(dec, events=("approximate degrees clamped at 1e-12",) + dec.events)
    return dec


def schur_error(W_XX: np.ndarray, W_XY: np.ndarray, W_YY: np.ndarray) -> float:
    """Frobenius norm of ``W_YY - W_YX W_XX^{-1} W_XY``."""
    if W_YY.size == 0:
        return 0.0
    try:
        sol = np.linalg.solve(W_XX, W_XY)
    except np.linalg.LinAlgError as exc:
        raise NystromError("singular W_XX") from exc
    return float(np.linalg.norm(W_YY - W_XY.T @ sol, "fro"))
