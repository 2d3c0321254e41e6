"""Dense weighted graph: Gaussian weights, degrees, Laplacians and GL energy.

Everything here is O(S^2) and only meant for small graphs; it is the
reference that the Nystrom code is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureField

DEFAULT_MAX_VERTICES = 4096


@dataclass(frozen=True)
class GraphParams:
    sigma2: float = 20.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class DenseGraph:
    W: np.ndarray
    d: np.ndarray

    @property
    def S(self) -> int:
        return self.W.shape[0]


def gaussian_weight(zi, zj, sigma2: float) -> float:
    zi = np.asarray(zi, dtype=np.float64)
    zj = np.asarray(zj, dtype=np.float64)
    if zi.shape != zj.shape:
        raise ValueError(f"dimension mismatch: {zi.shape} vs {zj.shape}")
    return float(np.exp(-np.sum((zi - zj) ** 2) / sigma2))


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at 0."""
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.maximum(d2, 0.0)


def kernel_matrix(A: np.ndarray, B: np.ndarray, sigma2: float) -> np.ndarray:
    return np.exp(-sq_distances(A, B) / sigma2)


def build_dense_graph(
    features: FeatureField | np.ndarray,
    params: GraphParams = GraphParams(),
    max_vertices: int = DEFAULT_MAX_VERTICES,
) -> DenseGraph:
    Z = features.vectors if isinstance(features, FeatureField) else np.asarray(features, float)
    S = Z.shape[0]
    if S > max_vertices:
        raise ValueError(f"graph too large for dense storage: S={S} > {max_vertices}")
    W = kernel_matrix(Z, Z, params.sigma2)
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 1.0)
    return DenseGraph(W, W.sum(axis=1))


def symmetric_laplacian(G: DenseGraph) -> np.ndarray:
    if np.any(G.d <= 0):
        raise ValueError("zero degree: symmetric Laplacian undefined")
    s = 1.0 / np.sqrt(G.d)
    Ls = np.eye(G.S) - s[:, None] * G.W * s[None, :]
    return 0.5 * (Ls + Ls.T)


def normalized_weights(G: DenseGraph) -> np.ndarray:
    """D^{-1/2} W D^{-1/2}."""
    s = 1.0 / np.sqrt(G.d)
    A = s[:, None] * G.W * s[None, :]
    return 0.5 * (A + A.T)


def quadratic_form(u, G: DenseGraph) -> float:
    """0.5 * sum_xy w(x,y) (u(x) - u(y))^2."""
    u = np.asarray(u, dtype=np.float64)
    diff = u[:, None] - u[None, :]
    return float(0.5 * np.sum(G.W * diff * diff))


def double_well(u):
    u = np.asarray(u, dtype=np.float64)
    return 0.25 * (u * u - 1.0) ** 2


def gl_energy(u, G: DenseGraph, labels, epsilon: float, Ls: np.ndarray | None = None) -> float:
    """Discrete GL energy with fidelity.

    The Dirichlet term is ``u^T L_s u`` with the symmetric Laplacian;
    ``labels`` is a flat array in {-1, 0, +1} (0 = unlabelled).
    """
    u = np.asarray(u, dtype=np.float64)
    u0 = np.asarray(labels, dtype=np.float64).ravel()
    if u.shape != u0.shape or u.shape[0] != G.S:
        raise ValueError("u, labels and graph size disagree")
    if Ls is None:
        Ls = symmetric_laplacian(G)
    chi = u0 != 0
    dirichlet = 0.5 * epsilon * float(u @ (Ls @ u))
    well = float(double_well(u).sum()) / epsilon
    fidelity = 0.5 * float(np.sum((u[chi] - u0[chi]) ** 2))
    return dirichlet + well + fidelity
