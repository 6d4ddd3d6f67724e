"""K-nearest-neighbor tables and the within-class / between-class graphs of the training set."""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from app.models.graph import ClassGraphs, NeighborTable
from app.services.errors import ArgumentError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


def _sorted_neighbors(dist: np.ndarray, k: int) -> np.ndarray:
    # stable sort keeps the lower index first among equal distances
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def knn_neighbors(X: np.ndarray, K: int, labels: Optional[np.ndarray] = None) -> NeighborTable:
    """Exact Euclidean K-NN of every row (self excluded).

    With ``labels``, also builds for every class p the table of the K nearest
    rows labeled p.
    """
    X = np.asarray(X, dtype=np.float64)
    q = X.shape[0]
    if K < 1 or K >= q:
        raise ArgumentError(f"K={K} must lie in 1..{q - 1}")

    dist = cdist(X, X)
    np.fill_diagonal(dist, np.inf)
    indices = _sorted_neighbors(dist, K)
    distances = np.take_along_axis(dist, indices, axis=1)

    class_indices = {}
    if labels is not None:
        labels = np.asarray(labels)
        for p in np.unique(labels):
            members = np.flatnonzero(labels == p)
            k_p = min(K, members.size)
            local = _sorted_neighbors(dist[:, members], k_p)
            table = members[local]
            # a row of class p sees itself at infinite distance; drop it
            table = np.where(np.take_along_axis(dist[:, members], local, axis=1) == np.inf, -1, table)
            class_indices[int(p)] = table
    return NeighborTable(indices=indices, distances=distances, class_indices=class_indices)


def default_kernel_scale(nbrs: NeighborTable) -> float:
    """Median K-NN distance over all samples"""
    scale = float(np.median(nbrs.distances))
    if scale <= 0:
        raise ArgumentError("median neighbor distance is zero; samples must be distinct")
    return scale


def laplacian(W: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ArgumentError("weight matrix must be square")
    if np.max(np.abs(W - W.T), initial=0.0) > SYMMETRY_TOL:
        raise ArgumentError("weight matrix is not symmetric")
    if np.any(W < 0):
        raise ArgumentError("weight matrix has negative entries")
    D = np.diag(W.sum(axis=1))
    return D - W, D


def gaussian_knn_graph(X: np.ndarray, nbrs: NeighborTable, kernel_scale: float) -> np.ndarray:
    """Symmetric weight matrix exp(-||x_i - x_j||^2 / sigma^2) over K-NN edges, symmetrized by max"""
    if kernel_scale <= 0:
        raise ArgumentError("graph kernel scale must be positive")
    n = nbrs.indices.shape[0]
    if np.asarray(X).shape[0] != n:
        raise ArgumentError("neighbor table must cover every row")
    rows = np.repeat(np.arange(n), nbrs.k)
    W = np.zeros((n, n))
    W[rows, nbrs.indices.reshape(-1)] = np.exp(-(nbrs.distances.reshape(-1) ** 2) / kernel_scale ** 2)
    # an edge exists when either endpoint lists the other
    return np.maximum(W, W.T)


def class_weights(X: np.ndarray, labels: np.ndarray, nbrs: NeighborTable,
                  kernel_scale: float) -> ClassGraphs:
    """Gaussian-weighted K-NN edges, routed to the within-class or between-class graph"""
    labels = np.asarray(labels)
    if labels.shape != (nbrs.indices.shape[0],):
        raise ArgumentError("neighbor table and labels must cover every row")
    W = gaussian_knn_graph(X, nbrs, kernel_scale)
    same = labels[:, None] == labels[None, :]
    within = np.where(same, W, 0.0)
    between = np.where(same, 0.0, W)

    L_w, D_w = laplacian(within)
    L_b, _ = laplacian(between)
    logger.debug(f"Class graphs: {np.count_nonzero(within) // 2} within-class, "
                 f"{np.count_nonzero(between) // 2} between-class edges")
    return ClassGraphs(within=within, between=between, within_laplacian=L_w,
                       between_laplacian=L_b, within_degree=np.diag(D_w).copy(),
                       kernel_scale=float(kernel_scale))


def build_class_graphs(X: np.ndarray, labels: np.ndarray, K: int,
                       kernel_scale: Optional[float] = None) -> ClassGraphs:
    """K-NN table plus class graphs in one step; ``kernel_scale=None`` uses the median heuristic"""
    K = min(K, X.shape[0] - 1)
    nbrs = knn_neighbors(X, K)
    scale = kernel_scale if kernel_scale is not None else default_kernel_scale(nbrs)
    return class_weights(X, labels, nbrs, scale)
