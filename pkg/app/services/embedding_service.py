"""Supervised spectral embeddings of the training set and their separable class pairs."""

import logging
from itertools import combinations

import numpy as np
import scipy.linalg

from app.models.embedding import Embedding, EmbeddingMethod, SeparablePairs
from app.models.graph import ClassGraphs
from app.services.errors import ArgumentError, EmbeddingError

logger = logging.getLogger(__name__)

CONSTANT_CORRELATION = 0.99


def _constant_like(z: np.ndarray) -> bool:
    norm = np.linalg.norm(z)
    if norm == 0:
        return True
    return abs(z.sum()) / (norm * np.sqrt(z.size)) > CONSTANT_CORRELATION


def supervised_laplacian(graphs: ClassGraphs, mu: float, d: int) -> Embedding:
    """Minimize tr(Y'L_wY) - mu tr(Y'L_bY) subject to Y'D_wY = I.

    The generalized problem is reduced to the symmetric one
    D^-1/2 (L_w - mu L_b) D^-1/2 and transformed back.
    """
    n = graphs.size
    if mu < 0:
        raise ArgumentError("mu must be nonnegative")
    if not 1 <= d < n:
        raise ArgumentError(f"dimension {d} must lie in 1..{n - 1}")

    degree = graphs.within_degree.copy()
    positive = degree[degree > 0]
    floor = 1e-8 * (positive.mean() if positive.size else 1.0)
    degree[degree <= 0] = floor
    inv_sqrt = 1.0 / np.sqrt(degree)

    A = graphs.within_laplacian - mu * graphs.between_laplacian
    S = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    S = 0.5 * (S + S.T)
    try:
        values, vectors = scipy.linalg.eigh(S)
    except np.linalg.LinAlgError as e:
        raise EmbeddingError(f"eigensolve failed: {e}") from e

    Z = inv_sqrt[:, None] * vectors  # D_w-orthonormal
    keep = [i for i in range(n) if not _constant_like(Z[:, i])][:d]
    if len(keep) < d:
        raise EmbeddingError(f"only {len(keep)} admissible eigenvectors for d={d}")
    logger.info(f"Supervised Laplacian embedding: d={d}, mu={mu}, "
                f"eigenvalues {values[keep[0]]:.4g}..{values[keep[-1]]:.4g}")
    return Embedding(coordinates=Z[:, keep], method=EmbeddingMethod.SUPERVISED_LAPLACIAN,
                     mu=mu, eigenvalues=values[keep])


def fisher_nonlinear(graphs: ClassGraphs, d: int) -> Embedding:
    """Maximize z'L_bz / z'L_wz over unconstrained z; L_w is floored by eps*I"""
    n = graphs.size
    if not 1 <= d < n:
        raise ArgumentError(f"dimension {d} must lie in 1..{n - 1}")
    if not np.any(graphs.between):
        raise EmbeddingError("no separating directions: the between-class graph is empty")

    trace = float(np.trace(graphs.within_laplacian))
    eps = 1e-8 * (trace / n if trace > 0 else 1.0)
    try:
        values, vectors = scipy.linalg.eigh(graphs.between_laplacian,
                                            graphs.within_laplacian + eps * np.eye(n))
    except np.linalg.LinAlgError as e:
        raise EmbeddingError(f"eigensolve failed: {e}") from e

    order = np.argsort(values, kind="stable")[::-1][:d]
    values = values[order]
    if values[0] <= 1e-12 * max(1.0, abs(values).max()):
        raise EmbeddingError("no separating directions")
    Z = vectors[:, order]
    Z = Z / np.linalg.norm(Z, axis=0, keepdims=True)
    logger.info(f"Fisher embedding: d={d}, leading ratio {values[0]:.4g}")
    return Embedding(coordinates=Z, method=EmbeddingMethod.FISHER, mu=0.0, eigenvalues=values)


def embed(graphs: ClassGraphs, method: EmbeddingMethod, d: int, mu: float = 0.0) -> Embedding:
    if EmbeddingMethod(method) is EmbeddingMethod.FISHER:
        return fisher_nonlinear(graphs, d)
    return supervised_laplacian(graphs, mu, d)


def separable_pairs(emb: Embedding, labels: np.ndarray) -> SeparablePairs:
    """Class pairs whose training-coordinate ranges are strictly disjoint, per dimension"""
    labels = np.asarray(labels)
    Y = emb.coordinates
    if labels.shape != (Y.shape[0],):
        raise ArgumentError("one label per embedded training sample is required")
    classes = np.unique(labels)
    lows = {int(m): Y[labels == m].min(axis=0) for m in classes}
    highs = {int(m): Y[labels == m].max(axis=0) for m in classes}

    pairs = []
    for k in range(Y.shape[1]):
        dim_pairs = []
        for m, p in combinations(sorted(lows), 2):
            if highs[m][k] < lows[p][k] or highs[p][k] < lows[m][k]:
                dim_pairs.append((m, p))
        pairs.append(dim_pairs)
    return SeparablePairs(pairs=pairs)
