"""Comparison strategies: embedding extensions (RBF fit, LLE, Nystrom, kernel ridge) and direct
classifiers (ambient nearest neighbor, Gaussian-fields label propagation)."""

import logging
import warnings
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from app.models.baseline import ExtensionStrategy, StrategyTag
from app.models.dataset import Dataset
from app.models.embedding import Embedding
from app.models.rbf import RbfInterpolator
from app.models.sosi import LabelState, SosiConfig
from app.services import sosi_service
from app.services.errors import ArgumentError, ExtensionError, SslError
from app.services.graph_service import default_kernel_scale, gaussian_knn_graph, knn_neighbors
from app.services.rbf_service import build_kernel_matrix

logger = logging.getLogger(__name__)

LLE_REGULARIZATION = 1e-9
SSL_JITTER = 1e-9


def extend_rbf_fit(X_train: np.ndarray, labels_train: np.ndarray, emb: Embedding,
                   config: Optional[SosiConfig] = None) -> RbfInterpolator:
    """The SOSI first-iteration interpolator, fitted to the labeled samples alone"""
    return sosi_service.fit_initial_interpolator(X_train, labels_train, emb, config or SosiConfig()).interpolator


def lle_weights(x: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Sum-to-one reconstruction weights of x from its neighbors (signs unrestricted)"""
    k = neighbors.shape[0]
    if k == 1:
        return np.ones(1)
    Z = neighbors - x
    C = Z @ Z.T
    C = C + LLE_REGULARIZATION * np.trace(C) * np.eye(k)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            w = scipy.linalg.solve(C, np.ones(k), assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
        raise ExtensionError(f"local Gram matrix is singular: {e}") from e
    return w / w.sum()


def extend_lle(X_train: np.ndarray, Y_train: np.ndarray, x: np.ndarray, neighbors: int = 5) -> np.ndarray:
    """Embed x (a point, or the rows of a matrix) with LLE weights over its ambient nearest neighbors"""
    if not 1 <= neighbors <= X_train.shape[0]:
        raise ArgumentError(f"LLE neighbor count must lie in 1..{X_train.shape[0]}")
    x = np.asarray(x, dtype=np.float64)
    queries = np.atleast_2d(x)
    order = np.argsort(cdist(queries, X_train), axis=1, kind="stable")[:, :neighbors]
    out = np.vstack([lle_weights(q, X_train[idx]) @ Y_train[idx] for q, idx in zip(queries, order)])
    return out[0] if x.ndim == 1 else out


def extend_nystrom(X_train: np.ndarray, Y_train: np.ndarray, x: np.ndarray, kernel_scale: float) -> np.ndarray:
    """Kernel-weighted average of training coordinates, weights normalized to sum 1"""
    if kernel_scale <= 0:
        raise ArgumentError("kernel scale must be positive")
    x = np.asarray(x, dtype=np.float64)
    V = build_kernel_matrix(X_train, np.atleast_2d(x), kernel_scale)
    totals = V.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ExtensionError("every kernel weight underflows to zero; increase the kernel scale")
    out = (V / totals) @ Y_train
    return out[0] if x.ndim == 1 else out


def classify_nn_ambient(X_train: np.ndarray, labels_train: np.ndarray, x: np.ndarray):
    """Label of the nearest training sample in the original space (lower index on ties)"""
    if X_train.shape[0] == 0:
        raise ArgumentError("training set is empty")
    x = np.asarray(x, dtype=np.float64)
    nearest = np.argmin(cdist(np.atleast_2d(x), X_train), axis=1)
    labels = np.asarray(labels_train)[nearest]
    return int(labels[0]) if x.ndim == 1 else labels


def kernel_ridge(X_train: np.ndarray, targets: np.ndarray, ridge: float, kernel_scale: float,
                 x: np.ndarray) -> np.ndarray:
    """y^T (K + aI)^-1 v with Gaussian K and v; a point gives one value per target column"""
    if ridge < 0:
        raise ArgumentError("ridge must be nonnegative")
    K = build_kernel_matrix(X_train, X_train, kernel_scale) + ridge * np.eye(X_train.shape[0])
    try:
        alpha = scipy.linalg.solve(K, targets, assume_a="sym")
    except np.linalg.LinAlgError as e:
        raise ExtensionError(f"kernel matrix plus ridge is singular: {e}") from e
    x = np.asarray(x, dtype=np.float64)
    out = build_kernel_matrix(X_train, np.atleast_2d(x), kernel_scale) @ alpha
    return out[0] if x.ndim == 1 else out


def harmonic_scores(W: np.ndarray, labels_train: np.ndarray, class_count: int,
                    class_mass: bool = False) -> np.ndarray:
    """Harmonic class scores f_u = (D_uu - W_uu)^-1 W_ul f_l of the unlabeled nodes.

    Labeled nodes are the first ``len(labels_train)`` rows of W.
    """
    W = np.asarray(W, dtype=np.float64)
    n_l = len(labels_train)
    F_l = np.zeros((n_l, class_count))
    F_l[np.arange(n_l), np.asarray(labels_train) - 1] = 1.0
    W_uu, W_ul = W[n_l:, n_l:], W[n_l:, :n_l]
    if W_uu.shape[0] == 0:
        return np.zeros((0, class_count))
    A = np.diag(W[n_l:].sum(axis=1)) - W_uu
    B = W_ul @ F_l

    try:
        F_u = _solve_strict(A, B)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        logger.warning(f"Unlabeled block is singular; retrying with jitter {SSL_JITTER}")
        try:
            F_u = _solve_strict(A + SSL_JITTER * np.eye(A.shape[0]), B)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
            raise SslError(f"unlabeled block is singular after jitter: {e}") from e

    if class_mass:
        prior = F_l.mean(axis=0)
        mass = F_u.sum(axis=0)
        F_u = F_u * np.where(mass > 0, prior / np.where(mass > 0, mass, 1.0), 0.0)
    return F_u


def _solve_strict(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        return scipy.linalg.solve(A, B)


def harmonic_labels(W: np.ndarray, labels_train: np.ndarray, class_count: int,
                    class_mass: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Arg-max class of the harmonic scores (lower class id on ties) and the scores themselves"""
    F_u = harmonic_scores(W, labels_train, class_count, class_mass)
    return np.argmax(F_u, axis=1) + 1, F_u


def ssl_gaussian_fields(X_all: np.ndarray, labels_train: np.ndarray, class_count: int, neighbors: int = 7,
                        kernel_scale: Optional[float] = None, class_mass: bool = False) -> np.ndarray:
    """Labels of rows N+1..Q by harmonic propagation over a Gaussian K-NN graph of all samples"""
    X_all = np.asarray(X_all, dtype=np.float64)
    nbrs = knn_neighbors(X_all, min(neighbors, X_all.shape[0] - 1))
    scale = kernel_scale if kernel_scale is not None else default_kernel_scale(nbrs)
    labels, _ = harmonic_labels(gaussian_knn_graph(X_all, nbrs, scale), labels_train, class_count, class_mass)
    return labels


def _harmonic_confidence(F_u: np.ndarray) -> np.ndarray:
    # best over runner-up class score; +inf when the runner-up is zero
    ordered = np.sort(F_u, axis=1)
    best, second = ordered[:, -1], ordered[:, -2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(second > 0, best / np.where(second > 0, second, 1.0), np.inf)
    return np.maximum(ratio, 1.0)


def run_strategy(strategy: ExtensionStrategy, ds: Dataset, emb: Embedding,
                 config: Optional[SosiConfig] = None, graph_scale: Optional[float] = None) -> LabelState:
    """Labels and confidence scores of every sample of ``ds`` under one strategy.

    Embedding extensions score unlabeled samples with the distance-ratio
    confidence applied to their own map of the training and query samples.
    """
    config = config or SosiConfig()
    tag = StrategyTag(strategy.tag)
    X_train, labels_train, X_query = ds.training_samples, ds.training_labels, ds.unlabeled_samples
    Y = emb.coordinates
    scale = strategy.kernel_scale or graph_scale

    if tag is StrategyTag.SOSI:
        return sosi_service.run(ds, emb, config).state
    if tag is StrategyTag.SSL_GF:
        if ds.class_count < 2:
            raise ArgumentError("label propagation needs at least two classes")
        nbrs = knn_neighbors(ds.samples, min(config.knn, ds.sample_count - 1))
        W = gaussian_knn_graph(ds.samples, nbrs, scale or default_kernel_scale(nbrs))
        labels, F_u = harmonic_labels(W, labels_train, ds.class_count, strategy.class_mass)
        return sosi_service.label_state(labels_train, labels, _harmonic_confidence(F_u))
    if tag is StrategyTag.NN_AMBIENT:
        labels, scores = sosi_service.nearest_label_confidence(X_query, X_train, labels_train)
        return sosi_service.label_state(labels_train, labels, scores)

    if tag is StrategyTag.RBF_FIT:
        f = extend_rbf_fit(X_train, labels_train, emb, config)
        labels, scores = sosi_service.nn_classify_confidence(f, X_train, labels_train, X_query)
        return sosi_service.label_state(labels_train, labels, scores)

    if tag is StrategyTag.LLE:
        k = min(strategy.neighbors, X_train.shape[0])

        def extension(points):
            return extend_lle(X_train, Y, points, k)
    elif tag is StrategyTag.NYSTROM:
        if scale is None:
            raise ArgumentError("Nystrom extension needs a kernel scale")

        def extension(points):
            return extend_nystrom(X_train, Y, points, scale)
    elif tag is StrategyTag.KERNEL_RIDGE:
        if scale is None:
            raise ArgumentError("kernel ridge needs a kernel scale")

        def extension(points):
            return kernel_ridge(X_train, Y, strategy.ridge, scale, points)
    else:
        raise ArgumentError(f"unknown strategy {tag}")

    F_query = extension(X_query) if X_query.shape[0] else np.zeros((0, emb.dim))
    labels, scores = sosi_service.nearest_label_confidence(F_query, extension(X_train), labels_train)
    return sosi_service.label_state(labels_train, labels, scores)
