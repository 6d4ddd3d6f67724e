"""Semi-supervised out-of-sample interpolation.

The interpolator is first fitted on the labeled samples only. Each later
iteration admits the most confident unlabeled samples as extra centers,
embeds them through their projection onto the estimated class, refits and
reclassifies every sample.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from app.models.dataset import Dataset
from app.models.embedding import Embedding
from app.models.graph import NeighborTable
from app.models.rbf import FitReport, RbfInterpolator, ScaleSelection
from app.models.sosi import IterationTrace, LabelState, ProjectionResult, SosiConfig, SosiResult
from app.services.embedding_service import separable_pairs
from app.services.errors import ArgumentError, ReportError
from app.services.graph_service import knn_neighbors
from app.services.rbf_service import default_sigma_grid, evaluate, fit_interpolator, optimize_scales

logger = logging.getLogger(__name__)

QP_TOLERANCE = 1e-10
QP_MAX_ITERATIONS = 10000


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based)"""
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    ranks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - cumulative / ranks > 0)[-1]
    theta = cumulative[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def simplex_least_squares(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """argmin over the simplex of ||x - sum_i v_i points_i||^2 by projected gradient.

    ``points`` is sorted by distance to x; the descent starts at the nearest one.
    """
    B = (points - x).T  # on the simplex, x - sum v_i p_i = -B v
    gram = B.T @ B
    top = float(np.linalg.eigvalsh(gram)[-1])
    w = np.zeros(points.shape[0])
    w[0] = 1.0
    if top <= 0:
        return w
    step = 1.0 / (2.0 * top)
    objective = float(w @ gram @ w)
    for _ in range(QP_MAX_ITERATIONS):
        w_next = project_to_simplex(w - step * 2.0 * (gram @ w))
        value = float(w_next @ gram @ w_next)
        decrease = objective - value
        w, objective = w_next, value
        if decrease < QP_TOLERANCE:
            break
    return w / w.sum()


def project_onto_class(x: np.ndarray, class_id: int, X_train: np.ndarray, labels_train: np.ndarray,
                       Y_train: np.ndarray, neighbors: int = 5) -> ProjectionResult:
    """Project x onto the class manifold spanned by its nearest class members and embed the projection"""
    members = np.flatnonzero(np.asarray(labels_train) == class_id)
    if members.size == 0:
        raise ArgumentError(f"class {class_id} has no training samples")
    k = min(neighbors, members.size)
    dist = np.linalg.norm(X_train[members] - x, axis=1)
    nearest = members[np.argsort(dist, kind="stable")[:k]]
    w = simplex_least_squares(x, X_train[nearest])
    return ProjectionResult(neighbors=nearest, weights=w, target=w @ Y_train[nearest])


def nearest_label_confidence(F_query: np.ndarray, F_train: np.ndarray,
                             labels_train: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-training label and distance ratio (other class / nearest) for every query row"""
    labels_train = np.asarray(labels_train)
    if np.unique(labels_train).size < 2:
        raise ArgumentError("confidence scores need at least two training classes")
    F_query = np.atleast_2d(F_query)
    if F_query.shape[0] == 0:
        return np.empty(0, dtype=int), np.empty(0)

    dist = cdist(F_query, np.atleast_2d(F_train))
    nearest = np.argmin(dist, axis=1)  # first index among ties
    labels = labels_train[nearest]
    near = dist[np.arange(len(nearest)), nearest]
    other = np.where(labels_train[None, :] != labels[:, None], dist, np.inf).min(axis=1)
    with np.errstate(divide="ignore"):
        scores = np.where(near == 0, np.inf, other / np.where(near == 0, 1.0, near))
    return labels, scores


def nn_classify_confidence(f: RbfInterpolator, X_train: np.ndarray, labels_train: np.ndarray,
                           X_query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Classify through the interpolator: compare f(x_i) with f(x_j) over training samples"""
    if np.atleast_2d(X_query).shape[0] == 0:
        return nearest_label_confidence(np.empty((0, f.dim)), np.empty((0, f.dim)), labels_train)
    return nearest_label_confidence(evaluate(f, np.atleast_2d(X_query)), evaluate(f, X_train), labels_train)


def label_state(labels_train: np.ndarray, labels_query: np.ndarray, scores_query: np.ndarray) -> LabelState:
    """Full-length state; training entries carry the +inf confidence sentinel"""
    labels = np.concatenate([np.asarray(labels_train, dtype=int), np.asarray(labels_query, dtype=int)])
    scores = np.concatenate([np.full(len(labels_train), np.inf), np.asarray(scores_query, dtype=float)])
    return LabelState(labels=labels, scores=scores)


def build_schedule(labeled: int, total: int, config: SosiConfig) -> List[int]:
    """Center counts L_1 = N < ... <= Q, cut at the early-stop count"""
    if config.schedule is not None:
        schedule = list(config.schedule)
        if schedule[0] != labeled or schedule[-1] != total:
            raise ArgumentError(f"schedule must run from N={labeled} to Q={total}")
    else:
        schedule = sorted(set(int(round(v)) for v in np.linspace(labeled, total, config.iterations)))
    if total == labeled or len(schedule) == 1:
        return [labeled]

    limit = labeled + config.early_stop_fraction * (total - labeled)
    cut = min(total, math.ceil(limit - 1e-9))
    kept = [count for count in schedule if count < cut]
    return kept + [cut]


class InitialFit:
    """Iteration-1 products shared by SOSI and the RBF-fit baseline"""

    def __init__(self, interpolator: RbfInterpolator, selection: ScaleSelection,
                 reports: List[FitReport], neighbors: NeighborTable):
        self.interpolator = interpolator
        self.selection = selection
        self.reports = reports
        self.neighbors = neighbors


def _select_scales(X: np.ndarray, labels: np.ndarray, Y: np.ndarray, emb: Embedding,
                   config: SosiConfig) -> Tuple[ScaleSelection, NeighborTable]:
    K = min(config.knn, X.shape[0] - 1)
    if K < 1:
        raise ArgumentError("at least two centers are needed to select scales")
    nbrs = knn_neighbors(X, K, labels)
    coords = Embedding(coordinates=Y, method=emb.method, mu=emb.mu, eigenvalues=emb.eigenvalues)
    pairs = separable_pairs(coords, labels)
    grid = config.sigma_grid or default_sigma_grid(X, nbrs, config.grid_size)
    selection = optimize_scales(X, Y, labels, nbrs, pairs, config.weight, grid,
                                method=emb.method, threshold=config.fisher_threshold)
    return selection, nbrs


def fit_initial_interpolator(X_train: np.ndarray, labels_train: np.ndarray, emb: Embedding,
                             config: SosiConfig) -> InitialFit:
    Y = emb.coordinates
    if Y.shape[0] != X_train.shape[0]:
        raise ArgumentError("embedding and training set disagree on N")
    selection, nbrs = _select_scales(X_train, labels_train, Y, emb, config)
    f, reports = fit_interpolator(X_train, Y, selection.scales)
    return InitialFit(f, selection, reports, nbrs)


def run(ds: Dataset, emb: Embedding, config: Optional[SosiConfig] = None) -> SosiResult:
    config = config or SosiConfig()
    N, Q = ds.labeled_count, ds.sample_count
    X, X_train, labels_train = ds.samples, ds.training_samples, ds.training_labels
    Y = emb.coordinates
    if Y.shape[0] != N:
        raise ArgumentError("embedding and dataset disagree on N")
    if np.unique(labels_train).size != ds.class_count:
        raise ArgumentError("embedding covers fewer classes than the dataset")

    schedule = build_schedule(N, Q, config)
    initial = fit_initial_interpolator(X_train, labels_train, emb, config)
    f, scales = initial.interpolator, np.asarray(initial.selection.scales)
    labels, scores = nn_classify_confidence(f, X_train, labels_train, ds.unlabeled_samples)
    state = label_state(labels_train, labels, scores)
    trace = [IterationTrace(iteration=1, center_indices=np.arange(N), labels=state.labels,
                            scores=state.scores, scales=scales, fit=initial.reports)]
    logger.info(f"SOSI iteration 1: {N} centers, schedule {schedule}")

    admitted = np.empty(0, dtype=int)
    for r, count in enumerate(schedule[1:], start=2):
        waiting = np.setdiff1d(np.arange(N, Q), admitted)
        # highest confidence first, ascending index among ties
        order = np.lexsort((waiting, -state.scores[waiting]))
        admitted = np.concatenate([admitted, waiting[order[: count - N - admitted.size]]])

        projections = [project_onto_class(X[i], int(state.labels[i]), X_train, labels_train, Y,
                                          config.projection_neighbors) for i in admitted]
        centers = np.vstack([X_train, X[admitted]])
        targets = np.vstack([Y] + [p.target[None, :] for p in projections])
        if config.reoptimize_scales:
            center_labels = np.concatenate([labels_train, state.labels[admitted]])
            scales = np.asarray(_select_scales(centers, center_labels, targets, emb, config)[0].scales)
        f, reports = fit_interpolator(centers, targets, scales)

        labels, scores = nn_classify_confidence(f, X_train, labels_train, ds.unlabeled_samples)
        state = label_state(labels_train, labels, scores)
        trace.append(IterationTrace(iteration=r, center_indices=np.concatenate([np.arange(N), admitted]),
                                    labels=state.labels, scores=state.scores, scales=scales,
                                    fit=reports, projections=projections))
        logger.info(f"SOSI iteration {r}: {centers.shape[0]} centers")

    return SosiResult(interpolator=f, state=state, trace=trace)


def trace_frame(trace: Sequence[IterationTrace], point_ids: Optional[np.ndarray] = None) -> pd.DataFrame:
    """One row per (iteration, point): label and confidence, training points scored 'inf'"""
    frames = []
    for step in trace:
        ids = point_ids if point_ids is not None else np.arange(step.labels.size)
        frames.append(pd.DataFrame({"iteration": step.iteration, "point": ids,
                                    "label": step.labels, "confidence": step.scores}))
    if not frames:
        return pd.DataFrame(columns=["iteration", "point", "label", "confidence"])
    return pd.concat(frames, ignore_index=True)


def write_trace(trace: Sequence[IterationTrace], path, point_ids: Optional[np.ndarray] = None) -> None:
    try:
        trace_frame(trace, point_ids).to_csv(path, index=False, float_format="%.10g")
    except OSError as e:
        raise ReportError(f"Cannot write {path}: {e}") from e
