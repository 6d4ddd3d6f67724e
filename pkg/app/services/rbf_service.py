"""Gaussian RBF interpolation of an embedding and direction-aware selection of its scales.

f^k(x) = sum_l c_l^k exp(-||x - a_l||^2 / (sigma^k)^2). The coefficients come
from the exact interpolation system Phi^k c^k = y^k; the scale of each
dimension is chosen on a grid by the regularizer G - lambda * D, where G is
the normalized gradient magnitude at training points and D the normalized
derivative towards neighbors of separable classes.
"""

import logging
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from app.models.embedding import EmbeddingMethod, SeparablePairs
from app.models.graph import NeighborTable
from app.models.rbf import (FitReport, RbfInterpolator, RegularizerReport, ScaleCandidate,
                            ScaleSelection)
from app.services.errors import (ArgumentError, DegenerateRegularizerError, FitError, ReportError,
                                 ScaleSelectionError)

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
DENOMINATOR_FLOOR = 1e-12
RESIDUAL_TOLERANCE = 1e-8
FILE_MAGIC = b"SOSIRBF1"


def build_kernel_matrix(centers: np.ndarray, eval_points: np.ndarray, sigma: float) -> np.ndarray:
    """Entry (i, l) is exp(-||x_i - a_l||^2 / sigma^2)"""
    if sigma <= 0:
        raise ArgumentError("kernel scale must be positive")
    sq = cdist(np.atleast_2d(eval_points), np.atleast_2d(centers), "sqeuclidean")
    return np.exp(-sq / sigma ** 2)


def _factor(phi: np.ndarray) -> Tuple[Tuple[np.ndarray, np.ndarray], float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu_piv = scipy.linalg.lu_factor(phi)
    rcond, _ = scipy.linalg.lapack.dgecon(lu_piv[0], np.linalg.norm(phi, 1), norm="1")
    return lu_piv, (np.inf if rcond <= 0 else 1.0 / rcond)


def fit_coefficients(phi: np.ndarray, Y: np.ndarray) -> Tuple[np.ndarray, FitReport]:
    """Solve Phi c = y for every column of Y by pivoted LU.

    A 1-norm condition estimate above 1e12 triggers one retry with a ridge
    of 1e-10 * trace(Phi) / L on the diagonal; the jitter is reported.
    """
    phi = np.asarray(phi, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ArgumentError("kernel matrix must be square")
    if Y.shape[0] != phi.shape[0]:
        raise ArgumentError("one target row per center is required")

    size = phi.shape[0]
    lu_piv, condition = _factor(phi)
    jitter = 0.0
    if condition > CONDITION_LIMIT:
        jitter = 1e-10 * float(np.trace(phi)) / size
        logger.warning(f"Kernel matrix condition {condition:.3g} exceeds {CONDITION_LIMIT:.0e}; "
                       f"retrying with jitter {jitter:.3g}")
        lu_piv, condition = _factor(phi + jitter * np.eye(size))
        if not np.isfinite(condition):
            raise FitError("kernel matrix is singular even after jitter")

    coeffs = scipy.linalg.lu_solve(lu_piv, Y)
    if not np.all(np.isfinite(coeffs)):
        raise FitError("interpolation system produced non-finite coefficients")
    residual = float(np.max(np.abs(phi @ coeffs - Y), initial=0.0))
    bound = RESIDUAL_TOLERANCE * (1.0 + float(np.max(np.abs(Y), initial=0.0)))
    if residual > bound:
        logger.warning(f"Interpolation residual {residual:.3g} exceeds {bound:.3g} (jitter {jitter:.3g})")
    return coeffs, FitReport(condition_estimate=float(condition), jitter=jitter, residual=residual)


def fit_interpolator(centers: np.ndarray, targets: np.ndarray,
                     scales: Sequence[float]) -> Tuple[RbfInterpolator, List[FitReport]]:
    """Exact interpolator through (centers, targets) with the given per-dimension scales"""
    centers = np.asarray(centers, dtype=np.float64)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64).T).T
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (targets.shape[1],):
        raise ArgumentError("one scale per target dimension is required")

    coeffs = np.zeros_like(targets)
    reports: Dict[int, FitReport] = {}
    for sigma in np.unique(scales):
        dims = np.flatnonzero(scales == sigma)
        phi = build_kernel_matrix(centers, centers, sigma)
        coeffs[:, dims], report = fit_coefficients(phi, targets[:, dims])
        for k in dims:
            reports[int(k)] = report
    f = RbfInterpolator(centers=centers, scales=scales, coeffs=coeffs)
    return f, [reports[k] for k in range(len(scales))]


def evaluate(f: RbfInterpolator, x: np.ndarray) -> np.ndarray:
    """f(x) for a point (returns d values) or for the rows of a matrix (returns m x d)"""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    sq = cdist(np.atleast_2d(x), f.centers, "sqeuclidean")
    out = np.empty((sq.shape[0], f.dim))
    for sigma in np.unique(f.scales):
        dims = np.flatnonzero(f.scales == sigma)
        out[:, dims] = np.exp(-sq / sigma ** 2) @ f.coeffs[:, dims]
    return out[0] if single else out


def _gradients(X: np.ndarray, centers: np.ndarray, kernel: np.ndarray,
               coeff: np.ndarray, sigma: float) -> np.ndarray:
    # sum_l c_l phi_l(x) (x - a_l) * (-2 / sigma^2), rows of X at once
    weighted = kernel * coeff[None, :]
    return (-2.0 / sigma ** 2) * (weighted.sum(axis=1)[:, None] * X - weighted @ centers)


def gradient_k(f: RbfInterpolator, k: int, x: np.ndarray) -> np.ndarray:
    """Analytic gradient of f^k at a point (n values) or at the rows of a matrix (m x n)"""
    if not 0 <= k < f.dim:
        raise ArgumentError(f"dimension {k} out of range")
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    sigma = float(f.scales[k])
    kernel = build_kernel_matrix(f.centers, X, sigma)
    grads = _gradients(X, f.centers, kernel, f.coeffs[:, k], sigma)
    return grads[0] if x.ndim == 1 else grads


class RegularizerGeometry:
    """Neighbor directions at the training points, shared by every evaluation of G and D"""

    def __init__(self, X: np.ndarray, labels: np.ndarray, nbrs: NeighborTable):
        self.X = np.asarray(X, dtype=np.float64)
        self.labels = np.asarray(labels)
        if nbrs.indices.shape[0] != self.X.shape[0] or self.labels.shape != (self.X.shape[0],):
            raise ArgumentError("neighbor table and labels must cover every training point")
        self.indices = nbrs.indices
        self.norms = self._norms(self.indices)
        self.class_tables = {p: (table, self._norms(table)) for p, table in nbrs.class_indices.items()}

    def _norms(self, table: np.ndarray) -> np.ndarray:
        safe = np.where(table < 0, 0, table)
        norms = np.linalg.norm(self.X[:, None, :] - self.X[safe], axis=2)
        return np.where(table < 0, np.nan, norms)

    def _mean_abs_derivative(self, grads: np.ndarray, table: np.ndarray, norms: np.ndarray) -> np.ndarray:
        # |<g_i, (x_i - x_j) / ||x_i - x_j||>| averaged over the valid neighbors j of each row
        safe = np.where(table < 0, 0, table)
        along = (np.einsum("in,in->i", grads, self.X)[:, None]
                 - np.einsum("in,ikn->ik", grads, self.X[safe]))
        ratio = np.abs(along) / norms
        valid = ~np.isnan(ratio)
        counts = valid.sum(axis=1)
        sums = np.where(valid, ratio, 0.0).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def terms(self, grads: np.ndarray, pairs: Sequence[Tuple[int, int]]) -> Tuple[float, float, int]:
        """(G, D, number of skipped points) for one output dimension"""
        mean_abs = self._mean_abs_derivative(grads, self.indices, self.norms)
        active = mean_abs >= DENOMINATOR_FLOOR
        skipped = int((~active).sum())
        if not active.any():
            raise DegenerateRegularizerError("every training point has a vanishing mean directional derivative")

        grad_norms = np.linalg.norm(grads, axis=1)
        G = float(np.sum(grad_norms[active] / mean_abs[active]))

        D = 0.0
        towards: Dict[int, np.ndarray] = {}
        for m, p in pairs:
            for source, target in ((m, p), (p, m)):
                if target not in self.class_tables:
                    continue
                if target not in towards:
                    table, norms = self.class_tables[target]
                    towards[target] = self._mean_abs_derivative(grads, table, norms)
                rows = active & (self.labels == source) & ~np.isnan(towards[target])
                D += float(np.sum(towards[target][rows] / mean_abs[rows]))
        return G, D, skipped


def regularization_terms(f: RbfInterpolator, X_train: np.ndarray, labels: np.ndarray,
                         nbrs: NeighborTable, pairs: SeparablePairs, weight: float,
                         geometry: Optional[RegularizerGeometry] = None) -> RegularizerReport:
    geometry = geometry or RegularizerGeometry(X_train, labels, nbrs)
    X = geometry.X
    G_terms, D_terms, skipped = [], [], []
    for k in range(f.dim):
        grads = gradient_k(f, k, X)
        G, D, dropped = geometry.terms(grads, pairs.at(k))
        if dropped:
            logger.warning(f"Regularizer dimension {k}: skipped {dropped} points with vanishing derivatives")
        G_terms.append(G)
        D_terms.append(D)
        skipped.append(dropped)
    return RegularizerReport(gradient_terms=G_terms, directional_terms=D_terms,
                             skipped_points=skipped, weight=weight)


def clamp_scales(values: Sequence[float]) -> np.ndarray:
    """Bound scales to mean +/- 2 standard deviations across dimensions"""
    values = np.asarray(values, dtype=np.float64)
    mean, std = values.mean(), values.std()
    return np.clip(values, mean - 2 * std, mean + 2 * std)


def optimize_scales(X_train: np.ndarray, Y_train: np.ndarray, labels: np.ndarray,
                    nbrs: NeighborTable, pairs: SeparablePairs, weight: float,
                    sigma_grid: Sequence[float],
                    method: EmbeddingMethod = EmbeddingMethod.SUPERVISED_LAPLACIAN,
                    threshold: float = 0.5) -> ScaleSelection:
    """Grid search of one common scale per dimension.

    Supervised-Laplacian embeddings take the arg-min of G - lambda D; Fisher
    embeddings take the largest scale whose D / G ratio stays at or above
    ``threshold``. The selected scales are clamped across dimensions.
    """
    grid = [float(s) for s in sigma_grid]
    if not grid or any(s <= 0 for s in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ArgumentError("sigma grid must be nonempty, positive and ascending")
    X = np.asarray(X_train, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(Y_train, dtype=np.float64).T).T
    d = Y.shape[1]
    geometry = RegularizerGeometry(X, labels, nbrs)

    candidates: List[List[ScaleCandidate]] = [[] for _ in range(d)]
    for sigma in grid:
        phi = build_kernel_matrix(X, X, sigma)
        try:
            coeffs, _ = fit_coefficients(phi, Y)
        except FitError as e:
            logger.warning(f"sigma={sigma:.4g} rejected: {e}")
            for k in range(d):
                candidates[k].append(ScaleCandidate(sigma=sigma, gradient_term=np.nan,
                                                    directional_term=np.nan, admissible=False))
            continue
        for k in range(d):
            grads = _gradients(X, X, phi, coeffs[:, k], sigma)
            try:
                G, D, _ = geometry.terms(grads, pairs.at(k))
                candidates[k].append(ScaleCandidate(sigma=sigma, gradient_term=G, directional_term=D))
                logger.debug(f"dim {k} sigma={sigma:.4g}: G={G:.4g} D={D:.4g}")
            except DegenerateRegularizerError:
                candidates[k].append(ScaleCandidate(sigma=sigma, gradient_term=np.nan,
                                                    directional_term=np.nan, admissible=False))

    chosen = []
    for k in range(d):
        admissible = [c for c in candidates[k] if c.admissible]
        if EmbeddingMethod(method) is EmbeddingMethod.FISHER:
            passing = [c for c in admissible if c.directional_term >= threshold * c.gradient_term]
            if not passing:
                raise ScaleSelectionError(f"no scale keeps D/G >= {threshold} in dimension {k}")
            chosen.append(passing[-1].sigma)
        else:
            if not admissible:
                raise ScaleSelectionError(f"every scale is degenerate in dimension {k}")
            objective = [c.gradient_term - weight * c.directional_term for c in admissible]
            chosen.append(admissible[int(np.argmin(objective))].sigma)

    clamped = clamp_scales(chosen)
    logger.info(f"Selected scales {np.round(clamped, 4).tolist()}")
    return ScaleSelection(scales=clamped.tolist(), raw_scales=chosen, candidates=candidates)


def default_sigma_grid(X_train: np.ndarray, nbrs: NeighborTable, count: int = 20) -> List[float]:
    """Log-spaced from half the median K-NN distance to five times the training diameter"""
    if count < 1:
        raise ArgumentError("grid size must be positive")
    low = 0.5 * float(np.median(nbrs.distances))
    high = 5.0 * float(pdist(np.asarray(X_train, dtype=np.float64)).max())
    if low <= 0 or high <= low:
        raise ArgumentError("training samples do not span a usable scale range")
    return np.geomspace(low, high, count).tolist()


def parse_sigma_grid(text: str) -> List[float]:
    """``lo:hi:count`` to a log-spaced grid"""
    try:
        low, high, count = text.split(":")
        low, high, count = float(low), float(high), int(count)
    except ValueError:
        raise ArgumentError(f"sigma grid {text!r} is not of the form lo:hi:count")
    if low <= 0 or high < low or count < 1 or (count > 1 and high == low):
        raise ArgumentError(f"sigma grid {text!r} must satisfy 0 < lo < hi and count >= 1")
    return np.geomspace(low, high, count).tolist()


def save_interpolator(f: RbfInterpolator, path) -> None:
    """Header (magic, L, n, d, scales) then centers and coefficients, little-endian float64, row-major"""
    L, n = f.centers.shape
    with open(path, "wb") as fh:
        fh.write(FILE_MAGIC)
        fh.write(np.array([L, n, f.dim], dtype="<u8").tobytes())
        fh.write(np.asarray(f.scales, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(f.centers, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(f.coeffs, dtype="<f8").tobytes())


def load_interpolator(path) -> RbfInterpolator:
    raw = Path(path).read_bytes()
    if not raw.startswith(FILE_MAGIC):
        raise ReportError(f"{path} is not an interpolator file")
    offset = len(FILE_MAGIC)
    if len(raw) < offset + 24:
        raise ReportError(f"{path} is truncated")
    L, n, d = (int(v) for v in np.frombuffer(raw, dtype="<u8", count=3, offset=offset))
    offset += 24
    expected = offset + 8 * (d + L * n + L * d)
    if len(raw) != expected:
        raise ReportError(f"{path} is truncated or has trailing data")
    floats = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64)
    scales = floats[:d]
    centers = floats[d:d + L * n].reshape(L, n)
    coeffs = floats[d + L * n:].reshape(L, d)
    return RbfInterpolator(centers=centers, scales=scales, coeffs=coeffs)
