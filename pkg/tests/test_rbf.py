import numpy as np
import pytest
from scipy.spatial.distance import cdist

from app.models.embedding import SeparablePairs
from app.models.rbf import RbfInterpolator
from app.services.dataset_service import synthetic_curves
from app.services.embedding_service import separable_pairs, supervised_laplacian
from app.services.errors import (ArgumentError, DegenerateRegularizerError, FitError, ReportError,
                                 ScaleSelectionError)
from app.services.graph_service import build_class_graphs, knn_neighbors
from app.services.rbf_service import (build_kernel_matrix, clamp_scales, default_sigma_grid, evaluate,
                                      fit_coefficients, fit_interpolator, gradient_k, load_interpolator,
                                      optimize_scales, parse_sigma_grid, regularization_terms,
                                      save_interpolator)


@pytest.fixture
def toy_problem():
    """Two labeled curves with their supervised embedding, neighbor table and separable pairs"""
    ds = synthetic_curves(2, 12, 0.05, seed=1)
    X, labels = ds.samples, ds.labels
    graphs = build_class_graphs(X, labels, K=5)
    emb = supervised_laplacian(graphs, mu=0.1, d=2)
    nbrs = knn_neighbors(X, 5, labels)
    return X, labels, emb, nbrs, separable_pairs(emb, labels)


def _random_interpolator(rng, L=6, n=3, d=2, sigma=1.0):
    return RbfInterpolator(centers=rng.uniform(size=(L, n)), scales=np.full(d, sigma),
                           coeffs=rng.normal(size=(L, d)))


def test_kernel_matrix_entries():
    centers = np.array([[0.0, 0.0], [2.0, 0.0]])
    K = build_kernel_matrix(centers, np.array([[0.0, 0.0], [0.0, 2.0]]), 2.0)
    assert K[0, 0] == 1.0
    assert K[1, 0] == pytest.approx(0.367879, abs=1e-6)
    square = build_kernel_matrix(centers, centers, 0.7)
    np.testing.assert_allclose(square, square.T)
    np.testing.assert_array_equal(np.diag(square), [1.0, 1.0])
    with pytest.raises(ArgumentError):
        build_kernel_matrix(centers, centers, 0.0)


def test_identity_system_returns_targets():
    Y = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    coeffs, report = fit_coefficients(np.eye(3), Y)
    np.testing.assert_allclose(coeffs, Y)
    assert report.jitter == 0.0
    assert report.condition_estimate == pytest.approx(1.0)


def test_two_center_system_matches_closed_form_inverse():
    e = np.exp(-1.0)
    phi = build_kernel_matrix(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]), 1.0)
    coeffs, _ = fit_coefficients(phi, np.array([1.0, 0.0]))
    expected = np.array([[1.0, -e], [-e, 1.0]]) / (1.0 - e ** 2) @ np.array([1.0, 0.0])
    np.testing.assert_allclose(coeffs, expected, atol=1e-12)


def test_ill_conditioned_system_gets_jitter():
    coeffs, report = fit_coefficients(np.ones((2, 2)), np.array([1.0, 1.0]))
    assert report.jitter == pytest.approx(1e-10)
    assert np.all(np.isfinite(coeffs))


def test_residual_after_jitter_is_reported_and_logged(caplog):
    with caplog.at_level("WARNING", logger="app.services.rbf_service"):
        _, report = fit_coefficients(np.ones((2, 2)), np.array([1.0, 0.0]))
    assert report.jitter > 0.0
    assert report.residual > 1e-8
    assert "Interpolation residual" in caplog.text


def test_singular_system_raises():
    with pytest.raises(FitError):
        fit_coefficients(np.zeros((3, 3)), np.ones(3))


def test_interpolation_is_exact_on_random_configurations():
    rng = np.random.default_rng(11)
    for _ in range(20):
        N, n, d = rng.integers(5, 61), rng.integers(1, 11), rng.integers(1, 6)
        centers = rng.uniform(size=(N, n))
        targets = rng.normal(size=(N, d))
        spacing = np.sort(cdist(centers, centers), axis=1)[:, 1]
        f, reports = fit_interpolator(centers, targets, np.full(d, np.median(spacing)))
        deviation = np.max(np.abs(evaluate(f, centers) - targets))
        assert deviation <= 1e-8 * (1 + np.max(np.abs(targets)))
        assert all(report.residual <= 1e-8 * (1 + np.max(np.abs(targets))) for report in reports)
        assert len(reports) == d


def test_refit_on_own_output_reproduces_targets():
    rng = np.random.default_rng(2)
    f = _random_interpolator(rng, sigma=0.4)
    values = evaluate(f, f.centers)
    refit, _ = fit_interpolator(f.centers, values, f.scales)
    np.testing.assert_allclose(evaluate(refit, f.centers), values, atol=1e-8)


def test_evaluate_matches_direct_summation():
    rng = np.random.default_rng(3)
    f = _random_interpolator(rng, L=3, n=2, d=1, sigma=0.8)
    x = rng.uniform(size=2)
    expected = sum(f.coeffs[l, 0] * np.exp(-np.sum((x - f.centers[l]) ** 2) / 0.8 ** 2) for l in range(3))
    assert evaluate(f, x)[0] == pytest.approx(expected, rel=1e-12)
    assert evaluate(f, x).shape == (1,)


def test_evaluate_decays_far_from_centers():
    f = RbfInterpolator(centers=np.zeros((1, 2)), scales=np.array([0.5]), coeffs=np.array([[3.0]]))
    assert abs(evaluate(f, np.array([10.0, 0.0]))[0]) <= 1e-150 * 3.0


def test_gradient_vanishes_at_a_single_center():
    f = RbfInterpolator(centers=np.array([[1.0, 2.0]]), scales=np.array([0.7]), coeffs=np.array([[2.0]]))
    np.testing.assert_allclose(gradient_k(f, 0, np.array([1.0, 2.0])), 0.0)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(4)
    f = _random_interpolator(rng, L=8, n=3, d=2, sigma=0.6)
    h = 1e-5 * 0.6
    for x in rng.uniform(size=(100, 3)):
        for k in range(2):
            numeric = np.array([(evaluate(f, x + h * e)[k] - evaluate(f, x - h * e)[k]) / (2 * h)
                                for e in np.eye(3)])
            analytic = gradient_k(f, k, x)
            assert np.linalg.norm(analytic - numeric) <= 1e-5 * max(np.linalg.norm(analytic), 1e-3)


def test_gradient_is_linear_in_coefficients():
    rng = np.random.default_rng(5)
    f = _random_interpolator(rng)
    negated = RbfInterpolator(centers=f.centers, scales=f.scales, coeffs=-f.coeffs)
    X = rng.uniform(size=(4, 3))
    np.testing.assert_allclose(gradient_k(negated, 1, X), -gradient_k(f, 1, X))


def test_constant_interpolator_is_degenerate(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    f = RbfInterpolator(centers=X, scales=np.ones(2), coeffs=np.zeros((X.shape[0], 2)))
    with pytest.raises(DegenerateRegularizerError):
        regularization_terms(f, X, labels, nbrs, pairs, 1.0)


def test_aligned_gradient_contributes_one_per_point():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    labels = np.array([1, 2])
    nbrs = knn_neighbors(X, 1, labels)
    f = RbfInterpolator(centers=np.array([[2.0, 0.0]]), scales=np.array([1.5]), coeffs=np.array([[1.0]]))
    report = regularization_terms(f, X, labels, nbrs, SeparablePairs(pairs=[[]]), 1.0)
    assert report.gradient_terms[0] == pytest.approx(2.0)
    assert report.directional_terms[0] == 0.0
    report = regularization_terms(f, X, labels, nbrs, SeparablePairs(pairs=[[(1, 2)]]), 1.0)
    assert report.directional_terms[0] == pytest.approx(2.0)
    assert report.total == pytest.approx(0.0)


def test_regularizer_matches_double_loop(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    f, _ = fit_interpolator(X, emb.coordinates, [0.8, 1.2])
    report = regularization_terms(f, X, labels, nbrs, pairs, 1.0)

    def mean_abs(g, i, neighbors):
        return np.mean([abs(g @ (X[i] - X[j])) / np.linalg.norm(X[i] - X[j]) for j in neighbors])

    for k in range(2):
        G = D = 0.0
        for i in range(X.shape[0]):
            g = gradient_k(f, k, X[i])
            denominator = mean_abs(g, i, nbrs.indices[i])
            G += np.linalg.norm(g) / denominator
            for m, p in pairs.at(k):
                for source, target in ((m, p), (p, m)):
                    if labels[i] == source:
                        D += mean_abs(g, i, nbrs.class_neighbors(i, target)) / denominator
        assert report.gradient_terms[k] == pytest.approx(G, rel=1e-10)
        assert report.directional_terms[k] == pytest.approx(D, rel=1e-10, abs=1e-12)


def test_regularizer_ignores_coefficient_scale(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    f, _ = fit_interpolator(X, emb.coordinates, [1.0, 1.0])
    scaled = RbfInterpolator(centers=f.centers, scales=f.scales, coeffs=7.0 * f.coeffs)
    first = regularization_terms(f, X, labels, nbrs, pairs, 1.0)
    second = regularization_terms(scaled, X, labels, nbrs, pairs, 1.0)
    np.testing.assert_allclose(first.gradient_terms, second.gradient_terms, rtol=1e-10)
    np.testing.assert_allclose(first.directional_terms, second.directional_terms, rtol=1e-10)


def test_single_value_grid_is_returned(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    selection = optimize_scales(X, emb.coordinates, labels, nbrs, pairs, 1.0, [0.9])
    assert selection.scales == [0.9, 0.9]
    assert len(selection.candidates[0]) == 1


def test_laplacian_mode_takes_the_grid_minimum(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    grid = default_sigma_grid(X, nbrs, 8)
    selection = optimize_scales(X, emb.coordinates, labels, nbrs, pairs, 1.0, grid)
    for k, candidates in enumerate(selection.candidates):
        admissible = [c for c in candidates if c.admissible]
        best = min(admissible, key=lambda c: c.gradient_term - c.directional_term)
        assert selection.raw_scales[k] == best.sigma


def test_fisher_mode_without_admissible_scale_fails(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    with pytest.raises(ScaleSelectionError):
        optimize_scales(X, emb.coordinates, labels, nbrs, pairs, 1.0, [0.5, 1.0],
                        method="fisher", threshold=1e9)


def test_optimize_scales_rejects_unsorted_grid(toy_problem):
    X, labels, emb, nbrs, pairs = toy_problem
    with pytest.raises(ArgumentError):
        optimize_scales(X, emb.coordinates, labels, nbrs, pairs, 1.0, [1.0, 0.5])


def test_clamp_scales():
    values = [1.0, 1.0, 1.0, 100.0]
    upper = np.mean(values) + 2 * np.std(values)
    np.testing.assert_allclose(clamp_scales(values), [1.0, 1.0, 1.0, min(100.0, upper)])

    values = [1.0] * 9 + [100.0]
    clamped = clamp_scales(values)
    assert clamped[-1] == pytest.approx(np.mean(values) + 2 * np.std(values))
    np.testing.assert_array_equal(clamped[:9], 1.0)


def test_default_sigma_grid_spans_neighbor_to_diameter_scales(toy_problem):
    X, _, _, nbrs, _ = toy_problem
    grid = default_sigma_grid(X, nbrs)
    assert len(grid) == 20
    assert grid[0] == pytest.approx(0.5 * np.median(nbrs.distances))
    assert grid[-1] == pytest.approx(5 * cdist(X, X).max())
    assert np.all(np.diff(grid) > 0)


def test_parse_sigma_grid():
    np.testing.assert_allclose(parse_sigma_grid("0.1:10:3"), [0.1, 1.0, 10.0])
    for text in ("0:1:3", "1:2", "a:b:c", "2:1:4"):
        with pytest.raises(ArgumentError):
            parse_sigma_grid(text)


def test_interpolator_file_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    f = _random_interpolator(rng, L=5, n=4, d=3)
    path = tmp_path / "model.bin"
    save_interpolator(f, path)
    loaded = load_interpolator(path)
    np.testing.assert_array_equal(loaded.centers, f.centers)
    np.testing.assert_array_equal(loaded.scales, f.scales)
    np.testing.assert_array_equal(loaded.coeffs, f.coeffs)
    assert path.stat().st_size == 8 + 24 + 8 * (3 + 5 * 4 + 5 * 3)


def test_load_interpolator_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.bin"
    path.write_bytes(b"something else entirely")
    with pytest.raises(ReportError):
        load_interpolator(path)
