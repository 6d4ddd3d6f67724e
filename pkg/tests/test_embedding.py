import numpy as np
import pytest
import scipy.linalg

from app.models.embedding import Embedding, EmbeddingMethod
from app.services.embedding_service import embed, fisher_nonlinear, separable_pairs, supervised_laplacian
from app.services.errors import ArgumentError, EmbeddingError
from app.services.graph_service import build_class_graphs


@pytest.fixture
def overlapping_graphs():
    """12 points, 2 nearby classes: every point has same-class and other-class neighbors"""
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(0.0, 0.5, (6, 2)), rng.normal([2.0, 0.0], 0.5, (6, 2))])
    labels = np.repeat([1, 2], 6)
    return build_class_graphs(X, labels, K=7), labels


@pytest.fixture
def separated_graphs():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.normal(0.0, 0.1, (6, 2)), rng.normal([50.0, 0.0], 0.1, (6, 2))])
    labels = np.repeat([1, 2], 6)
    return build_class_graphs(X, labels, K=3), labels


def _coords(values):
    Y = np.asarray(values, dtype=float).reshape(-1, 1)
    return Embedding(coordinates=Y, method=EmbeddingMethod.SUPERVISED_LAPLACIAN, eigenvalues=np.zeros(1))


def test_supervised_laplacian_satisfies_the_degree_constraint(overlapping_graphs):
    graphs, _ = overlapping_graphs
    emb = supervised_laplacian(graphs, mu=0.1, d=3)
    D = np.diag(graphs.within_degree)
    np.testing.assert_allclose(emb.coordinates.T @ D @ emb.coordinates, np.eye(3), atol=1e-6)
    assert np.all(np.diff(emb.eigenvalues) >= -1e-12)


def test_supervised_laplacian_eigenpairs_have_small_residuals(overlapping_graphs):
    graphs, _ = overlapping_graphs
    mu = 0.5
    emb = supervised_laplacian(graphs, mu=mu, d=4)
    A = graphs.within_laplacian - mu * graphs.between_laplacian
    D = np.diag(graphs.within_degree)
    for z, value in zip(emb.coordinates.T, emb.eigenvalues):
        assert np.linalg.norm(A @ z - value * D @ z) <= 1e-6 * np.linalg.norm(z)


def test_mu_zero_reduces_to_laplacian_eigenmaps_of_the_within_graph(overlapping_graphs):
    graphs, _ = overlapping_graphs
    emb = supervised_laplacian(graphs, mu=0.0, d=3)
    oracle = scipy.linalg.eigh(graphs.within_laplacian, np.diag(graphs.within_degree), eigvals_only=True)
    for value in emb.eigenvalues:
        assert np.min(np.abs(oracle - value)) <= 1e-8


def test_supervised_laplacian_rejects_bad_dimensions(overlapping_graphs):
    graphs, _ = overlapping_graphs
    with pytest.raises(ArgumentError):
        supervised_laplacian(graphs, mu=0.1, d=12)
    with pytest.raises(ArgumentError):
        supervised_laplacian(graphs, mu=-1.0, d=2)


def test_fisher_without_between_edges_fails(separated_graphs):
    graphs, _ = separated_graphs
    assert not np.any(graphs.between)
    with pytest.raises(EmbeddingError, match="no separating directions"):
        fisher_nonlinear(graphs, d=1)


def test_fisher_top_direction_splits_the_classes(overlapping_graphs):
    graphs, labels = overlapping_graphs
    emb = fisher_nonlinear(graphs, d=1)
    z = emb.coordinates[:, 0]
    signs_one, signs_two = np.sign(z[labels == 1]), np.sign(z[labels == 2])
    assert np.all(signs_one == signs_one[0])
    assert np.all(signs_two == -signs_one[0])


def test_fisher_eigenvalues_are_non_increasing(overlapping_graphs):
    graphs, _ = overlapping_graphs
    emb = embed(graphs, EmbeddingMethod.FISHER, d=3)
    assert emb.method is EmbeddingMethod.FISHER
    assert np.all(np.diff(emb.eigenvalues) <= 1e-12)
    np.testing.assert_allclose(np.linalg.norm(emb.coordinates, axis=0), 1.0)


def test_disjoint_ranges_are_separable():
    pairs = separable_pairs(_coords([1, 2, 3, 4]), np.array([1, 1, 2, 2]))
    assert pairs.at(0) == [(1, 2)]


def test_overlapping_ranges_are_not_separable():
    pairs = separable_pairs(_coords([1, 3, 2, 4]), np.array([1, 1, 2, 2]))
    assert pairs.at(0) == []


def test_touching_ranges_are_not_separable():
    pairs = separable_pairs(_coords([1, 2, 2, 4]), np.array([1, 1, 2, 2]))
    assert pairs.at(0) == []


def test_separable_pairs_ignore_column_signs(overlapping_graphs):
    graphs, labels = overlapping_graphs
    emb = supervised_laplacian(graphs, mu=0.5, d=3)
    flipped = Embedding(coordinates=emb.coordinates * np.array([-1.0, 1.0, -1.0]),
                        method=emb.method, mu=emb.mu, eigenvalues=emb.eigenvalues)
    assert separable_pairs(emb, labels).pairs == separable_pairs(flipped, labels).pairs
