import numpy as np
import pandas as pd
import pytest
from PIL import Image
from scipy.spatial.distance import cdist

from app.models.dataset import UNLABELED
from app.services.dataset_service import (curve_height, load_image_dirs, load_matrix_csv, promote_labels,
                                          split_labels, synthetic_curves)
from app.services.errors import ArgumentError, IngestError, ParseError, SplitError, StructuralError


@pytest.fixture
def image_root(tmp_path):
    """Two classes of small grayscale images with distinct intensities"""
    for class_name, base in (("a_class", 40), ("b_class", 160)):
        folder = tmp_path / class_name
        folder.mkdir()
        for i in range(3):
            pixels = np.full((30, 40), base + 10 * i, dtype=np.uint8)
            pixels[0, 0] = 255 - i
            Image.fromarray(pixels).save(folder / f"img_{i}.png")
    return tmp_path


def _write(path, text):
    path.write_text(text)
    return path


def test_synthetic_curves_without_noise_lie_on_curves():
    ds = synthetic_curves(classes=2, per_class=30, noise=0.0, seed=3)
    assert ds.samples.shape == (60, 2)
    assert ds.labeled_count == 60
    for m in (1, 2):
        points = ds.samples[ds.labels == m]
        heights = curve_height(points[:, 0], m - 1)
        assert np.max(np.abs(points[:, 1] - heights)) <= 1e-12


def test_synthetic_curves_are_deterministic_per_seed():
    first = synthetic_curves(2, 30, 0.05, seed=7)
    second = synthetic_curves(2, 30, 0.05, seed=7)
    np.testing.assert_array_equal(first.samples, second.samples)
    np.testing.assert_array_equal(first.labels, second.labels)


def test_synthetic_classes_do_not_touch():
    ds = synthetic_curves(2, 30, 0.05, seed=1)
    distances = cdist(ds.samples[ds.labels == 1], ds.samples[ds.labels == 2])
    assert distances.min() > 0


def test_synthetic_curves_reject_bad_arguments():
    with pytest.raises(ArgumentError):
        synthetic_curves(1, 30, 0.0)
    with pytest.raises(ArgumentError):
        synthetic_curves(2, 3, 0.0)
    with pytest.raises(ArgumentError):
        synthetic_curves(2, 10, -1.0)


def test_split_labels_is_stratified():
    ds = synthetic_curves(2, 10, 0.0, seed=0)
    split = split_labels(ds, 0.5, seed=4)
    assert split.labeled_count == 10
    assert np.bincount(split.training_labels).tolist() == [0, 5, 5]
    assert np.all(split.labels[10:] == UNLABELED)
    np.testing.assert_array_equal(split.truth[:10], split.training_labels)


def test_split_labels_small_ratio_on_large_classes():
    ds = synthetic_curves(2, 58, 0.05, seed=0)
    split = split_labels(ds, 0.11, seed=0)
    assert np.bincount(split.training_labels).tolist() == [0, 6, 6]


def test_split_labels_preserves_rows_and_truth():
    ds = synthetic_curves(3, 12, 0.05, seed=2)
    split = split_labels(ds, 0.25, seed=9)
    np.testing.assert_array_equal(split.samples, ds.samples[split.original_index])
    np.testing.assert_array_equal(split.truth, ds.labels[split.original_index])


def test_split_labels_seeds_change_selection_not_counts():
    ds = synthetic_curves(2, 20, 0.05, seed=0)
    first = split_labels(ds, 0.3, seed=1)
    second = split_labels(ds, 0.3, seed=2)
    assert first.labeled_count == second.labeled_count
    assert set(first.original_index[:first.labeled_count]) != set(second.original_index[:second.labeled_count])
    assert split_labels(ds, 0.3, seed=1).original_index.tolist() == first.original_index.tolist()


def test_split_labels_rejects_a_ratio_that_empties_a_class():
    ds = synthetic_curves(2, 10, 0.0)
    with pytest.raises(SplitError):
        split_labels(ds, 0.01, seed=0)
    with pytest.raises(ArgumentError):
        split_labels(ds, 1.0, seed=0)


def test_promote_labels_moves_rows_into_the_labeled_block():
    ds = split_labels(synthetic_curves(2, 10, 0.0), 0.5, seed=0)
    promoted = promote_labels(ds, [15, 12], [2, 1])
    assert promoted.labeled_count == 12
    np.testing.assert_array_equal(promoted.samples[10], ds.samples[15])
    np.testing.assert_array_equal(promoted.samples[11], ds.samples[12])
    assert promoted.labels[10:12].tolist() == [2, 1]
    np.testing.assert_array_equal(promoted.truth[10:12], ds.truth[[15, 12]])
    with pytest.raises(ArgumentError):
        promote_labels(ds, [3], [1])


def test_load_matrix_csv_moves_labeled_rows_first(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,0\n0,1\n1,1\n")
    labels = _write(tmp_path / "y.csv", "\n1\n\n2\n")
    ds = load_matrix_csv(features, labels)
    assert (ds.labeled_count, ds.sample_count, ds.class_count) == (2, 4, 2)
    assert ds.training_labels.tolist() == [1, 2]
    assert ds.original_index.tolist() == [1, 3, 0, 2]
    np.testing.assert_array_equal(ds.samples[0], [1.0, 0.0])


def test_load_matrix_csv_fully_labeled(tmp_path):
    features = _write(tmp_path / "x.csv", "a,b\n0,0\n1,0\n0,1\n")
    labels = _write(tmp_path / "y.csv", "label\n1\n2\n1\n")
    ds = load_matrix_csv(features, labels, header=True)
    assert ds.labeled_count == ds.sample_count == 3


def test_load_matrix_csv_rejects_duplicate_rows(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,0\n0,0\n")
    labels = _write(tmp_path / "y.csv", "1\n2\n1\n")
    with pytest.raises(StructuralError):
        load_matrix_csv(features, labels)


def test_load_matrix_csv_reports_the_bad_row(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,a\n")
    labels = _write(tmp_path / "y.csv", "1\n2\n")
    with pytest.raises(ParseError, match="row 2"):
        load_matrix_csv(features, labels)


def test_load_matrix_csv_rejects_out_of_range_labels(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,0\n")
    labels = _write(tmp_path / "y.csv", "1\n3\n")
    with pytest.raises(ParseError, match="row 2"):
        load_matrix_csv(features, labels, class_count=2)


def test_load_matrix_csv_keeps_the_reader_error_for_ragged_rows(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,0,5\n")
    labels = _write(tmp_path / "y.csv", "1\n2\n")
    with pytest.raises(ParseError, match="ragged rows") as excinfo:
        load_matrix_csv(features, labels)
    assert isinstance(excinfo.value.__cause__, pd.errors.ParserError)


def test_non_numeric_label_keeps_the_conversion_error(tmp_path):
    features = _write(tmp_path / "x.csv", "0,0\n1,0\n")
    labels = _write(tmp_path / "y.csv", "1\nb\n")
    with pytest.raises(ParseError, match="row 2") as excinfo:
        load_matrix_csv(features, labels)
    assert isinstance(excinfo.value.__cause__, ValueError)


def test_load_image_dirs_flattens_resized_grayscale(image_root):
    ds = load_image_dirs(image_root, (17, 20))
    assert ds.samples.shape == (6, 340)
    assert ds.labels.tolist() == [1, 1, 1, 2, 2, 2]
    assert ds.class_names == ["a_class", "b_class"]
    assert ds.samples.min() >= 0.0 and ds.samples.max() <= 1.0


def test_load_image_dirs_is_idempotent(image_root):
    first = load_image_dirs(image_root, (32, 32))
    second = load_image_dirs(image_root, (32, 32))
    assert first.samples.shape[1] == 1024
    assert first.samples.tobytes() == second.samples.tobytes()


def test_load_image_dirs_white_image(tmp_path):
    folder = tmp_path / "only"
    folder.mkdir()
    Image.fromarray(np.full((2, 2), 255, dtype=np.uint8)).save(folder / "white.png")
    ds = load_image_dirs(tmp_path, (2, 2))
    np.testing.assert_allclose(ds.samples, [[1.0, 1.0, 1.0, 1.0]])


def test_load_image_dirs_errors(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(StructuralError):
        load_image_dirs(tmp_path, (4, 4))

    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "bad.png").write_bytes(b"not an image")
    (tmp_path / "empty").rmdir()
    with pytest.raises(IngestError, match="bad.png"):
        load_image_dirs(tmp_path, (4, 4))
