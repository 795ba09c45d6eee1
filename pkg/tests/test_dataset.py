"""
Tests for dataset loading, multi-label expansion and splitting
"""

import numpy as np
import pytest

from core.data.dataset import Dataset, DatasetSchema, expand_multilabel, load_dataset, train_test_split
from core.errors import ValidationError

CLASSES = ("a", "b", "c")


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_small_binary_file(tmp_path):
    path = write(tmp_path, "d.csv", "x1,x2,label\n0,1,a\n1,1,b\n0,0,a\n")
    ds = load_dataset(path, DatasetSchema(), CLASSES)
    assert (ds.n_samples, ds.n_features) == (3, 2)
    assert ds.arity.tolist() == [2, 2]
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.classes == CLASSES


def test_label_column_position_and_tsv(tmp_path):
    path = write(tmp_path, "d.tsv", "y\tf0\tf1\nc\t2\t0\na\t0\t1\n")
    ds = load_dataset(path, DatasetSchema(label_columns=("y",)), CLASSES)
    assert ds.features.tolist() == [[2, 0], [0, 1]]
    assert ds.labels.tolist() == [2, 0]
    assert ds.arity.tolist() == [3, 2]


def test_unknown_label_is_named(tmp_path):
    path = write(tmp_path, "d.csv", "x,label\n0,a\n1,zebra\n")
    with pytest.raises(ValidationError, match="zebra"):
        load_dataset(path, DatasetSchema(), CLASSES)


def test_declared_arity_violation(tmp_path):
    path = write(tmp_path, "d.csv", "x,label\n0,a\n7,b\n")
    with pytest.raises(ValidationError, match="arity"):
        load_dataset(path, DatasetSchema(declared_arity=2), CLASSES)


def test_ragged_row_reports_line(tmp_path):
    path = write(tmp_path, "d.csv", "x1,x2,label\n0,1,a\n0,b\n")
    with pytest.raises(ValidationError, match=":3: ragged"):
        load_dataset(path, DatasetSchema(), CLASSES)


def test_real_values_need_discretization(tmp_path):
    path = write(tmp_path, "d.csv", "x,label\n0.5,a\n1.5,b\n")
    with pytest.raises(ValidationError, match="--discretize"):
        load_dataset(path, DatasetSchema(), CLASSES)
    ds = load_dataset(path, DatasetSchema(discretize="quantile", bins=2), CLASSES)
    assert ds.features[:, 0].tolist() == [0, 1]


def test_non_numeric_feature(tmp_path):
    path = write(tmp_path, "d.csv", "x,label\nhigh,a\n")
    with pytest.raises(ValidationError, match="non-numeric"):
        load_dataset(path, DatasetSchema(), CLASSES)


def test_multilabel_cells_are_expanded(tmp_path):
    path = write(tmp_path, "d.csv", "x,label\n1,a|b\n0,c\n")
    ds = load_dataset(path, DatasetSchema(), CLASSES)
    assert ds.n_samples == 3
    assert ds.features[:, 0].tolist() == [1, 1, 0]
    assert ds.labels.tolist() == [0, 1, 2]
    assert ds.groups.tolist() == [0, 0, 1]


def test_expand_single_sample_two_labels():
    ds = expand_multilabel(np.array([[1, 0]]), [[0, 1]], CLASSES)
    assert ds.n_samples == 2
    assert np.array_equal(ds.features[0], ds.features[1])


def test_expand_counts_rows():
    ds = expand_multilabel(np.zeros((3, 1), dtype=int), [[0], [0, 1], [0, 1, 2]], CLASSES)
    assert ds.n_samples == 6


def test_expand_single_labels_is_identity():
    features = np.array([[0, 1], [1, 0]])
    ds = expand_multilabel(features, [[2], [1]], CLASSES)
    assert np.array_equal(ds.features, features)
    assert ds.labels.tolist() == [2, 1]


def test_expand_rejects_empty_label_set():
    with pytest.raises(ValidationError, match="empty label set"):
        expand_multilabel(np.zeros((2, 1), dtype=int), [[0], []], CLASSES)


def test_label_sets_collapse_groups():
    ds = expand_multilabel(np.array([[0], [1]]), [[0, 2], [1]], CLASSES)
    first_rows, sets = ds.label_sets()
    assert first_rows.tolist() == [0, 2]
    assert sets == [frozenset({0, 2}), frozenset({1})]


def test_dataset_is_immutable():
    ds = Dataset(np.array([[0, 1]]), np.array([0]), [2, 2], CLASSES)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1


def test_dataset_validation():
    with pytest.raises(ValidationError, match="exceeds arity"):
        Dataset(np.array([[2]]), np.array([0]), [2], CLASSES)
    with pytest.raises(ValidationError, match="label index"):
        Dataset(np.array([[0]]), np.array([3]), [2], CLASSES)
    with pytest.raises(ValidationError, match="weights"):
        Dataset(np.array([[0], [1]]), np.array([0, 1]), [2], CLASSES, weights=[0.0, 0.0])


def test_weights_are_normalized():
    ds = Dataset(np.array([[0], [1]]), np.array([0, 1]), [2], CLASSES, weights=[1.0, 3.0])
    assert ds.sample_weights().tolist() == [0.25, 0.75]


def test_split_is_seeded_and_sized():
    ds = Dataset(np.arange(10)[:, None] % 2, np.zeros(10, dtype=int), [2], CLASSES)
    train, test = train_test_split(ds, 0.8, seed=3)
    again, _ = train_test_split(ds, 0.8, seed=3)
    assert (train.n_samples, test.n_samples) == (8, 2)
    assert train.groups.tolist() == again.groups.tolist()
    assert sorted(train.groups.tolist() + test.groups.tolist()) == list(range(10))


def test_split_keeps_expanded_rows_together():
    ds = expand_multilabel(np.zeros((6, 1), dtype=int), [[0, 1]] * 6, CLASSES)
    train, test = train_test_split(ds, 0.5, seed=0)
    assert set(train.groups.tolist()).isdisjoint(test.groups.tolist())
    assert train.n_samples == 6


def test_split_with_empty_side_fails():
    ds = Dataset(np.array([[0], [1]]), np.array([0, 1]), [2], CLASSES)
    with pytest.raises(ValidationError, match="empty"):
        train_test_split(ds, 0.999, seed=0)
