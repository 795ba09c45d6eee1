"""
Tests for the kNN ranking harness and top-k loss
"""

import numpy as np
import pytest

from core.data.dataset import Dataset, expand_multilabel
from core.errors import ValidationError
from core.evaluation.knn import PredictionRanking, evaluate_selection, knn_rank, top_k_loss, top_k_loss_curve
from core.transport.ot import GroundMetric

CLASSES = ("a", "b", "c")
NEAR = GroundMetric.from_matrix(CLASSES, [[0, 0.2, 1], [0.2, 0, 1], [1, 1, 0]])


def dataset(features, labels):
    features = np.asarray(features)
    return Dataset(features, np.asarray(labels), np.full(features.shape[1], 2), CLASSES)


def test_single_neighbor_copies_the_identical_point():
    train = dataset([[0, 0], [1, 1], [0, 1]], [0, 1, 2])
    test = dataset([[1, 1]], [0])
    ranking = knn_rank(train, test, [0, 1], k_nn=1)
    assert ranking.top(1)[0, 0] == 1
    assert ranking.scores[0].tolist() == [0.0, 1.0, 0.0]


def test_unanimous_training_labels():
    train = dataset([[0, 0], [1, 1], [0, 1], [1, 0]], [2, 2, 2, 2])
    test = dataset([[1, 1], [0, 0]], [0, 0])
    ranking = knn_rank(train, test, [0, 1], k_nn=3)
    assert ranking.order[:, 0].tolist() == [2, 2]
    assert np.all(ranking.scores[:, 2] == 1.0)


def test_majority_vote_share():
    train = dataset([[1, 0], [1, 0], [1, 0]], [1, 1, 0])
    test = dataset([[1, 0]], [0])
    ranking = knn_rank(train, test, [0], k_nn=3)
    assert ranking.order[0].tolist() == [1, 0, 2]
    assert ranking.scores[0] == pytest.approx([1 / 3, 2 / 3, 0.0])


def test_distance_ties_go_to_the_lower_training_row():
    train = dataset([[0, 0], [0, 0]], [1, 0])
    test = dataset([[0, 0]], [0])
    assert knn_rank(train, test, [0, 1], k_nn=1).top(1)[0, 0] == 1


def test_k_nn_is_capped_by_training_size():
    train = dataset([[0, 0], [1, 1]], [0, 1])
    test = dataset([[0, 0]], [0])
    ranking = knn_rank(train, test, [0, 1], k_nn=10)
    assert ranking.scores[0] == pytest.approx([0.5, 0.5, 0.0])


def test_l1_distance_on_selected_columns():
    train = Dataset(np.array([[0, 3], [2, 0]]), np.array([0, 1]), [3, 4], CLASSES)
    test = Dataset(np.array([[1, 0]]), np.array([0]), [3, 4], CLASSES)
    # only column 0: both rows are 1 away, lower row wins
    assert knn_rank(train, test, [0], k_nn=1, distance="l1").top(1)[0, 0] == 0
    assert knn_rank(train, test, [0, 1], k_nn=1, distance="l1").top(1)[0, 0] == 1


@pytest.mark.parametrize("kwargs, field", [
    ({'theta': []}, "theta"),
    ({'theta': [5]}, "theta"),
    ({'k_nn': 0}, "knn"),
    ({'distance': "cosine"}, "distance"),
])
def test_rank_validation(kwargs, field):
    train = dataset([[0, 0]], [0])
    args = {'theta': [0], 'k_nn': 1, 'distance': "hamming"}
    args.update(kwargs)
    with pytest.raises(ValidationError) as excinfo:
        knn_rank(train, train, args['theta'], args['k_nn'], args['distance'])
    assert excinfo.value.field == field


def fixed_ranking():
    order = np.array([[0, 1, 2], [1, 0, 2]])
    return PredictionRanking(order=order, scores=np.zeros((2, 3)))


def test_perfect_ranking_costs_nothing():
    assert top_k_loss(fixed_ranking(), [0, 1], NEAR, 1) == 0.0


def test_top_k_loss_values():
    ranking = fixed_ranking()
    assert top_k_loss(ranking, [0, 0], NEAR, 1) == pytest.approx(0.1)
    assert top_k_loss(ranking, [0, 0], NEAR, 2) == pytest.approx(0.1)
    assert top_k_loss(ranking, [0, 0], NEAR, 3) == pytest.approx((1.2 / 3 + 1.2 / 3) / 2)


def test_label_sets_take_the_closest_true_class():
    ranking = fixed_ranking()
    assert top_k_loss(ranking, [{0}, {0, 2}], NEAR, 3) == pytest.approx((1.2 / 3 + 0.2 / 3) / 2)


def test_zero_one_metric_top1_is_the_error_rate():
    rng = np.random.default_rng(0)
    order = np.array([rng.permutation(3) for _ in range(200)])
    truth = rng.integers(0, 3, size=200)
    d = GroundMetric.from_matrix(CLASSES, 1 - np.eye(3))
    loss = top_k_loss(PredictionRanking(order=order, scores=np.zeros((200, 3))), truth, d, 1)
    assert loss == pytest.approx(np.mean(order[:, 0] != truth))


def test_loss_curve_keys():
    curve = top_k_loss_curve(fixed_ranking(), [0, 0], NEAR, [1, 3])
    assert list(curve) == [1, 3]


def test_loss_validation():
    ranking = fixed_ranking()
    with pytest.raises(ValidationError, match="empty true label set"):
        top_k_loss(ranking, [[0], []], NEAR, 1)
    with pytest.raises(ValidationError) as excinfo:
        top_k_loss(ranking, [0, 1], NEAR, 4)
    assert excinfo.value.field == "top_k"
    with pytest.raises(ValidationError, match="truth sets"):
        top_k_loss(ranking, [0], NEAR, 1)


def test_evaluate_scores_multilabel_rows_once():
    train = dataset([[0, 0], [1, 1]], [0, 2])
    test = expand_multilabel(np.array([[0, 0], [1, 1]]), [[1, 0], [2]], CLASSES)
    losses = evaluate_selection(train, test, [0, 1], NEAR, ks=(1, 2), k_nn=1)
    assert losses[1] == 0.0
    # sample 0 ranks a, b; sample 1 ranks c, a
    assert losses[2] == pytest.approx((0.0 + (0.0 + 1.0) / 2) / 2)
