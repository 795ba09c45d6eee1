"""
kNN Evaluation Harness
Ranks classes for each test sample by k-nearest-neighbor vote share on the
selected features and scores the rankings with the metric-aware top-k loss.
"""

from dataclasses import dataclass
from typing import Collection, Dict, Iterable, List, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from core.data.dataset import Dataset
from core.errors import ValidationError
from core.selectors.selector import align_to_metric
from core.transport.ot import GroundMetric

DISTANCES = {"hamming": "hamming", "l1": "cityblock"}
DEFAULT_K_NN = 5
_CHUNK = 1024


@dataclass(eq=False)
class PredictionRanking:
    """
    Per test sample, every class ordered by descending vote share.

    order[s] is a permutation of class indices; scores[s, c] the vote share
    of class c.
    """
    order: np.ndarray
    scores: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.order.shape[0]

    @property
    def n_classes(self) -> int:
        return self.order.shape[1]

    def top(self, k: int) -> np.ndarray:
        return self.order[:, :k]


def knn_rank(train: Dataset, test: Dataset, theta: Sequence[int], k_nn: int = DEFAULT_K_NN,
             distance: str = "hamming") -> PredictionRanking:
    """
    Class rankings from the k_nn nearest training rows on features θ.

    Neighbors tied at the boundary distance go to the lower training row;
    classes tied on votes go to the lower class index.
    """
    theta = sorted(int(j) for j in theta)
    if not theta:
        raise ValidationError("theta must name at least one feature", field="theta")
    if k_nn < 1:
        raise ValidationError("k_nn must be >= 1", field="knn")
    if distance not in DISTANCES:
        raise ValidationError(f"unknown kNN distance '{distance}' (expected hamming or l1)", field="distance")
    if train.n_features != test.n_features:
        raise ValidationError(f"train has {train.n_features} features, test {test.n_features}", field="test")
    if tuple(train.classes) != tuple(test.classes):
        raise ValidationError("train and test disagree on the class list", field="test")
    bad = [j for j in theta if not 0 <= j < train.n_features]
    if bad:
        raise ValidationError(f"feature index {bad[0]} out of range", field="theta")

    k = min(k_nn, train.n_samples)
    n_classes = train.n_classes
    train_x = train.features[:, theta].astype(float)
    test_x = test.features[:, theta].astype(float)

    scores = np.zeros((test.n_samples, n_classes))
    for start in range(0, test.n_samples, _CHUNK):
        block = cdist(test_x[start:start + _CHUNK], train_x, metric=DISTANCES[distance])
        nearest = np.argsort(block, axis=1, kind='stable')[:, :k]
        rows = np.repeat(np.arange(nearest.shape[0]), k)
        np.add.at(scores[start:start + _CHUNK], (rows, train.labels[nearest].reshape(-1)), 1.0)
    scores /= k

    order = np.argsort(-scores, axis=1, kind='stable')
    return PredictionRanking(order=order, scores=scores)


def _truth_indices(true_labels: Sequence[Iterable[int]], n_samples: int) -> List[np.ndarray]:
    if len(true_labels) != n_samples:
        raise ValidationError(f"{len(true_labels)} truth sets for {n_samples} predictions", field="labels")
    truth = []
    for s, labels in enumerate(true_labels):
        if isinstance(labels, (int, np.integer)):
            labels = [labels]
        labels = np.asarray(sorted(labels), dtype=np.int64)
        if labels.size == 0:
            raise ValidationError(f"test sample {s} has an empty true label set", field="labels")
        truth.append(labels)
    return truth


def top_k_loss(ranking: PredictionRanking, true_labels: Sequence[Collection[int]], d: GroundMetric,
               k: int) -> float:
    """
    Mean over test samples of (1/k) Σ_{i<=k} min_{y in truth} d(ŷ_i, y).

    Args:
        true_labels: one class index (or set of indices) per test sample
    """
    if not 1 <= k <= d.n_classes:
        raise ValidationError(f"k must lie in [1, {d.n_classes}], got {k}", field="top_k")
    if ranking.n_classes != d.n_classes:
        raise ValidationError(f"ranking over {ranking.n_classes} classes, metric has {d.n_classes}",
                              field="dimension")
    truth = _truth_indices(true_labels, ranking.n_samples)
    if not truth:
        raise ValidationError("no test samples to score", field="test")
    losses = [d.dist[np.ix_(ranking.order[s, :k], labels)].min(axis=1).mean()
              for s, labels in enumerate(truth)]
    return float(np.mean(losses))


def top_k_loss_curve(ranking: PredictionRanking, true_labels: Sequence[Collection[int]], d: GroundMetric,
                     ks: Iterable[int]) -> Dict[int, float]:
    """top_k_loss for every k in ks"""
    return {int(k): top_k_loss(ranking, true_labels, d, int(k)) for k in ks}


def evaluate_selection(train: Dataset, test: Dataset, theta: Sequence[int], d: GroundMetric,
                       ks: Iterable[int] = (5,), k_nn: int = DEFAULT_K_NN,
                       distance: str = "hamming") -> Dict[int, float]:
    """
    Train kNN on train[θ] and score test with the top-k loss.

    Expanded multi-label test rows are collapsed back to one prediction per
    source sample, scored against its whole label set.
    """
    train, test = align_to_metric(train, d), align_to_metric(test, d)
    first_rows, label_sets = test.label_sets()
    samples = test.subset_rows(first_rows)
    ranking = knn_rank(train, samples, theta, k_nn, distance)
    truth = [sorted(labels) for labels in label_sets]
    return top_k_loss_curve(ranking, truth, d, ks)
