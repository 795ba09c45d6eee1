"""
Synthetic Problem Generators
Exactly-enumerated joint distributions (population datasets carried as
weighted rows) and a sampled hierarchical-label dataset for the noisy-label
experiments.
"""

from dataclasses import dataclass
from itertools import product
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np

from core.data.dataset import Dataset
from core.errors import ValidationError
from core.metrics.ground_metric import LabelTree, TreeNode, tree_metric
from core.transport.ot import GroundMetric

HIERARCHY_LAYER_WEIGHTS = (0.5, 0.2, 0.05)


def class_names(n_classes: int) -> Tuple[str, ...]:
    return tuple(f"c{i}" for i in range(n_classes))


def binary_configurations(n_features: int) -> np.ndarray:
    """All 2^M binary configurations in lexicographic order"""
    return np.array(list(product((0, 1), repeat=n_features)), dtype=np.int64).reshape(-1, n_features)


def joint_dataset(configurations: np.ndarray, p_x: Sequence[float], p_y_given_x: np.ndarray,
                  classes: Sequence[str], provenance: str = "joint") -> Dataset:
    """
    Weighted dataset whose empirical joint equals p(x) p(y | x) exactly.

    One row per (configuration, class) with positive probability.
    """
    configurations = np.asarray(configurations, dtype=np.int64)
    p_x = np.asarray(p_x, dtype=float)
    p_y_given_x = np.asarray(p_y_given_x, dtype=float)
    n_configs, n_classes = p_y_given_x.shape
    if configurations.shape[0] != n_configs or p_x.shape != (n_configs,):
        raise ValidationError("configurations, p(x) and p(y|x) disagree on the configuration count",
                              field="joint")

    weights = p_x[:, None] * p_y_given_x
    rows, labels = np.nonzero(weights > 0)
    return Dataset(
        features=configurations[rows],
        labels=labels,
        arity=np.maximum(configurations.max(axis=0) + 1, 2),
        classes=tuple(classes),
        provenance=provenance,
        weights=weights[rows, labels],
    )


@dataclass
class EnumerableJoint:
    """
    Population clean/noisy pair over binary features.

    clean and noisy share rows (x, y, ỹ) weighted by p(x) p(y|x) p(ỹ|y);
    clean carries y, noisy carries ỹ.
    """
    clean: Dataset
    noisy: Dataset
    metric: GroundMetric
    transition: np.ndarray
    noise_level: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_features': self.clean.n_features,
            'n_classes': self.clean.n_classes,
            'noise_level': self.noise_level,
            'transition': self.transition.tolist(),
            'metric': self.metric.to_dict(),
        }


def random_point_metric(rng: np.random.Generator, n_classes: int) -> GroundMetric:
    """Euclidean distances between random points in the unit square, scaled to max 1"""
    while True:
        points = rng.random((n_classes, 2))
        dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
        off = dist[~np.eye(n_classes, dtype=bool)]
        if off.min() > 1e-3:
            return GroundMetric(dist / dist.max(), class_names(n_classes))


def neighbor_biased_transition(d: GroundMetric, noise_level: float) -> np.ndarray:
    """(1 - P) I + P R, where R moves mass to other classes in proportion to 1 / distance"""
    n = d.n_classes
    off = ~np.eye(n, dtype=bool)
    affinity = np.zeros((n, n))
    affinity[off] = 1.0 / d.dist[off]
    affinity /= affinity.sum(axis=1, keepdims=True)
    return (1.0 - noise_level) * np.eye(n) + noise_level * affinity


def random_enumerable_joint(rng: np.random.Generator, n_features: int = 5, n_classes: int = 3,
                            noise_max: float = 0.5, alpha: float = 1.0,
                            weight_scale: float = 2.0) -> EnumerableJoint:
    """
    Random p(X, Y, Ỹ) over binary features.

    p(x) ~ Dirichlet(alpha); p(y | x) is a softmax of a random linear score,
    so only some features matter; the noisy channel is neighbor-biased NAR
    with P ~ U[0, noise_max].
    """
    if noise_max < 0 or noise_max > 1:
        raise ValidationError("noise_max must lie in [0, 1]", field="noise_max")
    configs = binary_configurations(n_features)
    p_x = rng.dirichlet(np.full(configs.shape[0], alpha))

    coef = rng.normal(scale=weight_scale, size=(n_features, n_classes))
    # sparsify so the Markov blanket is a strict subset
    coef[rng.random(n_features) < 0.4] = 0.0
    score = configs @ coef + rng.normal(size=n_classes)
    p_y = np.exp(score - score.max(axis=1, keepdims=True))
    p_y /= p_y.sum(axis=1, keepdims=True)

    metric = random_point_metric(rng, n_classes)
    noise_level = float(rng.uniform(0.0, noise_max)) if noise_max > 0 else 0.0
    T = neighbor_biased_transition(metric, noise_level)

    weights = p_x[:, None, None] * p_y[:, :, None] * T[None, :, :]
    rows, y, y_noisy = np.nonzero(weights > 0)
    w = weights[rows, y, y_noisy]
    arity = np.full(n_features, 2)

    clean = Dataset(configs[rows], y, arity, metric.labels, provenance="enumerable-joint", weights=w)
    noisy = Dataset(configs[rows], y_noisy, arity, metric.labels, provenance="enumerable-joint|nar", weights=w)
    return EnumerableJoint(clean=clean, noisy=noisy, metric=metric, transition=T, noise_level=noise_level)


def hierarchy_tree(groups: int = 3, leaves_per_group: int = 3,
                   layer_weights: Sequence[float] = HIERARCHY_LAYER_WEIGHTS) -> LabelTree:
    """
    Three-layer label tree: virtual root, `groups` coarse nodes, one mid node
    each, `leaves_per_group` labeled leaves under every mid node.
    """
    nodes: List[TreeNode] = [TreeNode("root")]
    for g in range(groups):
        nodes.append(TreeNode(f"g{g}", "root"))
        nodes.append(TreeNode(f"g{g}m", f"g{g}"))
        for leaf in range(leaves_per_group):
            label = f"c{g * leaves_per_group + leaf}"
            nodes.append(TreeNode(label, f"g{g}m", label))
    return LabelTree(nodes, layer_weights)


def hierarchical_dataset(n_samples: int = 5000, n_features: int = 30, seed: int = 0,
                         coarse_informative: int = 10, fine_informative: int = 10,
                         feature_noise: float = 0.15, groups: int = 3,
                         leaves_per_group: int = 3) -> Tuple[Dataset, GroundMetric]:
    """
    Sampled binary-feature dataset over the leaves of hierarchy_tree().

    The first coarse_informative features signal the coarse group, the next
    fine_informative signal the leaf position inside its group, the rest
    are fair coins. Each informative bit is flipped with probability
    feature_noise.

    Returns:
        (dataset, tree metric); siblings sit 0.1 apart, other groups 1.5
    """
    if coarse_informative + fine_informative > n_features:
        raise ValidationError("more informative features than features", field="n_features")
    rng = np.random.default_rng(seed)
    n_classes = groups * leaves_per_group
    metric = tree_metric(hierarchy_tree(groups, leaves_per_group), class_names(n_classes))

    y = rng.integers(0, n_classes, size=n_samples)
    group, position = y // leaves_per_group, y % leaves_per_group

    features = (rng.random((n_samples, n_features)) < 0.5).astype(np.int64)
    for j in range(coarse_informative):
        features[:, j] = group == (j % groups)
    for offset in range(fine_informative):
        features[:, coarse_informative + offset] = position == (offset % leaves_per_group)
    informative = coarse_informative + fine_informative
    flips = rng.random((n_samples, informative)) < feature_noise
    features[:, :informative] ^= flips.astype(np.int64)

    ds = Dataset(features, y, np.full(n_features, 2), metric.labels,
                 provenance=f"hierarchical(seed={seed},N={n_samples},M={n_features})")
    return ds, metric
