"""
Conditional Distribution Estimation
Feature-pair correlations, top-L conditioning neighborhoods and empirical
class-conditional tables p(Y | X_G = x_G) over observed configurations.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from core.data.dataset import Dataset
from core.errors import TableTooLargeError, ValidationError
from core.transport.ot import DiscreteDistribution

DEFAULT_SMOOTHING = 0.5
DEFAULT_CONFIG_CAP = 10 ** 6

# Correlations are compared after rounding so float noise cannot break index ties
_RHO_DECIMALS = 12


@dataclass(eq=False)
class CorrelationMatrix:
    """
    Absolute Pearson correlations between feature codes.

    Constant features have rho = 0 against everything (diagonal included)
    and are flagged in `constant`.
    """
    rho: np.ndarray
    constant: np.ndarray

    @property
    def n_features(self) -> int:
        return self.rho.shape[0]

    @property
    def constant_features(self) -> List[int]:
        return [int(j) for j in np.flatnonzero(self.constant)]


def correlation_matrix(ds: Dataset) -> CorrelationMatrix:
    """Absolute sample correlation of every feature pair, levels treated as reals"""
    if ds.n_samples < 2:
        raise ValidationError("correlations need at least 2 samples", field="data")
    x = ds.features.astype(float)
    w = ds.sample_weights()
    support = x[w > 0]
    constant = np.all(support == support[0], axis=0)

    centered = x - w @ x
    std = np.sqrt(w @ centered ** 2)
    safe = np.where(constant | (std == 0), 1.0, std)
    z = centered / safe
    rho = np.abs(z.T @ (z * w[:, None]))
    rho[constant, :] = 0.0
    rho[:, constant] = 0.0
    rho = np.clip(np.round(rho, _RHO_DECIMALS), 0.0, 1.0)
    rho = (rho + rho.T) / 2.0
    idx = np.flatnonzero(~constant)
    rho[idx, idx] = 1.0

    rho.flags.writeable = False
    constant.flags.writeable = False
    return CorrelationMatrix(rho=rho, constant=constant)


def top_L_neighbors(corr: CorrelationMatrix, i: int, L: int, remaining: Iterable[int]) -> List[int]:
    """
    The L features of remaining \\ {i} most correlated with feature i.

    Ties go to the lower feature index; fewer than L candidates returns all
    of them.
    """
    if L < 1:
        raise ValidationError("L must be >= 1", field="L")
    candidates = [int(j) for j in remaining if int(j) != i]
    candidates.sort(key=lambda j: (-corr.rho[i, j], j))
    return candidates[:L]


@dataclass(eq=False)
class ConditionalTable:
    """
    Empirical p(Y | X_G = x_G) for every observed configuration x_G.

    `configurations` holds one row per observed configuration (lexicographic
    order); `weights` their empirical probabilities; `distributions` the
    smoothed class distributions.
    """
    condition_set: Tuple[int, ...]
    configurations: np.ndarray
    weights: np.ndarray
    distributions: List[DiscreteDistribution]
    inverse: np.ndarray

    def __len__(self) -> int:
        return len(self.distributions)

    def lookup(self) -> Dict[Tuple[int, ...], Tuple[DiscreteDistribution, float]]:
        """Configuration tuple -> (distribution, weight)"""
        return {
            tuple(int(v) for v in config): (dist, float(w))
            for config, dist, w in zip(self.configurations, self.distributions, self.weights)
        }


def _group_rows(ds: Dataset, columns: Sequence[int], cap: int) -> Tuple[np.ndarray, np.ndarray]:
    if len(columns) == 0:
        return np.zeros((1, 0), dtype=np.int64), np.zeros(ds.n_samples, dtype=np.int64)
    configs, inverse = np.unique(ds.features[:, list(columns)], axis=0, return_inverse=True)
    if configs.shape[0] > cap:
        raise TableTooLargeError(configs.shape[0], cap)
    return configs, inverse.reshape(-1)


def class_counts(ds: Dataset, inverse: np.ndarray, n_groups: int) -> np.ndarray:
    """Weighted (group x class) label counts; rows are scaled so a unit weight is one sample"""
    weights = ds.sample_weights() * ds.n_samples
    counts = np.zeros((n_groups, ds.n_classes))
    np.add.at(counts, (inverse, ds.labels), weights)
    return counts


def conditional_table(ds: Dataset, condition_set: Sequence[int], smoothing: float = DEFAULT_SMOOTHING,
                      config_cap: int = DEFAULT_CONFIG_CAP) -> ConditionalTable:
    """
    Smoothed conditionals p(Y | x_G) over the configurations present in ds.

    An empty condition set yields the single marginal p(Y).

    Raises:
        TableTooLargeError: more than config_cap distinct configurations
    """
    if smoothing < 0:
        raise ValidationError("smoothing must be >= 0", field="smoothing")
    condition_set = tuple(int(j) for j in condition_set)
    bad = [j for j in condition_set if not 0 <= j < ds.n_features]
    if bad:
        raise ValidationError(f"feature index {bad[0]} out of range", field="condition_set")

    configs, inverse = _group_rows(ds, condition_set, config_cap)
    counts = class_counts(ds, inverse, configs.shape[0])
    mass = counts.sum(axis=1)
    observed = mass > 0

    weights = mass[observed] / mass.sum()
    distributions = [DiscreteDistribution.from_counts(row, smoothing) for row in counts[observed]]

    # re-index rows onto the observed configurations
    remap = np.where(observed, np.cumsum(observed) - 1, -1)
    inverse = remap[inverse]

    return ConditionalTable(
        condition_set=condition_set,
        configurations=configs[observed],
        weights=weights,
        distributions=distributions,
        inverse=inverse,
    )
