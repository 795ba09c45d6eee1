"""
Feature Discretization
Maps real-valued feature columns to small integer levels, by empirical
quantile (default) or equal-width bins.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Any, Tuple

import numpy as np

from core.errors import ValidationError

# Upper bound on levels per feature; keeps conditional tables small
MAX_LEVELS = 64


class DiscretizeStrategy(Enum):
    """Bin edge placement"""
    QUANTILE = "quantile"
    UNIFORM = "uniform"


@dataclass
class DiscretizerSpec:
    """Number of bins and edge strategy"""
    bins: int = 10
    strategy: DiscretizeStrategy = DiscretizeStrategy.QUANTILE

    def __post_init__(self):
        if isinstance(self.strategy, str):
            try:
                self.strategy = DiscretizeStrategy(self.strategy)
            except ValueError:
                raise ValidationError(f"unknown strategy '{self.strategy}'", field="discretize") from None
        if self.bins < 2:
            raise ValidationError("bins must be >= 2", field="bins")
        if self.bins > MAX_LEVELS:
            raise ValidationError(f"bins must be <= {MAX_LEVELS}", field="bins")

    def to_dict(self) -> Dict[str, Any]:
        return {'bins': self.bins, 'strategy': self.strategy.value}


def _check_finite(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.ndim != 2:
        raise ValidationError(f"expected an N x M matrix, got shape {raw.shape}", field="features")
    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        row, col = bad[0]
        raise ValidationError(f"non-finite value at row {row}, column {col}", field="features")
    return raw


def _codes_from_edges(column: np.ndarray, edges: np.ndarray) -> Tuple[np.ndarray, int]:
    # side='left': a value equal to an edge stays in the lower bin
    codes = np.searchsorted(edges, column, side='left')
    # Collapse empty bins (repeated edges) so levels are contiguous
    levels, codes = np.unique(codes, return_inverse=True)
    return codes.astype(np.int64), int(levels.size)


def quantile_edges(column: np.ndarray, bins: int) -> np.ndarray:
    """Interior edges at the k/bins empirical quantiles, midpoint rule between order statistics"""
    return np.quantile(column, np.arange(1, bins) / bins, method='midpoint')


def uniform_edges(column: np.ndarray, bins: int) -> np.ndarray:
    """Interior edges splitting [min, max] into equal-width bins"""
    return np.linspace(column.min(), column.max(), bins + 1)[1:-1]


def quantile_discretize(raw: np.ndarray, spec: DiscretizerSpec = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discretize every column by its empirical quantiles.

    Args:
        raw: N x M real matrix
        spec: DiscretizerSpec (strategy is forced to quantile)

    Returns:
        (codes, arity): N x M integer levels and per-column level counts.
        Constant columns map to level 0 with arity 1.
    """
    spec = spec or DiscretizerSpec()
    return discretize(raw, DiscretizerSpec(bins=spec.bins, strategy=DiscretizeStrategy.QUANTILE))


def uniform_discretize(raw: np.ndarray, spec: DiscretizerSpec = None) -> Tuple[np.ndarray, np.ndarray]:
    """Equal-width counterpart of quantile_discretize"""
    spec = spec or DiscretizerSpec()
    return discretize(raw, DiscretizerSpec(bins=spec.bins, strategy=DiscretizeStrategy.UNIFORM))


def discretize(raw: np.ndarray, spec: DiscretizerSpec) -> Tuple[np.ndarray, np.ndarray]:
    raw = _check_finite(raw)
    edge_fn = quantile_edges if spec.strategy is DiscretizeStrategy.QUANTILE else uniform_edges

    codes = np.zeros(raw.shape, dtype=np.int64)
    arity = np.ones(raw.shape[1], dtype=np.int64)
    for j in range(raw.shape[1]):
        column = raw[:, j]
        if np.all(column == column[0]):
            continue
        codes[:, j], arity[j] = _codes_from_edges(column, edge_fn(column, spec.bins))
    return codes, arity
