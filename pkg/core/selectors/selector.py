"""
Markov-Blanket Backward Elimination
Scores every feature by the expected discrepancy δ between the class
conditionals with and without it (given its most correlated neighbors) and
repeatedly drops the lowest-scoring feature until K remain.

Example:
    cfg = SelectionConfig(K=10, L=3, measure="wasserstein-exact")
    trace = select_features(train, metric, cfg)
    trace.retained          # [2, 5, ...]
    trace.retained_at(15)   # retained set when the loop had 15 features left
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json

import numpy as np

from cache.delta_score_cache import DeltaScoreCache
from core.data.dataset import Dataset
from core.errors import ValidationError
from core.estimators.estimator import (
    DEFAULT_CONFIG_CAP,
    DEFAULT_SMOOTHING,
    conditional_table,
    correlation_matrix,
    top_L_neighbors,
)
from core.executors.parallel_sweep_executor import ParallelSweepExecutor
from core.transport.ot import (
    DiscreteDistribution,
    GroundMetric,
    SinkhornConfig,
    exact_wasserstein,
    kl_divergence,
    sinkhorn_wasserstein,
)
from logging_config import setup_logger

logger = setup_logger('selector', 'selector.log')

# Largest class count scored with the exact solver when no measure is given
EXACT_MAX_CLASSES = 32

# δ values are compared at this many decimals (relative to max(D)) before the index tie rule
_TIE_DECIMALS = 12


class Measure(Enum):
    """Probabilistic distance between class conditionals"""
    WASSERSTEIN_EXACT = "wasserstein-exact"
    WASSERSTEIN_SINKHORN = "wasserstein-sinkhorn"
    KL = "kl"

    @property
    def is_wasserstein(self) -> bool:
        return self is not Measure.KL

    @classmethod
    def parse(cls, value: Union[str, 'Measure']) -> 'Measure':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValidationError(f"unknown measure '{value}' (expected one of {choices})",
                                  field="measure") from None


def default_measure(n_classes: int) -> Measure:
    return Measure.WASSERSTEIN_EXACT if n_classes <= EXACT_MAX_CLASSES else Measure.WASSERSTEIN_SINKHORN


@dataclass
class SelectionConfig:
    """
    Backward-elimination settings.

    measure None picks wasserstein-exact up to 32 classes and
    wasserstein-sinkhorn above. kl_floor is the additive floor for the KL
    baseline (None disables it).
    """
    K: int
    L: int = 3
    measure: Optional[Measure] = None
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    smoothing: float = DEFAULT_SMOOTHING
    recompute_neighbors: bool = True
    incremental: bool = True
    kl_floor: Optional[float] = 1e-12
    max_workers: int = 1
    config_cap: int = DEFAULT_CONFIG_CAP

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}", field="K")
        if self.L < 1:
            raise ValidationError(f"L must be >= 1, got {self.L}", field="L")
        if self.smoothing < 0:
            raise ValidationError("smoothing must be >= 0", field="smoothing")
        if self.config_cap < 1:
            raise ValidationError("config_cap must be >= 1", field="config_cap")
        if self.measure is not None:
            self.measure = Measure.parse(self.measure)

    def resolved_measure(self, n_classes: int) -> Measure:
        return self.measure if self.measure is not None else default_measure(n_classes)

    def to_dict(self, n_classes: Optional[int] = None) -> Dict[str, Any]:
        measure = self.measure if n_classes is None else self.resolved_measure(n_classes)
        return {
            'K': self.K,
            'L': self.L,
            'measure': None if measure is None else measure.value,
            'sinkhorn': self.sinkhorn.to_dict(),
            'smoothing': self.smoothing,
            'recompute_neighbors': self.recompute_neighbors,
            'incremental': self.incremental,
            'kl_floor': self.kl_floor,
            'config_cap': self.config_cap,
        }


@dataclass
class EliminationRecord:
    """One eliminated feature"""
    feature: int
    delta: float
    round: int
    reason: str = "min-delta"  # min-delta, constant

    def to_dict(self) -> Dict[str, Any]:
        return {'feature': self.feature, 'delta': self.delta, 'round': self.round, 'reason': self.reason}


@dataclass
class SelectionTrace:
    """
    Ordered elimination record plus the retained set θ.

    rounds holds one snapshot per elimination: every remaining feature's δ
    and neighborhood at that round. stats holds deterministic counters only.
    """
    n_features: int
    eliminated: List[EliminationRecord]
    retained: List[int]
    rounds: List[Dict[str, Any]] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def elimination_order(self) -> List[int]:
        return [record.feature for record in self.eliminated]

    def retained_at(self, n: int) -> List[int]:
        """
        The feature set when n features remained.

        Backward elimination is nested, so one trace run down to the smallest
        K answers every larger feature count.
        """
        K = len(self.retained)
        if not K <= n <= self.n_features:
            raise ValidationError(f"feature count {n} outside [{K}, {self.n_features}]", field="n_features")
        restored = self.elimination_order[len(self.eliminated) - (n - K):] if n > K else []
        return sorted(self.retained + restored)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_features': self.n_features,
            'eliminated': [record.to_dict() for record in self.eliminated],
            'retained': list(self.retained),
            'rounds': self.rounds,
            'config': self.config,
            'stats': self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SelectionTrace':
        try:
            return cls(
                n_features=int(data['n_features']),
                eliminated=[EliminationRecord(**record) for record in data['eliminated']],
                retained=[int(j) for j in data['retained']],
                rounds=data.get('rounds', []),
                config=data.get('config', {}),
                stats=data.get('stats', {}),
            )
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed selection trace ({e})", field="trace") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SelectionTrace':
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"trace file {path} does not exist", field="trace")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})", field="trace") from None


def align_to_metric(ds: Dataset, d: GroundMetric) -> Dataset:
    """Re-index dataset labels onto the metric's class order"""
    if tuple(ds.classes) == tuple(d.labels):
        return ds
    missing = [c for c in ds.classes if c not in d.labels]
    if missing:
        raise ValidationError(f"class '{missing[0]}' has no entry in the ground metric", field="metric")
    mapping = np.array([d.index_of(c) for c in ds.classes], dtype=np.int64)
    return Dataset(features=ds.features, labels=mapping[ds.labels], arity=ds.arity, classes=d.labels,
                   provenance=ds.provenance, groups=ds.groups, weights=ds.weights)


def measure_distance(p: DiscreteDistribution, q: DiscreteDistribution, d: GroundMetric,
                     measure: Measure, sinkhorn: Optional[SinkhornConfig] = None,
                     kl_floor: Optional[float] = 1e-12) -> float:
    """M[p, q] for the configured measure"""
    if measure is Measure.WASSERSTEIN_EXACT:
        return exact_wasserstein(p, q, d).cost
    if measure is Measure.WASSERSTEIN_SINKHORN:
        return sinkhorn_wasserstein(p, q, d, sinkhorn).cost
    return kl_divergence(p, q, floor=kl_floor)


def expected_discrepancy(ds: Dataset, outer: Sequence[int], inner: Sequence[int], d: GroundMetric,
                         measure: Measure, smoothing: float, sinkhorn: Optional[SinkhornConfig] = None,
                         kl_floor: Optional[float] = 1e-12,
                         config_cap: int = DEFAULT_CONFIG_CAP) -> float:
    """
    E over observed x_outer of M[p(Y | x_outer), p(Y | x_inner)], inner ⊆ outer.

    Configurations absent from ds carry no weight.
    """
    outer = list(outer)
    positions = [outer.index(j) for j in inner]
    fine = conditional_table(ds, outer, smoothing, config_cap)
    coarse = conditional_table(ds, list(inner), smoothing, config_cap)
    coarse_lookup = {
        tuple(int(v) for v in config): dist
        for config, dist in zip(coarse.configurations, coarse.distributions)
    }

    total = 0.0
    for config, dist, weight in zip(fine.configurations, fine.distributions, fine.weights):
        parent = coarse_lookup[tuple(int(config[k]) for k in positions)]
        if np.array_equal(dist.probs, parent.probs):
            continue
        total += float(weight) * measure_distance(dist, parent, d, measure, sinkhorn, kl_floor)
    return max(total, 0.0)


def delta_score(ds: Dataset, i: int, G_i: Sequence[int], d: GroundMetric, cfg: SelectionConfig) -> float:
    """
    δ(X_i) = E[M(p(Y | x_G, x_i), p(Y | x_G))] over observed (x_G, x_i).

    Raises:
        ValidationError: i inside its own conditioning set
    """
    G_i = [int(j) for j in G_i]
    if i in G_i:
        raise ValidationError(f"feature {i} appears in its own conditioning set", field="G_i")
    ds = align_to_metric(ds, d)
    measure = cfg.resolved_measure(d.n_classes)
    return expected_discrepancy(ds, G_i + [int(i)], G_i, d, measure, cfg.smoothing,
                                cfg.sinkhorn, cfg.kl_floor, cfg.config_cap)


def expected_selection_distance(ds: Dataset, theta: Sequence[int], d: GroundMetric,
                                cfg: Optional[SelectionConfig] = None) -> float:
    """
    E_X M[p(Y | X), p(Y | X_θ)] over observed full configurations.

    With cfg None the measure is exact Wasserstein without smoothing, the
    population quantity used for the noise diagnostics.

    Raises:
        TableTooLargeError: more distinct full configurations than cfg.config_cap
    """
    theta = sorted(int(j) for j in theta)
    bad = [j for j in theta if not 0 <= j < ds.n_features]
    if bad:
        raise ValidationError(f"feature index {bad[0]} out of range", field="theta")
    if cfg is None:
        cfg = SelectionConfig(K=max(len(theta), 1), measure=Measure.WASSERSTEIN_EXACT, smoothing=0.0)
    ds = align_to_metric(ds, d)
    measure = cfg.resolved_measure(d.n_classes)
    return expected_discrepancy(ds, list(range(ds.n_features)), theta, d, measure, cfg.smoothing,
                                cfg.sinkhorn, cfg.kl_floor, cfg.config_cap)


def _tie_key(delta: float, feature: int, scale: float) -> Tuple[float, int]:
    return round(delta / scale, _TIE_DECIMALS), feature


def select_features(ds: Dataset, d: GroundMetric, cfg: SelectionConfig,
                    executor: Optional[ParallelSweepExecutor] = None) -> SelectionTrace:
    """
    Backward elimination down to cfg.K features.

    Correlations are computed once. Each round rebuilds every remaining
    feature's top-L neighborhood over the remaining features (or keeps the
    first round's, minus eliminated members, when recompute_neighbors is
    off), scores δ and eliminates the argmin, ties to the lowest index.
    Constant features go first with δ = 0.

    Raises:
        ValidationError: K > M, or dataset classes missing from the metric
    """
    M = ds.n_features
    if cfg.K > M:
        raise ValidationError(f"K={cfg.K} exceeds the {M} available features", field="K")
    ds = align_to_metric(ds, d)
    measure = cfg.resolved_measure(d.n_classes)
    scale = d.max_distance if measure.is_wasserstein else 1.0
    executor = executor or ParallelSweepExecutor(max_workers=cfg.max_workers)
    cache = DeltaScoreCache(enabled=cfg.incremental)

    logger.info(f"Selecting {cfg.K} of {M} features ({measure.value}, L={cfg.L}, N={ds.n_samples})")

    remaining = list(range(M))
    eliminated: List[EliminationRecord] = []
    rounds: List[Dict[str, Any]] = []
    round_no = 0

    if M > cfg.K:
        corr = correlation_matrix(ds)
        for j in corr.constant_features:
            if len(remaining) == cfg.K:
                break
            round_no += 1
            remaining.remove(j)
            eliminated.append(EliminationRecord(j, 0.0, round_no, reason="constant"))
            rounds.append({'round': round_no, 'eliminated': j, 'reason': 'constant'})
            logger.info(f"Round {round_no}: eliminated constant feature {j}")

    fixed_neighbors: Optional[Dict[int, List[int]]] = None
    while len(remaining) > cfg.K:
        round_no += 1
        if cfg.recompute_neighbors or fixed_neighbors is None:
            neighbors = {i: top_L_neighbors(corr, i, cfg.L, remaining) for i in remaining}
            if not cfg.recompute_neighbors:
                fixed_neighbors = neighbors
        else:
            alive = set(remaining)
            neighbors = {i: [g for g in fixed_neighbors[i] if g in alive] for i in remaining}

        def score(i: int) -> float:
            G_i = tuple(neighbors[i])
            return cache.get_or_compute(i, G_i, lambda: delta_score(ds, i, G_i, d, cfg))

        deltas = executor.map(score, remaining, desc=f"round {round_no}")
        for i, delta in zip(remaining, deltas):
            logger.debug(f"Round {round_no}: delta({i} | {neighbors[i]}) = {delta:.6g}")

        loser, loser_delta = min(zip(remaining, deltas), key=lambda pair: _tie_key(pair[1], pair[0], scale))
        rounds.append({
            'round': round_no,
            'eliminated': loser,
            'reason': 'min-delta',
            'scores': {str(i): delta for i, delta in zip(remaining, deltas)},
            'neighbors': {str(i): list(neighbors[i]) for i in remaining},
        })
        eliminated.append(EliminationRecord(loser, loser_delta, round_no))
        remaining.remove(loser)
        cache.invalidate(loser)
        logger.info(f"Round {round_no}: eliminated feature {loser} (delta={loser_delta:.6g}), "
                    f"{len(remaining)} remain")

    stats = {
        'delta_evaluations': cache.stats.cache_misses,
        'cache': cache.stats.to_dict(),
        'constant_features': [r.feature for r in eliminated if r.reason == "constant"],
    }
    return SelectionTrace(
        n_features=M,
        eliminated=eliminated,
        retained=sorted(remaining),
        rounds=rounds,
        config=cfg.to_dict(d.n_classes),
        stats=stats,
    )
