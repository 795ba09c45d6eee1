"""
Noisy-Label Sweep
Full factorial experiment over flip probability P x seed x measure: flip the
training labels, select on the noisy labels, train kNN on the clean labels
and score the test set at every feature count of the grid.

Output tables:
    losses.tsv    n_features, k, P, measure, loss, seed (one row per cell x grid point)
    averaged.tsv  n_features, k, measure, loss (mean over P and seeds)
"""

from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union
import csv

import numpy as np

from core.data.dataset import Dataset
from core.errors import ValidationError
from core.evaluation.knn import DEFAULT_K_NN, evaluate_selection
from core.executors.parallel_sweep_executor import ParallelSweepExecutor
from core.noise.label_noise import NoiseSpec, flip_labels
from core.selectors.selector import Measure, SelectionConfig, select_features
from core.transport.ot import GroundMetric
from logging_config import setup_logger

logger = setup_logger('noise', 'noise.log')

LOSS_COLUMNS = ("n_features", "k", "P", "measure", "loss", "seed")
AVERAGED_COLUMNS = ("n_features", "k", "measure", "loss")


@dataclass(frozen=True)
class SweepCell:
    P: float
    seed: int
    measure: Measure


@dataclass
class LossRow:
    n_features: int
    k: int
    P: float
    measure: str
    loss: float
    seed: int

    def sort_key(self) -> Tuple:
        return self.measure, self.P, self.seed, self.n_features, self.k

    def to_fields(self) -> List[str]:
        return [str(self.n_features), str(self.k), repr(float(self.P)), self.measure,
                repr(float(self.loss)), str(self.seed)]


@dataclass
class SweepConfig:
    """Grid of the experiment; selection settings other than K and measure come from base"""
    p_list: Sequence[float]
    seeds: Sequence[int]
    measures: Sequence[Measure]
    feature_grid: Sequence[int]
    ks: Sequence[int] = (5,)
    k_nn: int = DEFAULT_K_NN
    neighbor_threshold: float = 0.2
    distance: str = "hamming"
    base: SelectionConfig = field(default_factory=lambda: SelectionConfig(K=1))

    def __post_init__(self):
        if not self.p_list:
            raise ValidationError("P list is empty", field="p_list")
        if any(not 0.0 <= p <= 1.0 for p in self.p_list):
            raise ValidationError("every P must lie in [0, 1]", field="p_list")
        if not self.seeds:
            raise ValidationError("seed list is empty", field="seed")
        if not self.measures:
            raise ValidationError("measure list is empty", field="measure")
        self.measures = [Measure.parse(m) for m in self.measures]
        if not self.feature_grid or min(self.feature_grid) < 1:
            raise ValidationError("feature grid must hold counts >= 1", field="feature_grid")
        self.feature_grid = sorted(set(int(n) for n in self.feature_grid))
        if not self.ks or min(self.ks) < 1:
            raise ValidationError("top-k list must hold values >= 1", field="top_k")

    def cells(self) -> List[SweepCell]:
        return [SweepCell(float(p), int(s), m) for m, p, s in product(self.measures, self.p_list, self.seeds)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'p_list': [float(p) for p in self.p_list],
            'seeds': [int(s) for s in self.seeds],
            'measures': [m.value for m in self.measures],
            'feature_grid': list(self.feature_grid),
            'ks': list(self.ks),
            'k_nn': self.k_nn,
            'neighbor_threshold': self.neighbor_threshold,
            'distance': self.distance,
            'base': self.base.to_dict(),
        }


@dataclass
class SweepResult:
    rows: List[LossRow]

    def averaged(self) -> List[Dict[str, Any]]:
        """Mean loss over P and seeds per (measure, n_features, k)"""
        buckets: Dict[Tuple[str, int, int], List[float]] = {}
        for row in self.rows:
            buckets.setdefault((row.measure, row.n_features, row.k), []).append(row.loss)
        return [
            {'n_features': n, 'k': k, 'measure': measure, 'loss': float(np.mean(values))}
            for (measure, n, k), values in sorted(buckets.items())
        ]

    def write(self, out_dir: Union[str, Path]):
        out_dir = Path(out_dir)
        with open(out_dir / "losses.tsv", 'w', newline='') as f:
            writer = csv.writer(f, delimiter='\t', lineterminator='\n')
            writer.writerow(LOSS_COLUMNS)
            for row in self.rows:
                writer.writerow(row.to_fields())
        with open(out_dir / "averaged.tsv", 'w', newline='') as f:
            writer = csv.writer(f, delimiter='\t', lineterminator='\n')
            writer.writerow(AVERAGED_COLUMNS)
            for entry in self.averaged():
                writer.writerow([entry['n_features'], entry['k'], entry['measure'], repr(entry['loss'])])


def run_cell(train: Dataset, test: Dataset, d: GroundMetric, cfg: SweepConfig, cell: SweepCell) -> List[LossRow]:
    """Flip, select down to the smallest grid point, evaluate every grid point"""
    noisy = flip_labels(train, d, NoiseSpec(P=cell.P, neighbor_threshold=cfg.neighbor_threshold, seed=cell.seed))
    selection = replace(cfg.base, K=cfg.feature_grid[0], measure=cell.measure)
    trace = select_features(noisy, d, selection)

    rows = []
    for n in cfg.feature_grid:
        losses = evaluate_selection(train, test, trace.retained_at(n), d, cfg.ks, cfg.k_nn, cfg.distance)
        for k, loss in losses.items():
            rows.append(LossRow(n, k, cell.P, cell.measure.value, loss, cell.seed))
    logger.info(f"Cell P={cell.P} seed={cell.seed} {cell.measure.value}: "
                f"{len(rows)} losses, min {min(r.loss for r in rows):.4f}")
    return rows


def run_noise_sweep(train: Dataset, test: Dataset, d: GroundMetric, cfg: SweepConfig,
                    executor: Optional[ParallelSweepExecutor] = None) -> SweepResult:
    """
    Every (measure, P, seed) cell, rows sorted by (measure, P, seed, n_features, k).

    Raises:
        ValidationError: a grid point above the feature count, or a top-k above n_c
    """
    if max(cfg.feature_grid) > train.n_features:
        raise ValidationError(f"feature grid reaches {max(cfg.feature_grid)} but the data has "
                              f"{train.n_features} features", field="feature_grid")
    if max(cfg.ks) > d.n_classes:
        raise ValidationError(f"top-k {max(cfg.ks)} exceeds the {d.n_classes} classes", field="top_k")

    executor = executor or ParallelSweepExecutor(max_workers=1)
    cells = cfg.cells()
    logger.info(f"Noise sweep: {len(cells)} cells x {len(cfg.feature_grid)} feature counts")
    per_cell = executor.map(lambda cell: run_cell(train, test, d, cfg, cell), cells, desc="sweep cells")
    rows = sorted((row for rows in per_cell for row in rows), key=LossRow.sort_key)
    return SweepResult(rows=rows)
