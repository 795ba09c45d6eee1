"""
Dataset Ingestion and Sample Store
Immutable discrete-feature datasets: loading from delimited text, multi-label
expansion and seeded train/test splitting.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union
import csv

import numpy as np

from core.data.discretize import MAX_LEVELS, DiscretizerSpec, discretize
from core.errors import ValidationError
from logging_config import setup_logger

logger = setup_logger('data', 'data.log')


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(eq=False)
class Dataset:
    """
    N samples x M discrete features with one class index per row.

    labels index into `classes` (the GroundMetric label order). `groups`
    maps each row to its source sample (rows of an expanded multi-label
    sample share a group). `weights` are optional row probabilities, used for
    exactly-enumerated joint distributions; None means uniform.
    """
    features: np.ndarray
    labels: np.ndarray
    arity: np.ndarray
    classes: Tuple[str, ...]
    provenance: str = ""
    groups: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.asarray(self.features)
        labels = np.asarray(self.labels).reshape(-1)
        if features.ndim != 2:
            raise ValidationError(f"features must be N x M, got shape {features.shape}", field="features")
        n, m = features.shape
        if n < 1 or m < 1:
            raise ValidationError(f"dataset needs N >= 1 and M >= 1, got {n} x {m}", field="features")
        if not np.issubdtype(features.dtype, np.integer):
            if not np.all(np.equal(np.mod(features, 1), 0)):
                raise ValidationError("features must be integer levels", field="features")
        features = features.astype(np.int64)
        if labels.shape[0] != n:
            raise ValidationError(f"{labels.shape[0]} labels for {n} rows", field="labels")

        arity = np.asarray(self.arity, dtype=np.int64).reshape(-1)
        if arity.shape[0] != m:
            raise ValidationError(f"{arity.shape[0]} arities for {m} features", field="arity")
        if np.any(arity < 1) or np.any(arity > MAX_LEVELS):
            raise ValidationError(f"feature arity must lie in [1, {MAX_LEVELS}]", field="arity")
        if np.any(features < 0):
            raise ValidationError("feature levels must be nonnegative", field="features")
        over = np.argwhere(features >= arity[None, :])
        if over.size:
            row, col = over[0]
            raise ValidationError(
                f"feature {col} value {features[row, col]} at row {row} exceeds arity {arity[col]}",
                field="arity")

        classes = tuple(str(c) for c in self.classes)
        labels = labels.astype(np.int64)
        if np.any(labels < 0) or np.any(labels >= len(classes)):
            raise ValidationError(f"label index outside [0, {len(classes)})", field="labels")

        groups = np.arange(n) if self.groups is None else np.asarray(self.groups, dtype=np.int64)
        if groups.shape != (n,):
            raise ValidationError("groups must have one entry per row", field="groups")

        weights = self.weights
        if weights is not None:
            weights = np.asarray(weights, dtype=float).reshape(-1)
            if weights.shape != (n,) or np.any(weights < 0) or weights.sum() <= 0:
                raise ValidationError("weights must be nonnegative, one per row, not all zero",
                                      field="weights")
            weights = _frozen(weights / weights.sum())

        self.features = _frozen(features)
        self.labels = _frozen(labels)
        self.arity = _frozen(arity)
        self.classes = classes
        self.groups = _frozen(groups)
        self.weights = weights

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def sample_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n_samples, 1.0 / self.n_samples)
        return self.weights

    def subset_rows(self, rows: Sequence[int], provenance: Optional[str] = None) -> 'Dataset':
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            arity=self.arity,
            classes=self.classes,
            provenance=self.provenance if provenance is None else provenance,
            groups=self.groups[rows],
            weights=None if self.weights is None else self.weights[rows],
        )

    def with_labels(self, labels: np.ndarray, provenance: str) -> 'Dataset':
        """Same features, new labels (used by the noise injectors)"""
        return replace(self, labels=np.asarray(labels), provenance=provenance)

    def label_sets(self) -> Tuple[np.ndarray, List[frozenset]]:
        """
        Collapse expanded rows back to source samples.

        Returns:
            (first row index of each group, label set of each group), in
            order of first appearance
        """
        order: Dict[int, int] = {}
        sets: List[set] = []
        for row, group in enumerate(self.groups.tolist()):
            if group not in order:
                order[group] = len(sets)
                sets.append(set())
            sets[order[group]].add(int(self.labels[row]))
        first_rows = np.array([np.flatnonzero(self.groups == g)[0] for g in order], dtype=np.int64)
        return first_rows, [frozenset(s) for s in sets]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_samples': self.n_samples,
            'n_features': self.n_features,
            'n_classes': self.n_classes,
            'arity': self.arity.tolist(),
            'provenance': self.provenance,
        }


@dataclass
class DatasetSchema:
    """How to read a delimited dataset file"""
    label_columns: Tuple[str, ...] = ("label",)
    delimiter: Optional[str] = None
    discretize: str = "none"
    bins: int = 10
    declared_arity: Optional[int] = None
    label_separator: str = "|"

    def __post_init__(self):
        if isinstance(self.label_columns, str):
            self.label_columns = (self.label_columns,)
        self.label_columns = tuple(self.label_columns)
        if not self.label_columns:
            raise ValidationError("at least one label column is required", field="label_columns")
        if self.discretize not in ("none", "quantile", "uniform"):
            raise ValidationError(f"unknown discretization '{self.discretize}'", field="discretize")
        if self.declared_arity is not None and not 1 <= self.declared_arity <= MAX_LEVELS:
            raise ValidationError(f"declared arity must lie in [1, {MAX_LEVELS}]", field="arity")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'label_columns': list(self.label_columns),
            'delimiter': self.delimiter,
            'discretize': self.discretize,
            'bins': self.bins,
            'declared_arity': self.declared_arity,
            'label_separator': self.label_separator,
        }


def load_dataset(path: Union[str, Path], schema: DatasetSchema, classes: Sequence[str]) -> Dataset:
    """
    Read a delimited text file with a header row.

    Label cells may hold several labels separated by schema.label_separator;
    such samples are expanded to one row per label.

    Raises:
        ValidationError: ragged rows, unknown labels, non-numeric features,
            feature levels above the declared arity
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"dataset file {path} does not exist", field="data")
    delimiter = schema.delimiter
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","

    with open(path, newline='') as f:
        rows = [row for row in csv.reader(f, delimiter=delimiter) if any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise ValidationError(f"{path} needs a header and at least one data row", field="data")

    header = [cell.strip() for cell in rows[0]]
    missing = [c for c in schema.label_columns if c not in header]
    if missing:
        raise ValidationError(f"label column '{missing[0]}' not in header of {path}", field="label_columns")
    label_idx = [header.index(c) for c in schema.label_columns]
    feature_idx = [i for i in range(len(header)) if i not in label_idx]
    if not feature_idx:
        raise ValidationError(f"{path} has no feature columns", field="data")

    class_index = {str(c): i for i, c in enumerate(classes)}
    raw = np.empty((len(rows) - 1, len(feature_idx)))
    label_sets: List[List[int]] = []
    for r, row in enumerate(rows[1:]):
        line_no = r + 2
        if len(row) != len(header):
            raise ValidationError(f"{path}:{line_no}: ragged row with {len(row)} fields, "
                                  f"header has {len(header)}", field="data")
        labels: List[int] = []
        for i in label_idx:
            for name in row[i].split(schema.label_separator):
                name = name.strip()
                if not name:
                    continue
                if name not in class_index:
                    raise ValidationError(f"{path}:{line_no}: label '{name}' is not in the metric label list",
                                          field="labels")
                if class_index[name] not in labels:
                    labels.append(class_index[name])
        label_sets.append(labels)
        for out_col, i in enumerate(feature_idx):
            try:
                raw[r, out_col] = float(row[i])
            except ValueError:
                raise ValidationError(f"{path}:{line_no}: non-numeric value '{row[i]}' in column "
                                      f"'{header[i]}'", field="features") from None

    if schema.discretize == "none":
        features, arity = _discrete_levels(raw, schema, path)
    else:
        features, arity = discretize(raw, DiscretizerSpec(bins=schema.bins, strategy=schema.discretize))

    logger.info(f"Loaded {path.name}: {raw.shape[0]} samples, {raw.shape[1]} features")
    return expand_multilabel(features, label_sets, classes, arity=arity, provenance=str(path))


def _discrete_levels(raw: np.ndarray, schema: DatasetSchema, path: Path) -> Tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(raw)) or np.any(raw < 0) or np.any(raw != np.round(raw)):
        raise ValidationError(f"{path}: pre-discretized features must be nonnegative integers "
                              "(use --discretize for real-valued input)", field="features")
    features = raw.astype(np.int64)
    if schema.declared_arity is not None:
        over = np.argwhere(features >= schema.declared_arity)
        if over.size:
            row, col = over[0]
            raise ValidationError(
                f"{path}:{row + 2}: value {features[row, col]} violates declared arity {schema.declared_arity}",
                field="arity")
        arity = np.full(features.shape[1], schema.declared_arity, dtype=np.int64)
    else:
        arity = np.maximum(features.max(axis=0) + 1, 1)
        if np.any(arity > MAX_LEVELS):
            raise ValidationError(f"{path}: inferred arity above {MAX_LEVELS} levels", field="arity")
    return features, arity


def expand_multilabel(features: np.ndarray, label_sets: Sequence[Sequence[int]], classes: Sequence[str],
                      arity: Optional[Sequence[int]] = None, provenance: str = "") -> Dataset:
    """
    One row per (sample, label) pair, features duplicated.

    Rows of the same source sample share a group id.

    Raises:
        ValidationError: a sample with an empty label set
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValidationError(f"features must be N x M, got shape {features.shape}", field="features")
    if len(label_sets) != features.shape[0]:
        raise ValidationError(f"{len(label_sets)} label sets for {features.shape[0]} samples", field="labels")

    rows: List[int] = []
    labels: List[int] = []
    for sample, label_set in enumerate(label_sets):
        if len(label_set) == 0:
            raise ValidationError(f"sample {sample} has an empty label set", field="labels")
        for label in label_set:
            rows.append(sample)
            labels.append(int(label))

    if arity is None:
        arity = np.maximum(features.max(axis=0) + 1, 1) if features.size else np.ones(features.shape[1])
    rows_arr = np.asarray(rows, dtype=np.int64)
    return Dataset(
        features=features[rows_arr],
        labels=np.asarray(labels, dtype=np.int64),
        arity=arity,
        classes=tuple(classes),
        provenance=provenance,
        groups=rows_arr,
    )


def train_test_split(ds: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Seeded partition of source samples into train and test.

    Rows sharing a group (an expanded multi-label sample) stay on the same side.

    Raises:
        ValidationError: fraction outside (0, 1) or an empty side
    """
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction}", field="fraction")

    unique_groups = np.unique(ds.groups)
    n_train = int(round(fraction * unique_groups.size))
    if n_train == 0 or n_train == unique_groups.size:
        raise ValidationError(
            f"fraction {fraction} of {unique_groups.size} samples leaves one side empty", field="fraction")

    rng = np.random.default_rng(seed)
    permuted = rng.permutation(unique_groups)
    train_groups = permuted[:n_train]
    in_train = np.isin(ds.groups, train_groups)

    train = ds.subset_rows(np.flatnonzero(in_train), provenance=f"{ds.provenance}|train(seed={seed})")
    test = ds.subset_rows(np.flatnonzero(~in_train), provenance=f"{ds.provenance}|test(seed={seed})")
    return train, test
