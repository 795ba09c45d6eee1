"""
Label Noise Injection and Diagnostics
Neighbor flipping, noisy-at-random (NAR) and feature-dependent (NNAR) label
corruption, plus the expected-Wasserstein gaps between clean and noisy
conditionals and the paired-label upper bound on ε₁.

Every injector draws from numpy.random.default_rng(seed) and touches labels
only; features, groups and weights pass through unchanged.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from core.data.dataset import Dataset
from core.errors import ValidationError
from core.estimators.estimator import DEFAULT_CONFIG_CAP, conditional_table
from core.selectors.selector import Measure, SelectionConfig, align_to_metric, expected_selection_distance
from core.transport.ot import GroundMetric, exact_wasserstein
from logging_config import setup_logger

logger = setup_logger('noise', 'noise.log')

STOCHASTIC_TOL = 1e-9

# hook(true_label, feature_row) -> probability row over classes
NoiseHook = Callable[[int, np.ndarray], Sequence[float]]


class NoiseModel(Enum):
    NEIGHBOR_FLIP = "neighbor-flip"
    NAR = "nar"
    NNAR_HOOK = "nnar-hook"


@dataclass
class NoiseSpec:
    """
    Label corruption settings.

    neighbor-flip uses P and neighbor_threshold; nar uses transition;
    nnar-hook uses hook.
    """
    model: NoiseModel = NoiseModel.NEIGHBOR_FLIP
    P: float = 0.0
    neighbor_threshold: float = 0.2
    transition: Optional[np.ndarray] = None
    seed: int = 0
    hook: Optional[NoiseHook] = None

    def __post_init__(self):
        if isinstance(self.model, str):
            try:
                self.model = NoiseModel(self.model)
            except ValueError:
                raise ValidationError(f"unknown noise model '{self.model}'", field="model") from None
        if not 0.0 <= self.P <= 1.0:
            raise ValidationError(f"P must lie in [0, 1], got {self.P}", field="P")
        if self.neighbor_threshold < 0:
            raise ValidationError("neighbor_threshold must be >= 0", field="neighbor_threshold")
        if self.transition is not None:
            self.transition = check_transition(self.transition)
        if self.model is NoiseModel.NAR and self.transition is None:
            raise ValidationError("NAR noise needs a transition matrix", field="transition")
        if self.model is NoiseModel.NNAR_HOOK and self.hook is None:
            raise ValidationError("NNAR noise needs a hook", field="hook")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model.value,
            'P': self.P,
            'neighbor_threshold': self.neighbor_threshold,
            'transition': None if self.transition is None else self.transition.tolist(),
            'seed': self.seed,
        }


def check_transition(transition: Sequence[Sequence[float]], n_classes: Optional[int] = None) -> np.ndarray:
    """Validate a row-stochastic matrix"""
    T = np.asarray(transition, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValidationError(f"transition must be square, got shape {T.shape}", field="transition")
    if n_classes is not None and T.shape[0] != n_classes:
        raise ValidationError(f"transition is {T.shape[0]}x{T.shape[0]} for {n_classes} classes",
                              field="transition")
    if not np.all(np.isfinite(T)) or np.any(T < 0):
        raise ValidationError("transition entries must be finite and nonnegative", field="transition")
    sums = T.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        raise ValidationError(f"transition row {bad[0]} sums to {sums[bad[0]]:.12g}, expected 1",
                              field="transition")
    return T


def _sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one class per row"""
    cum = np.cumsum(probs, axis=1)
    return np.minimum((cum <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


def flip_labels(ds: Dataset, d: GroundMetric, spec: NoiseSpec) -> Dataset:
    """
    With probability P, replace each label by a uniform draw from its
    neighbors {c : 0 < d(label, c) <= neighbor_threshold}.

    Labels without neighbors stay put.
    """
    ds = align_to_metric(ds, d)
    rng = np.random.default_rng(spec.seed)
    flip = rng.random(ds.n_samples) < spec.P
    pick = rng.random(ds.n_samples)

    neighbors = [d.neighbors(c, spec.neighbor_threshold) for c in range(d.n_classes)]
    labels = ds.labels.copy()
    for row in np.flatnonzero(flip):
        options = neighbors[labels[row]]
        if options:
            labels[row] = options[int(pick[row] * len(options))]

    changed = int(np.sum(labels != ds.labels))
    logger.debug(f"neighbor-flip P={spec.P} seed={spec.seed}: {changed}/{ds.n_samples} labels changed")
    return ds.with_labels(labels, provenance=f"{ds.provenance}|flip(P={spec.P},seed={spec.seed})")


def apply_nar(ds: Dataset, transition: Sequence[Sequence[float]], seed: int = 0) -> Dataset:
    """Resample each label from its row of p(Ỹ | Y)"""
    T = check_transition(transition, ds.n_classes)
    rng = np.random.default_rng(seed)
    u = rng.random(ds.n_samples)
    labels = _sample_rows(T[ds.labels], u)
    return ds.with_labels(labels, provenance=f"{ds.provenance}|nar(seed={seed})")


def apply_nnar(ds: Dataset, hook: NoiseHook, seed: int = 0) -> Dataset:
    """
    Resample each label from hook(true_label, feature_row).

    Raises:
        ValidationError: a hook row that is not a probability vector
    """
    rows = np.empty((ds.n_samples, ds.n_classes))
    for r in range(ds.n_samples):
        row = np.asarray(hook(int(ds.labels[r]), ds.features[r]), dtype=float)
        if row.shape != (ds.n_classes,) or np.any(row < 0) or abs(row.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"hook returned an invalid distribution for row {r}", field="hook")
        rows[r] = row
    rng = np.random.default_rng(seed)
    labels = _sample_rows(rows, rng.random(ds.n_samples))
    return ds.with_labels(labels, provenance=f"{ds.provenance}|nnar(seed={seed})")


def apply_noise(ds: Dataset, d: GroundMetric, spec: NoiseSpec) -> Dataset:
    """Dispatch on spec.model"""
    if spec.model is NoiseModel.NEIGHBOR_FLIP:
        return flip_labels(ds, d, spec)
    ds = align_to_metric(ds, d)
    if spec.model is NoiseModel.NAR:
        return apply_nar(ds, spec.transition, spec.seed)
    return apply_nnar(ds, spec.hook, spec.seed)


def joint_label_counts(clean: np.ndarray, noisy: np.ndarray, n_classes: int,
                       weights: Optional[np.ndarray] = None) -> np.ndarray:
    """(true class x observed class) counts, optionally weighted"""
    clean = np.asarray(clean, dtype=np.int64)
    noisy = np.asarray(noisy, dtype=np.int64)
    if clean.shape != noisy.shape:
        raise ValidationError(f"{clean.size} clean labels vs {noisy.size} noisy labels", field="labels")
    w = np.ones(clean.size) if weights is None else np.asarray(weights, dtype=float)
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (clean, noisy), w)
    return counts


def epsilon1_upper_bound(joint_counts: np.ndarray, d: GroundMetric) -> float:
    """
    Σ_ij p(c_i, c̃_j) D_ij for the normalized paired-label joint.

    Raises:
        ValidationError: negative or all-zero counts
    """
    counts = np.asarray(joint_counts, dtype=float)
    if counts.shape != d.dist.shape:
        raise ValidationError(f"counts shape {counts.shape} vs metric {d.dist.shape}", field="dimension")
    if np.any(counts < 0):
        raise ValidationError("joint label counts must be nonnegative", field="counts")
    total = counts.sum()
    if total <= 0:
        raise ValidationError("joint label counts are all zero", field="counts")
    return float(np.sum(counts / total * d.dist))


def _check_paired(clean: Dataset, noisy: Dataset):
    if clean.features.shape != noisy.features.shape or not np.array_equal(clean.features, noisy.features):
        raise ValidationError("clean and noisy datasets must share features row for row", field="noisy")
    if not np.array_equal(clean.sample_weights(), noisy.sample_weights()):
        raise ValidationError("clean and noisy datasets must share row weights", field="noisy")


def _paired_gap(clean: Dataset, noisy: Dataset, columns: Sequence[int], d: GroundMetric,
                smoothing: float, config_cap: int) -> float:
    clean_table = conditional_table(clean, columns, smoothing, config_cap)
    noisy_table = conditional_table(noisy, columns, smoothing, config_cap)
    total = 0.0
    # Same rows and weights, so both tables list the same configurations in the same order
    for weight, p, q in zip(clean_table.weights, clean_table.distributions, noisy_table.distributions):
        total += float(weight) * exact_wasserstein(p, q, d).cost
    return total


def epsilon1(clean: Dataset, noisy: Dataset, d: GroundMetric, smoothing: float = 0.0,
             config_cap: int = DEFAULT_CONFIG_CAP) -> float:
    """ε₁ = E_X W[p(Y | x), p(Ỹ | x)] over observed full configurations (exact Wasserstein)"""
    _check_paired(clean, noisy)
    clean, noisy = align_to_metric(clean, d), align_to_metric(noisy, d)
    return _paired_gap(clean, noisy, list(range(clean.n_features)), d, smoothing, config_cap)


def epsilon2(clean: Dataset, noisy: Dataset, theta: Sequence[int], d: GroundMetric, smoothing: float = 0.0,
             config_cap: int = DEFAULT_CONFIG_CAP) -> float:
    """ε₂(θ) = E_{X_θ} W[p(Y | x_θ), p(Ỹ | x_θ)]"""
    _check_paired(clean, noisy)
    clean, noisy = align_to_metric(clean, d), align_to_metric(noisy, d)
    return _paired_gap(clean, noisy, sorted(int(j) for j in theta), d, smoothing, config_cap)


def _population_config(smoothing: float, config_cap: int) -> SelectionConfig:
    return SelectionConfig(K=1, measure=Measure.WASSERSTEIN_EXACT, smoothing=smoothing, config_cap=config_cap)


def d_clean(clean: Dataset, theta: Sequence[int], d: GroundMetric, smoothing: float = 0.0,
            config_cap: int = DEFAULT_CONFIG_CAP) -> float:
    """d₁(θ) = E_X W[p(Y | x), p(Y | x_θ)]"""
    return expected_selection_distance(clean, theta, d, _population_config(smoothing, config_cap))


def d_noisy(noisy: Dataset, theta: Sequence[int], d: GroundMetric, smoothing: float = 0.0,
            config_cap: int = DEFAULT_CONFIG_CAP) -> float:
    """d₂(θ) = E_X W[p(Ỹ | x), p(Ỹ | x_θ)]"""
    return expected_selection_distance(noisy, theta, d, _population_config(smoothing, config_cap))
