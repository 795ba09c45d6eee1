"""
Brute-Force Robustness Verification
Exhaustive search over every feature subset of size K on exactly-enumerated
joints, checking that
    ε₂(θ) <= ε₁                    for every θ
    d₁(θ₂*) - d₁(θ₁*) <= 4 ε₁      for the clean and noisy optima
    ε₁ <= Σ p(y, ỹ) D              for the paired-label joint

Example:
    report = verify_theorems(TheoremFamily(n_features=5, n_classes=3, k=2), trials=200, seed=0)
    report.print_summary()
    assert report.violations == 0
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple
import json

import numpy as np

from core.data.dataset import Dataset
from core.errors import ValidationError
from core.executors.parallel_sweep_executor import ParallelSweepExecutor
from core.noise.label_noise import (
    d_clean,
    d_noisy,
    epsilon1,
    epsilon1_upper_bound,
    epsilon2,
    joint_label_counts,
)
from core.synthetic import random_enumerable_joint
from core.transport.ot import GroundMetric
from logging_config import setup_logger

logger = setup_logger('noise', 'noise.log')

MAX_FEATURES = 6
MAX_CLASSES = 4
INEQUALITY_TOL = 1e-7
RATIO_QUANTILES = (0.0, 0.5, 0.9, 0.99, 1.0)


@dataclass
class TheoremFamily:
    """Size of the random enumerable joints used as verification instances"""
    n_features: int = 5
    n_classes: int = 3
    k: int = 2
    noise_max: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not 1 <= self.n_features <= MAX_FEATURES:
            raise ValidationError(f"n_features must lie in [1, {MAX_FEATURES}] for exhaustive search",
                                  field="n_features")
        if not 2 <= self.n_classes <= MAX_CLASSES:
            raise ValidationError(f"n_classes must lie in [2, {MAX_CLASSES}] for exhaustive search",
                                  field="n_classes")
        if not 1 <= self.k <= self.n_features:
            raise ValidationError(f"k must lie in [1, {self.n_features}]", field="k")
        if not 0.0 <= self.noise_max <= 1.0:
            raise ValidationError("noise_max must lie in [0, 1]", field="noise_max")
        if self.alpha <= 0:
            raise ValidationError("alpha must be > 0", field="alpha")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_features': self.n_features,
            'n_classes': self.n_classes,
            'k': self.k,
            'noise_max': self.noise_max,
            'alpha': self.alpha,
        }


@dataclass
class NoiseDiagnostics:
    """
    Clean-vs-noisy gaps for one instance.

    d1_theta and d2_theta are evaluated at the noisy optimum θ₂*; epsilon2 at
    θ₂* too, max_epsilon2 over every θ of size K.
    """
    epsilon1: float
    epsilon2: float
    max_epsilon2: float
    d1_theta: float
    d2_theta: float
    d1_optimum: float
    epsilon1_bound: float
    theta_star_clean: Tuple[int, ...]
    theta_star_noisy: Tuple[int, ...]

    @property
    def regret(self) -> float:
        return self.d1_theta - self.d1_optimum

    def violations(self, tol: float = INEQUALITY_TOL) -> List[str]:
        found = []
        if self.max_epsilon2 > self.epsilon1 + tol:
            found.append(f"epsilon2 {self.max_epsilon2:.12g} > epsilon1 {self.epsilon1:.12g}")
        if self.regret > 4 * self.epsilon1 + tol:
            found.append(f"regret {self.regret:.12g} > 4*epsilon1 {4 * self.epsilon1:.12g}")
        if self.regret < -tol:
            found.append(f"negative regret {self.regret:.12g}")
        if self.epsilon1 > self.epsilon1_bound + tol:
            found.append(f"epsilon1 {self.epsilon1:.12g} > bound {self.epsilon1_bound:.12g}")
        return found

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epsilon1': self.epsilon1,
            'epsilon2': self.epsilon2,
            'max_epsilon2': self.max_epsilon2,
            'd1_theta': self.d1_theta,
            'd2_theta': self.d2_theta,
            'd1_optimum': self.d1_optimum,
            'epsilon1_bound': self.epsilon1_bound,
            'theta_star_clean': list(self.theta_star_clean),
            'theta_star_noisy': list(self.theta_star_noisy),
            'regret': self.regret,
        }


def _argmin_subset(values: Dict[Tuple[int, ...], float]) -> Tuple[int, ...]:
    # lexicographically first subset among values equal to 12 decimals
    return min(values, key=lambda theta: (round(values[theta], 12), theta))


def diagnose(clean: Dataset, noisy: Dataset, d: GroundMetric, k: int) -> NoiseDiagnostics:
    """Exhaustive diagnostics over every θ with |θ| = k (population quantities, no smoothing)"""
    subsets = list(combinations(range(clean.n_features), k))
    d1 = {theta: d_clean(clean, theta, d) for theta in subsets}
    d2 = {theta: d_noisy(noisy, theta, d) for theta in subsets}
    e2 = {theta: epsilon2(clean, noisy, theta, d) for theta in subsets}

    theta1 = _argmin_subset(d1)
    theta2 = _argmin_subset(d2)
    counts = joint_label_counts(clean.labels, noisy.labels, d.n_classes, clean.sample_weights())

    return NoiseDiagnostics(
        epsilon1=epsilon1(clean, noisy, d),
        epsilon2=e2[theta2],
        max_epsilon2=max(e2.values()),
        d1_theta=d1[theta2],
        d2_theta=d2[theta2],
        d1_optimum=d1[theta1],
        epsilon1_bound=epsilon1_upper_bound(counts, d),
        theta_star_clean=theta1,
        theta_star_noisy=theta2,
    )


@dataclass
class TrialResult:
    """One verification instance"""
    trial: int
    noise_level: float
    diagnostics: NoiseDiagnostics
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def ratio(self) -> float:
        """regret / (4 ε₁), 0 when ε₁ = 0"""
        bound = 4 * self.diagnostics.epsilon1
        return self.diagnostics.regret / bound if bound > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = self.diagnostics.to_dict()
        data.update({
            'trial': self.trial,
            'noise_level': self.noise_level,
            'four_epsilon1': 4 * self.diagnostics.epsilon1,
            'ratio': self.ratio,
            'passed': self.passed,
            'violations': self.violations,
        })
        return data


@dataclass
class TheoremReport:
    """Per-trial results plus the aggregate the CLI writes as report.json"""
    family: TheoremFamily
    seed: int
    results: List[TrialResult]

    @property
    def violations(self) -> int:
        return sum(1 for r in self.results if not r.passed)

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.results), default=0.0)

    def summary(self) -> Dict[str, Any]:
        ratios = np.array([r.ratio for r in self.results]) if self.results else np.zeros(1)
        return {
            'trials': len(self.results),
            'violations': self.violations,
            'max_ratio': self.max_ratio,
            'ratio_quantiles': {str(q): float(v) for q, v in
                                zip(RATIO_QUANTILES, np.quantile(ratios, RATIO_QUANTILES))},
            'strictly_positive_regret': sum(1 for r in self.results if r.diagnostics.regret > INEQUALITY_TOL),
            'max_epsilon1': max((r.diagnostics.epsilon1 for r in self.results), default=0.0),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            'family': self.family.to_dict(),
            'seed': self.seed,
            'summary': self.summary(),
            'trials': [r.to_dict() for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def print_summary(self):
        summary = self.summary()
        print("\n" + "=" * 80)
        print("ROBUSTNESS BOUND VERIFICATION")
        print("=" * 80)
        print(f"  Instances: {summary['trials']} (M={self.family.n_features}, "
              f"n_c={self.family.n_classes}, K={self.family.k}, seed={self.seed})")
        print(f"  Violations: {summary['violations']}")
        print(f"  Max regret / (4 eps1): {summary['max_ratio']:.4f}")
        print(f"  Instances with positive regret: {summary['strictly_positive_regret']}")
        for r in self.results:
            for message in r.violations:
                print(f"  trial {r.trial}: {message}")
        print("=" * 80)


def run_trial(family: TheoremFamily, seed: int, trial: int) -> TrialResult:
    """One instance drawn from its own stream default_rng([seed, trial])"""
    rng = np.random.default_rng([seed, trial])
    joint = random_enumerable_joint(rng, family.n_features, family.n_classes, family.noise_max, family.alpha)
    diagnostics = diagnose(joint.clean, joint.noisy, joint.metric, family.k)
    violations = diagnostics.violations()
    if violations:
        logger.error(f"trial {trial}: {'; '.join(violations)}")
    return TrialResult(trial=trial, noise_level=joint.noise_level, diagnostics=diagnostics,
                       violations=violations)


def verify_theorems(family: TheoremFamily, trials: int, seed: int,
                    executor: Optional[ParallelSweepExecutor] = None) -> TheoremReport:
    """
    Brute-force check of both inequalities and the paired-label bound.

    Raises:
        ValidationError: trials < 1
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}", field="trials")
    executor = executor or ParallelSweepExecutor(max_workers=1)
    logger.info(f"Verifying bounds on {trials} instances (M={family.n_features}, n_c={family.n_classes}, "
                f"K={family.k}, seed={seed})")
    results = executor.map(lambda t: run_trial(family, seed, t), range(trials), desc="trials")
    report = TheoremReport(family=family, seed=seed, results=results)
    logger.info(f"{report.violations} violations, max ratio {report.max_ratio:.4f}")
    return report
