"""
Optimal Transport Between Class Distributions
Exact (network simplex / LP) and entropic (Sinkhorn) Wasserstein distances
over a finite label set, plus the KL divergence used as the baseline measure.

Example:
    d = GroundMetric.from_matrix(["cat", "husky", "alaska"],
                                 [[0, 1.0, 1.0], [1.0, 0, 0.2], [1.0, 0.2, 0]])
    plan = exact_wasserstein(DiscreteDistribution([0, 1, 0]),
                             DiscreteDistribution([0, 0, 1]), d)
    plan.cost  # 0.2
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple
import math

import numpy as np
import ot as pot
from scipy.optimize import linprog
from scipy.special import rel_entr

from core.errors import (
    ConvergenceError,
    InfeasibleProblemError,
    MetricValidationError,
    ValidationError,
    WassFSError,
)
from logging_config import setup_logger

logger = setup_logger('ot', 'ot.log')

# Value returned by kl_divergence when p puts mass where q has none
KL_SATURATED = math.inf

SYMMETRY_TOL = 1e-9
TRIANGLE_TOL = 1e-9
RENORMALIZE_TOL = 1e-6


@dataclass(eq=False)
class DiscreteDistribution:
    """Probability vector over the n_c class labels"""
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if probs.size == 0:
            raise ValidationError("distribution must have at least one class", field="probs")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("distribution contains NaN or infinite entries", field="probs")
        if np.any(probs < 0):
            raise ValidationError(f"negative probability {probs.min():.3g}", field="probs")
        total = probs.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValidationError(f"probabilities sum to {total:.9g}, expected 1", field="probs")
        probs = probs / total
        probs.flags.writeable = False
        self.probs = probs

    @classmethod
    def from_counts(cls, counts: Sequence[float], smoothing: float = 0.0) -> 'DiscreteDistribution':
        """Normalize (smoothed) counts into a distribution"""
        counts = np.asarray(counts, dtype=float) + smoothing
        total = counts.sum()
        if total <= 0:
            raise ValidationError("cannot normalize all-zero counts", field="counts")
        return cls(counts / total)

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]

    def __len__(self) -> int:
        return self.n_classes

    def __repr__(self) -> str:
        return f"DiscreteDistribution({np.array2string(self.probs, precision=4)})"


@dataclass(eq=False)
class GroundMetric:
    """
    Class-dissimilarity matrix D with D[i][j] = d(c_i, c_j).

    Construction validates zero diagonal, symmetry, strictly positive
    off-diagonal entries and the triangle inequality.
    """
    dist: np.ndarray
    labels: Tuple[str, ...]

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        labels = tuple(str(label) for label in self.labels)
        n = len(labels)

        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise MetricValidationError(f"distance matrix must be square, got shape {dist.shape}")
        if dist.shape[0] != n:
            raise MetricValidationError(f"{n} labels for a {dist.shape[0]}x{dist.shape[0]} matrix")
        if len(set(labels)) != n:
            raise MetricValidationError("class labels must be unique")
        if not np.all(np.isfinite(dist)):
            raise MetricValidationError("distance matrix contains NaN or infinite entries")

        diag = np.flatnonzero(np.diag(dist) != 0)
        if diag.size:
            i = int(diag[0])
            raise MetricValidationError(
                f"nonzero diagonal d({labels[i]},{labels[i]})={dist[i, i]}", indices=(i, i)
            )

        asym = np.abs(dist - dist.T)
        if asym.max(initial=0.0) > SYMMETRY_TOL:
            i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
            i, j = sorted((int(i), int(j)))
            raise MetricValidationError(
                f"asymmetric entries d({labels[i]},{labels[j]})={dist[i, j]} "
                f"vs d({labels[j]},{labels[i]})={dist[j, i]}",
                indices=(i, j),
            )
        dist = (dist + dist.T) / 2.0

        off = ~np.eye(n, dtype=bool)
        if np.any(dist[off] <= 0):
            i, j = np.argwhere((dist <= 0) & off)[0]
            raise MetricValidationError(
                f"off-diagonal distance d({labels[i]},{labels[j]})={dist[i, j]} must be positive",
                indices=(int(i), int(j)),
            )

        triple = find_triangle_violation(dist)
        if triple is not None:
            i, j, k = triple
            raise MetricValidationError(
                f"triangle inequality violated: d({labels[i]},{labels[j]})={dist[i, j]:.6g} > "
                f"d({labels[i]},{labels[k]}) + d({labels[k]},{labels[j]})={dist[i, k] + dist[k, j]:.6g}",
                indices=triple,
            )

        dist.flags.writeable = False
        self.dist = dist
        self.labels = labels

    @classmethod
    def from_matrix(cls, labels: Sequence[str], dist: Sequence[Sequence[float]]) -> 'GroundMetric':
        return cls(dist=np.asarray(dist, dtype=float), labels=tuple(labels))

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def max_distance(self) -> float:
        return float(self.dist.max(initial=0.0))

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise ValidationError(f"unknown class label '{label}'", field="label") from None

    def distance(self, a: str, b: str) -> float:
        return float(self.dist[self.index_of(a), self.index_of(b)])

    def scaled(self, alpha: float) -> 'GroundMetric':
        """Metric with every distance multiplied by alpha > 0"""
        if alpha <= 0:
            raise ValidationError("scale factor must be positive", field="alpha")
        return GroundMetric(self.dist * alpha, self.labels)

    def neighbors(self, index: int, threshold: float) -> List[int]:
        """Classes c with 0 < d(index, c) <= threshold"""
        row = self.dist[index]
        return [int(c) for c in np.flatnonzero((row > 0) & (row <= threshold + 1e-12))]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'matrix',
            'labels': list(self.labels),
            'dist': self.dist.tolist(),
        }


def find_triangle_violation(dist: np.ndarray, tol: float = TRIANGLE_TOL) -> Optional[Tuple[int, int, int]]:
    """
    Exhaustive O(n^3) triangle check, one n x n slice per intermediate k.

    Returns the first (i, j, k) in lexicographic order with
    d(i, j) > d(i, k) + d(k, j) + tol, or None.
    """
    n = dist.shape[0]
    first_k = np.full((n, n), -1, dtype=int)
    for k in range(n):
        bad = dist - (dist[:, k][:, None] + dist[k, :][None, :]) > tol
        first_k[bad & (first_k < 0)] = k
    hits = np.argwhere(first_k >= 0)
    if hits.size == 0:
        return None
    i, j = hits[0]
    return int(i), int(j), int(first_k[i, j])


@dataclass(eq=False)
class TransportPlan:
    """Coupling Q with prescribed marginals and its transport cost tr(Q^T D)"""
    coupling: np.ndarray
    cost: float
    method: str = "exact"
    iterations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'coupling': self.coupling.tolist(),
            'cost': self.cost,
            'method': self.method,
            'iterations': self.iterations,
        }


@dataclass
class SinkhornConfig:
    """
    Entropic regularization settings.

    lam is the strength lambda (the entropy term is weighted by 1/lam); tol
    bounds the L1 marginal residual of the returned coupling. Balancing that
    stops within max_rounding_residual is rounded onto the marginals.
    """
    lam: float = 100.0
    max_iter: int = 10000
    tol: float = 1e-9
    log_domain_threshold: float = 30.0
    epsilon_scaling: bool = True
    max_rounding_residual: float = 5e-3

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("lambda must be > 0", field="lambda")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0", field="tol")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1", field="max_iter")
        if not self.max_rounding_residual >= 0:
            raise ValidationError("max_rounding_residual must be >= 0", field="max_rounding_residual")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': self.lam,
            'max_iter': self.max_iter,
            'tol': self.tol,
            'log_domain_threshold': self.log_domain_threshold,
            'epsilon_scaling': self.epsilon_scaling,
            'max_rounding_residual': self.max_rounding_residual,
        }


def _check_dimensions(p: DiscreteDistribution, q: DiscreteDistribution,
                      d: Optional[GroundMetric] = None):
    if p.n_classes != q.n_classes:
        raise ValidationError(f"distribution sizes differ: {p.n_classes} vs {q.n_classes}",
                              field="dimension")
    if d is not None and d.n_classes != p.n_classes:
        raise ValidationError(f"metric has {d.n_classes} classes, distributions have {p.n_classes}",
                              field="dimension")


def _identity_plan(p: DiscreteDistribution, method: str) -> TransportPlan:
    return TransportPlan(coupling=np.diag(p.probs), cost=0.0, method=method)


def exact_wasserstein(p: DiscreteDistribution, q: DiscreteDistribution, d: GroundMetric,
                      solver: str = "network-simplex") -> TransportPlan:
    """
    Solve the discrete transport LP exactly.

    Args:
        p: source distribution (row marginals)
        q: target distribution (column marginals)
        d: ground metric
        solver: "network-simplex" (POT) or "highs" (scipy LP)

    Returns:
        Optimal TransportPlan; cost = tr(Q^T D)
    """
    _check_dimensions(p, q, d)
    a, b, D = p.probs, q.probs, d.dist

    if np.array_equal(a, b):
        return _identity_plan(p, "exact")

    if solver == "network-simplex":
        coupling, log = pot.emd(a, b, D, numItermax=1_000_000, log=True)
        status = log.get('result_code', 1)
        if status == 0:
            raise InfeasibleProblemError(f"transport problem infeasible: {log.get('warning')}")
        if status != 1:
            raise WassFSError(f"network simplex stopped early: {log.get('warning')}")
    elif solver == "highs":
        coupling = _solve_highs(a, b, D)
    else:
        raise ValidationError(f"unknown exact solver '{solver}'", field="solver")

    coupling = np.clip(np.asarray(coupling, dtype=float), 0.0, None)
    cost = float(np.sum(coupling * D))
    return TransportPlan(coupling=coupling, cost=max(cost, 0.0), method="exact")


def _solve_highs(a: np.ndarray, b: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Transportation LP through scipy's HiGHS dual simplex"""
    n = a.shape[0]
    # Row-sum constraints then column-sum constraints over vec(Q)
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n:(i + 1) * n] = 1.0
        A_eq[n + i, i::n] = 1.0
    b_eq = np.concatenate([a, b])

    res = linprog(D.reshape(-1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status == 2:
        raise InfeasibleProblemError(f"transport problem infeasible: {res.message}")
    if res.status != 0:
        raise WassFSError(f"LP solver failed: {res.message}")
    return res.x.reshape(n, n)


def sinkhorn_wasserstein(p: DiscreteDistribution, q: DiscreteDistribution, d: GroundMetric,
                         cfg: Optional[SinkhornConfig] = None) -> TransportPlan:
    """
    Entropy-regularized transport by matrix balancing (POT).

    Balancing runs in the log domain when lam * max(D) exceeds
    cfg.log_domain_threshold. With cfg.epsilon_scaling the balancing is
    warm-started from a decade schedule of weaker regularizations ending at
    cfg.lam. A coupling whose L1 marginal residual is above cfg.tol but
    within cfg.max_rounding_residual is rounded onto the transport polytope.
    The reported cost is the transport term tr(Q^T D) of the regularized
    plan, without the entropy term.

    Raises:
        ConvergenceError: marginal residual above cfg.max_rounding_residual
            after cfg.max_iter iterations, or the kernel exp(-lam * D) underflowed
    """
    cfg = cfg or SinkhornConfig()
    _check_dimensions(p, q, d)
    a, b, D = p.probs, q.probs, d.dist

    if np.array_equal(a, b):
        return _identity_plan(p, "sinkhorn")

    # zero-mass rows and columns carry nothing in any coupling
    rows, cols = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    a_sub, b_sub = a[rows], b[cols]
    D_sub = D[np.ix_(rows, cols)]
    max_d = float(D_sub.max(initial=0.0))

    warmstart = None
    total_iterations = 0
    for lam in _lambda_schedule(cfg, max_d):
        coupling, warmstart, iterations = _balance(a_sub, b_sub, D_sub, lam, cfg, warmstart)
        total_iterations += iterations

    if not np.all(np.isfinite(coupling)):
        raise ConvergenceError("Sinkhorn produced a non-finite coupling; reduce lambda or use the exact solver")

    residual = _marginal_residual(coupling, a_sub, b_sub)
    if residual > cfg.tol:
        if residual > cfg.max_rounding_residual:
            raise ConvergenceError(
                f"Sinkhorn did not converge in {cfg.max_iter} iterations (residual {residual:.3g}); "
                "reduce lambda or use the exact solver"
            )
        logger.debug(f"Sinkhorn residual {residual:.3g} after {total_iterations} iterations: rounding onto marginals")
        coupling = _round_to_marginals(coupling, a_sub, b_sub)

    full = np.zeros_like(D)
    full[np.ix_(rows, cols)] = coupling
    cost = float(np.sum(full * D))
    return TransportPlan(coupling=full, cost=cost, method="sinkhorn", iterations=total_iterations)


def _marginal_residual(Q: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(Q.sum(axis=1) - a).sum() + np.abs(Q.sum(axis=0) - b).sum())


def _lambda_schedule(cfg: SinkhornConfig, max_d: float) -> List[float]:
    """Increasing lambdas ending at cfg.lam, from lam/1000 while lam*max(D) stays >= 1"""
    if not cfg.epsilon_scaling or max_d <= 0:
        return [cfg.lam]
    stages = [cfg.lam / 10.0 ** k for k in (3, 2, 1)]
    return [lam for lam in stages if lam * max_d >= 1.0] + [cfg.lam]


def _balance(a: np.ndarray, b: np.ndarray, D: np.ndarray, lam: float, cfg: SinkhornConfig,
             warmstart: Optional[Tuple[np.ndarray, np.ndarray, float]]
             ) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray, float], int]:
    """
    One POT balancing run at strength lam.

    warmstart carries (log_u, log_v, lam) of the previous stage; log scalings
    are lam * dual potentials, so they rescale by the lambda ratio.
    """
    final = lam == cfg.lam
    stop = cfg.tol if final else max(cfg.tol, 1e-5)
    start = None
    if warmstart is not None:
        log_u, log_v, prev_lam = warmstart
        start = (log_u * (lam / prev_lam), log_v * (lam / prev_lam))

    if lam * D.max(initial=0.0) > cfg.log_domain_threshold:
        logger.debug(f"lambda*max(D)={lam * D.max():.1f} > {cfg.log_domain_threshold}: log-domain balancing")
        coupling, log = pot.sinkhorn(a, b, D, 1.0 / lam, method="sinkhorn_log", numItermax=cfg.max_iter,
                                     stopThr=stop, warmstart=start, log=True, warn=False)
        log_u, log_v = log['log_u'], log['log_v']
    else:
        if np.any(np.exp(-lam * D) == 0):
            raise ConvergenceError(
                f"kernel exp(-lambda*D) underflowed (lambda*max(D)={lam * D.max():.1f}); "
                "reduce lambda or enable log-domain balancing"
            )
        coupling, log = pot.sinkhorn(a, b, D, 1.0 / lam, method="sinkhorn", numItermax=cfg.max_iter,
                                     stopThr=stop, warmstart=start, log=True, warn=False)
        with np.errstate(divide='ignore'):
            log_u, log_v = np.log(log['u']), np.log(log['v'])

    iterations = int(log.get('niter', 0)) + 1
    return np.asarray(coupling, dtype=float), (np.asarray(log_u), np.asarray(log_v), lam), iterations


def _round_to_marginals(Q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Project an approximate coupling onto {Q >= 0 : Q 1 = a, Q^T 1 = b}.

    Scales overfull rows then overfull columns down, and spreads the missing
    mass as a rank-one correction; the L1 change is at most twice the input
    residual.
    """
    row_sums = Q.sum(axis=1)
    x = np.minimum(np.divide(a, row_sums, out=np.ones_like(a), where=row_sums > 0), 1.0)
    F = Q * x[:, None]
    col_sums = F.sum(axis=0)
    y = np.minimum(np.divide(b, col_sums, out=np.ones_like(b), where=col_sums > 0), 1.0)
    F = F * y[None, :]
    err_rows = a - F.sum(axis=1)
    err_cols = b - F.sum(axis=0)
    missing = err_rows.sum()
    if missing > 0:
        F = F + np.outer(err_rows, err_cols) / missing
    return np.clip(F, 0.0, None)


def kl_divergence(p: DiscreteDistribution, q: DiscreteDistribution,
                  floor: Optional[float] = None) -> float:
    """
    KL(p || q) = sum_i p_i ln(p_i / q_i), with 0 ln(0/q) = 0.

    Args:
        floor: additive floor applied to q before division; None returns
            KL_SATURATED whenever p_i > 0 and q_i = 0

    Returns:
        Nonnegative divergence or KL_SATURATED
    """
    _check_dimensions(p, q)
    target = q.probs if floor is None else q.probs + floor
    terms = rel_entr(p.probs, target)
    value = float(np.sum(terms))
    if not math.isfinite(value):
        return KL_SATURATED
    return max(value, 0.0)
