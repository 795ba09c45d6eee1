"""
Tests for exact / entropic transport and the KL baseline
"""

from itertools import combinations
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core.errors import ConvergenceError, MetricValidationError, ValidationError
from core.synthetic import class_names
from core.transport.ot import (
    KL_SATURATED,
    DiscreteDistribution,
    GroundMetric,
    SinkhornConfig,
    exact_wasserstein,
    find_triangle_violation,
    kl_divergence,
    sinkhorn_wasserstein,
)


def random_metric(rng, n):
    points = rng.random((n, 2))
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    return GroundMetric(dist / dist.max(), class_names(n))


def random_distribution(rng, n):
    return DiscreteDistribution(rng.dirichlet(np.ones(n)))


def vertex_enumeration_cost(a, b, D):
    """Minimum of tr(Q^T D) over the basic feasible solutions of the transportation polytope"""
    n = a.shape[0]
    A = np.zeros((2 * n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] = 1.0
        A[n + i, i::n] = 1.0
    rhs = np.concatenate([a, b])
    best = math.inf
    for basis in combinations(range(n * n), 2 * n - 1):
        cols = list(basis)
        x, *_ = np.linalg.lstsq(A[:, cols], rhs, rcond=None)
        if np.abs(A[:, cols] @ x - rhs).max() > 1e-10 or x.min() < -1e-12:
            continue
        best = min(best, float(D.reshape(-1)[cols] @ x))
    return best


# ---------------------------------------------------------------------------
# exact_wasserstein
# ---------------------------------------------------------------------------

def test_identical_distributions_cost_nothing(zero_one_metric):
    plan = exact_wasserstein(DiscreteDistribution([0.5, 0.5]), DiscreteDistribution([0.5, 0.5]), zero_one_metric)
    assert plan.cost == 0.0


def test_husky_is_closer_to_alaska_than_cat(husky_metric):
    husky = DiscreteDistribution([0, 1, 0])
    to_cat = exact_wasserstein(husky, DiscreteDistribution([1, 0, 0]), husky_metric)
    to_alaska = exact_wasserstein(husky, DiscreteDistribution([0, 0, 1]), husky_metric)
    assert to_cat.cost == pytest.approx(1.0, abs=1e-12)
    assert to_alaska.cost == pytest.approx(0.2, abs=1e-12)
    assert to_alaska.cost < to_cat.cost


@pytest.mark.parametrize("solver", ["network-simplex", "highs"])
def test_two_class_closed_form(zero_one_metric, solver):
    plan = exact_wasserstein(DiscreteDistribution([0.7, 0.3]), DiscreteDistribution([0.4, 0.6]),
                             zero_one_metric, solver=solver)
    assert plan.cost == pytest.approx(0.3, abs=1e-9)
    assert plan.coupling.sum(axis=1) == pytest.approx([0.7, 0.3], abs=1e-9)
    assert plan.coupling.sum(axis=0) == pytest.approx([0.4, 0.6], abs=1e-9)
    assert plan.coupling.min() >= 0


def test_exact_matches_vertex_enumeration_small_instances():
    """Both exact solvers agree with the polytope vertex oracle for n_c <= 3"""
    rng = np.random.default_rng(0)
    for trial in range(300):
        n = 2 + trial % 2
        d = random_metric(rng, n)
        p, q = random_distribution(rng, n), random_distribution(rng, n)
        oracle = vertex_enumeration_cost(p.probs, q.probs, d.dist)
        assert exact_wasserstein(p, q, d).cost == pytest.approx(oracle, abs=1e-9)
        assert exact_wasserstein(p, q, d, solver="highs").cost == pytest.approx(oracle, abs=1e-9)


@pytest.mark.slow
def test_exact_matches_vertex_enumeration_thousand_instances():
    rng = np.random.default_rng(1)
    for trial in range(1000):
        n = 2 + trial % 2
        d = random_metric(rng, n)
        p, q = random_distribution(rng, n), random_distribution(rng, n)
        assert exact_wasserstein(p, q, d).cost == pytest.approx(
            vertex_enumeration_cost(p.probs, q.probs, d.dist), abs=1e-9)


def test_exact_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = random_metric(rng, 4)
        p, q, r = (random_distribution(rng, 4) for _ in range(3))
        pq = exact_wasserstein(p, q, d).cost
        assert pq == pytest.approx(exact_wasserstein(q, p, d).cost, abs=1e-9)
        assert exact_wasserstein(p, r, d).cost <= pq + exact_wasserstein(q, r, d).cost + 1e-7


def test_positive_cost_for_distinct_distributions(husky_metric):
    p = DiscreteDistribution([0.2, 0.5, 0.3])
    q = DiscreteDistribution([0.2, 0.4, 0.4])
    assert exact_wasserstein(p, q, husky_metric).cost > 0


def test_dimension_mismatch_is_rejected(zero_one_metric):
    with pytest.raises(ValidationError, match="dimension"):
        exact_wasserstein(DiscreteDistribution([1.0]), DiscreteDistribution([0.5, 0.5]), zero_one_metric)
    with pytest.raises(ValidationError):
        exact_wasserstein(DiscreteDistribution([0.2, 0.3, 0.5]), DiscreteDistribution([0.1, 0.1, 0.8]),
                          zero_one_metric)


def test_unknown_solver(zero_one_metric):
    with pytest.raises(ValidationError, match="solver"):
        exact_wasserstein(DiscreteDistribution([0.7, 0.3]), DiscreteDistribution([0.4, 0.6]),
                          zero_one_metric, solver="simplex-by-hand")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=3, max_size=3),
       st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=3, max_size=3),
       st.floats(min_value=0.1, max_value=10.0))
def test_cost_scales_with_metric(raw_p, raw_q, alpha):
    d = GroundMetric.from_matrix(["x", "y", "z"], [[0, 0.5, 1.0], [0.5, 0, 0.7], [1.0, 0.7, 0]])
    p = DiscreteDistribution(np.array(raw_p) / sum(raw_p))
    q = DiscreteDistribution(np.array(raw_q) / sum(raw_q))
    assert exact_wasserstein(p, q, d.scaled(alpha)).cost == pytest.approx(
        alpha * exact_wasserstein(p, q, d).cost, rel=1e-7, abs=1e-12)


# ---------------------------------------------------------------------------
# sinkhorn_wasserstein
# ---------------------------------------------------------------------------

def test_sinkhorn_identity_case(husky_metric):
    uniform = DiscreteDistribution([1 / 3, 1 / 3, 1 / 3])
    plan = sinkhorn_wasserstein(uniform, uniform, husky_metric)
    assert plan.cost <= 1e-9


def test_sinkhorn_two_class_close_to_exact(zero_one_metric):
    plan = sinkhorn_wasserstein(DiscreteDistribution([0.7, 0.3]), DiscreteDistribution([0.4, 0.6]),
                                zero_one_metric, SinkhornConfig(lam=100, tol=1e-9))
    assert abs(plan.cost - 0.3) <= 0.01
    assert plan.method == "sinkhorn"


def test_sinkhorn_marginals_on_random_pairs():
    rng = np.random.default_rng(3)
    d = random_metric(rng, 5)
    for _ in range(100):
        p, q = random_distribution(rng, 5), random_distribution(rng, 5)
        Q = sinkhorn_wasserstein(p, q, d).coupling
        residual = np.abs(Q.sum(axis=1) - p.probs).sum() + np.abs(Q.sum(axis=0) - q.probs).sum()
        assert residual <= 1e-9
        assert Q.min() >= 0


def test_sinkhorn_within_one_percent_of_exact():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = random_metric(rng, 5)
        p, q = random_distribution(rng, 5), random_distribution(rng, 5)
        gap = abs(sinkhorn_wasserstein(p, q, d, SinkhornConfig(lam=100)).cost - exact_wasserstein(p, q, d).cost)
        assert gap <= 0.01 * d.max_distance


@pytest.mark.slow
def test_sinkhorn_matches_exact_on_thousand_instances():
    rng = np.random.default_rng(2)
    cases = []
    for _ in range(1000):
        d = random_metric(rng, 5)
        cases.append((random_distribution(rng, 5), random_distribution(rng, 5), d))
    started = time.perf_counter()
    for p, q, d in cases:
        plan = sinkhorn_wasserstein(p, q, d, SinkhornConfig(lam=100))
        residual = np.abs(plan.coupling.sum(axis=1) - p.probs).sum() + np.abs(plan.coupling.sum(axis=0) - q.probs).sum()
        assert residual <= 1e-9
        assert abs(plan.cost - exact_wasserstein(p, q, d).cost) <= 0.01 * d.max_distance
    assert time.perf_counter() - started < 30.0


def test_sinkhorn_gap_shrinks_with_lambda():
    rng = np.random.default_rng(5)
    for _ in range(10):
        d = random_metric(rng, 4)
        p, q = random_distribution(rng, 4), random_distribution(rng, 4)
        exact = exact_wasserstein(p, q, d).cost
        gaps = [abs(sinkhorn_wasserstein(p, q, d, SinkhornConfig(lam=lam)).cost - exact)
                for lam in (1, 10, 100, 1000)]
        for looser, tighter in zip(gaps, gaps[1:]):
            assert looser + 1e-6 >= tighter
        assert gaps[-1] <= 0.01 * d.max_distance


def test_sinkhorn_on_point_masses(husky_metric):
    husky = DiscreteDistribution([0, 1, 0])
    plan = sinkhorn_wasserstein(husky, DiscreteDistribution([0, 0, 1]), husky_metric)
    assert plan.cost == pytest.approx(0.2, abs=1e-12)
    assert plan.coupling[1, 2] == pytest.approx(1.0)
    assert sinkhorn_wasserstein(husky, DiscreteDistribution([1, 0, 0]), husky_metric).cost == pytest.approx(1.0)


def test_sinkhorn_zero_mass_classes_stay_empty(husky_metric):
    p = DiscreteDistribution([0.0, 0.6, 0.4])
    q = DiscreteDistribution([0.5, 0.5, 0.0])
    Q = sinkhorn_wasserstein(p, q, husky_metric).coupling
    assert Q[0].sum() == 0.0
    assert Q[:, 2].sum() == 0.0
    assert Q.sum(axis=1) == pytest.approx(p.probs, abs=1e-9)
    assert Q.sum(axis=0) == pytest.approx(q.probs, abs=1e-9)


def test_sinkhorn_rounds_early_stops_onto_the_marginals():
    rng = np.random.default_rng(9)
    d = random_metric(rng, 5)
    cfg = SinkhornConfig(lam=100, max_iter=3, epsilon_scaling=False, max_rounding_residual=2.0)
    for _ in range(20):
        p, q = random_distribution(rng, 5), random_distribution(rng, 5)
        Q = sinkhorn_wasserstein(p, q, d, cfg).coupling
        assert Q.min() >= 0
        assert Q.sum(axis=1) == pytest.approx(p.probs, abs=1e-12)
        assert Q.sum(axis=0) == pytest.approx(q.probs, abs=1e-12)


def test_sinkhorn_kernel_underflow_without_log_domain(zero_one_metric):
    cfg = SinkhornConfig(lam=1000, log_domain_threshold=1e9)
    with pytest.raises(ConvergenceError, match="underflow"):
        sinkhorn_wasserstein(DiscreteDistribution([0.7, 0.3]), DiscreteDistribution([0.4, 0.6]),
                             zero_one_metric, cfg)


def test_sinkhorn_non_convergence_is_reported(husky_metric):
    cfg = SinkhornConfig(lam=5, max_iter=1, tol=1e-15, max_rounding_residual=0.0)
    with pytest.raises(ConvergenceError, match="did not converge"):
        sinkhorn_wasserstein(DiscreteDistribution([0.6, 0.3, 0.1]), DiscreteDistribution([0.1, 0.3, 0.6]),
                             husky_metric, cfg)


@pytest.mark.parametrize("kwargs", [{'lam': 0}, {'tol': 0}, {'max_iter': 0}, {'max_rounding_residual': -1}])
def test_sinkhorn_config_validation(kwargs):
    with pytest.raises(ValidationError):
        SinkhornConfig(**kwargs)


# ---------------------------------------------------------------------------
# kl_divergence
# ---------------------------------------------------------------------------

def test_kl_cannot_rank_mirror_candidates():
    p = DiscreteDistribution([0.5, 0.5])
    assert kl_divergence(p, DiscreteDistribution([0.1, 0.9])) == pytest.approx(
        kl_divergence(p, DiscreteDistribution([0.9, 0.1])), abs=1e-15)


def test_kl_value():
    value = kl_divergence(DiscreteDistribution([0.5, 0.5]), DiscreteDistribution([0.1, 0.9]))
    assert value == pytest.approx(0.5 * math.log(5) + 0.5 * math.log(5 / 9), abs=1e-12)
    assert value == pytest.approx(0.5108, abs=1e-4)


def test_kl_of_identical_distributions():
    p = DiscreteDistribution([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) == 0.0


def test_kl_saturates_without_floor(husky_metric):
    husky = DiscreteDistribution([0, 1, 0])
    assert kl_divergence(husky, DiscreteDistribution([1, 0, 0])) == KL_SATURATED
    with_floor = [kl_divergence(husky, DiscreteDistribution(q), floor=1e-12) for q in ([1, 0, 0], [0, 0, 1])]
    assert math.isfinite(with_floor[0])
    assert with_floor[0] == with_floor[1]


# ---------------------------------------------------------------------------
# DiscreteDistribution / GroundMetric
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [float('nan'), 1.0], []])
def test_invalid_distributions(probs):
    with pytest.raises(ValidationError):
        DiscreteDistribution(probs)


def test_distribution_from_counts_with_smoothing():
    assert DiscreteDistribution.from_counts([1, 0], smoothing=1).probs == pytest.approx([2 / 3, 1 / 3])
    with pytest.raises(ValidationError):
        DiscreteDistribution.from_counts([0, 0])


def test_metric_accepts_zero_one():
    d = GroundMetric.from_matrix(["a", "b"], [[0, 1], [1, 0]])
    assert d.n_classes == 2
    assert d.distance("a", "b") == 1.0


def test_metric_rejects_asymmetry():
    with pytest.raises(MetricValidationError, match="asymmetric"):
        GroundMetric.from_matrix(["a", "b"], [[0, 1], [2, 0]])


def test_metric_rejects_nonzero_diagonal():
    with pytest.raises(MetricValidationError, match="diagonal"):
        GroundMetric.from_matrix(["a", "b"], [[0.1, 1], [1, 0]])


def test_metric_rejects_zero_off_diagonal():
    with pytest.raises(MetricValidationError, match="positive"):
        GroundMetric.from_matrix(["a", "b"], [[0, 0], [0, 0]])


def test_metric_triangle_violation_names_triple():
    with pytest.raises(MetricValidationError, match="triangle") as excinfo:
        GroundMetric.from_matrix(["a", "b", "c"], [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    assert excinfo.value.indices == (0, 2, 1)
    assert find_triangle_violation(np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)) == (0, 2, 1)


def test_triangle_check_reports_the_lexicographically_first_triple():
    rng = np.random.default_rng(4)
    for _ in range(30):
        raw = rng.random((6, 6)) + 0.05
        dist = raw + raw.T
        np.fill_diagonal(dist, 0.0)
        excess = dist[:, :, None] - (dist[:, None, :] + dist.T[None, :, :])
        expected = np.argwhere(excess > 1e-9)
        found = find_triangle_violation(dist)
        if expected.size == 0:
            assert found is None
        else:
            assert found == tuple(int(v) for v in expected[0])


def test_triangle_check_on_a_large_metric():
    points = np.random.default_rng(8).random((400, 3))
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    assert find_triangle_violation(dist) is None
    dist[10, 250] = dist[250, 10] = dist.max() * 3
    assert find_triangle_violation(dist)[:2] == (10, 250)


def test_metric_neighbors(husky_metric):
    assert husky_metric.neighbors(1, 0.2) == [2]
    assert husky_metric.neighbors(0, 0.2) == []
