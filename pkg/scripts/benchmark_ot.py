#!/usr/bin/env python3
"""
Benchmark: exact vs entropic transport
Times the network simplex, the HiGHS LP and Sinkhorn balancing on random
class distributions of growing size, and reports how far Sinkhorn lands
from the exact cost.

Usage:
    python scripts/benchmark_ot.py --sizes 5,10,20,40,80 --repeats 20 --lam 100
"""

from pathlib import Path
import sys
import time

import click
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.transport.ot import (  # noqa: E402
    DiscreteDistribution,
    GroundMetric,
    SinkhornConfig,
    exact_wasserstein,
    sinkhorn_wasserstein,
)
from core.synthetic import class_names  # noqa: E402


def random_instance(rng: np.random.Generator, n_classes: int):
    points = rng.random((n_classes, 3))
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    metric = GroundMetric(dist / dist.max(), class_names(n_classes))
    p = DiscreteDistribution(rng.dirichlet(np.ones(n_classes)))
    q = DiscreteDistribution(rng.dirichlet(np.ones(n_classes)))
    return p, q, metric


def time_call(fn):
    start = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - start


@click.command()
@click.option("--sizes", default="5,10,20,40,80", show_default=True, help="Class counts to benchmark")
@click.option("--repeats", default=20, show_default=True, help="Random instances per size")
@click.option("--lam", default=100.0, show_default=True, help="Sinkhorn regularization strength")
@click.option("--seed", default=0, show_default=True)
def main(sizes: str, repeats: int, lam: float, seed: int):
    rng = np.random.default_rng(seed)
    cfg = SinkhornConfig(lam=lam)

    print("\n" + "=" * 80)
    print(f"TRANSPORT SOLVER BENCHMARK (lambda={lam}, {repeats} instances per size)")
    print("=" * 80)
    print(f"{'n_c':>5} {'simplex ms':>12} {'highs ms':>12} {'sinkhorn ms':>12} {'max |gap|':>12}")
    print("-" * 80)

    for n_classes in [int(s) for s in sizes.split(",")]:
        simplex_t, highs_t, sinkhorn_t, gaps = [], [], [], []
        for _ in range(repeats):
            p, q, metric = random_instance(rng, n_classes)
            exact, t = time_call(lambda: exact_wasserstein(p, q, metric))
            simplex_t.append(t)
            _, t = time_call(lambda: exact_wasserstein(p, q, metric, solver="highs"))
            highs_t.append(t)
            approx, t = time_call(lambda: sinkhorn_wasserstein(p, q, metric, cfg))
            sinkhorn_t.append(t)
            gaps.append(abs(approx.cost - exact.cost))
        print(f"{n_classes:>5} {1e3 * np.mean(simplex_t):>12.3f} {1e3 * np.mean(highs_t):>12.3f} "
              f"{1e3 * np.mean(sinkhorn_t):>12.3f} {max(gaps):>12.2e}")
    print("=" * 80)


if __name__ == "__main__":
    main()
