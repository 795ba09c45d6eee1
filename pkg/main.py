"""
wassfs command line
Feature selection by expected Wasserstein distance, noisy-label sweeps and
brute-force verification of the robustness bounds.

Exit codes: 0 success, 1 bound violation, 2 invalid input.

Usage:
    python main.py select --data train.csv --metric tree.json --k 10 --out runs/a
    python main.py noise-sweep --synthetic hierarchical --p-list 0.1,0.2 --seeds 0,1 --out runs/b
    python main.py verify-bounds --trials 200 --seed 0 --out runs/c
    python main.py ot --p 0.7,0.3 --q 0.4,0.6 --matrix "0,1;1,0"
"""

from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple
import json
import logging
import sys
import time

import click

from core.config import RunConfig, load_run_config
from core.data.dataset import Dataset, DatasetSchema, load_dataset, train_test_split
from core.errors import ConvergenceError, ValidationError, WassFSError
from core.evaluation.knn import evaluate_selection
from core.evaluation.sweep import SweepConfig, run_noise_sweep
from core.executors.parallel_sweep_executor import ParallelSweepExecutor
from core.metrics.ground_metric import load_metric
from core.noise.theorems import TheoremFamily, verify_theorems
from core.selectors.selector import SelectionConfig, SelectionTrace, select_features
from core.synthetic import hierarchical_dataset
from core.transport.ot import (
    DiscreteDistribution,
    GroundMetric,
    SinkhornConfig,
    exact_wasserstein,
    sinkhorn_wasserstein,
)
from logging_config import log_exception, set_console_level, setup_logger

logger = setup_logger('cli', 'cli.log')

EXIT_VIOLATION = 1
EXIT_INVALID = 2
SYNTHETIC_FEATURE_GRID = [5, 10, 15, 20]


def _split_list(value: Optional[str], cast: Callable[[str], Any], name: str) -> Optional[List[Any]]:
    if value is None:
        return None
    try:
        return [cast(part.strip()) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list, got '{value}'", param_hint=name) from None


def int_list(ctx, param, value):
    return _split_list(value, int, f"--{param.name.replace('_', '-')}")


def float_list(ctx, param, value):
    return _split_list(value, float, f"--{param.name.replace('_', '-')}")


def handle_errors(fn):
    """Map wassfs errors onto the exit-code contract"""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, ConvergenceError) as e:
            logger.error(str(e))
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INVALID)
        except WassFSError as e:
            log_exception(logger, f"{fn.__name__} failed: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_VIOLATION)
    return wrapper


def config_option(fn):
    return click.option("--config", "config_file", type=click.Path(dir_okay=False),
                        help="JSON file with defaults for any flag")(fn)


def threads_option(fn):
    return click.option("--threads", type=int, help="Worker cap (also WASSFS_THREADS)")(fn)


def data_options(fn):
    options = [
        click.option("--data", type=click.Path(dir_okay=False), help="Training data (CSV/TSV with header)"),
        click.option("--metric", type=click.Path(dir_okay=False), help="Metric spec (.json) or matrix file"),
        click.option("--label-column", help="Label column name (default: label)"),
        click.option("--discretize", type=click.Choice(["none", "quantile", "uniform"]),
                     help="Discretize real-valued features"),
        click.option("--bins", type=int, help="Bins per feature when discretizing (default 10)"),
        click.option("--arity", type=int, help="Declared level count of pre-discretized features"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(config_file: Optional[str], **flags) -> RunConfig:
    cfg = load_run_config(config_file, flags)
    cfg.write_echo()
    logger.info(f"Config written to {cfg.out / 'config.json'}")
    return cfg


def _load_training(cfg: RunConfig) -> Tuple[GroundMetric, Dataset]:
    cfg.require("data", "metric")
    metric = load_metric(cfg.metric)
    schema = DatasetSchema(label_columns=(cfg.label_column,), delimiter=cfg.delimiter,
                           discretize=cfg.discretize, bins=cfg.bins, declared_arity=cfg.arity)
    return metric, load_dataset(cfg.data, schema, metric.labels)


def _train_and_test(cfg: RunConfig) -> Tuple[GroundMetric, Dataset, Dataset]:
    """Training data plus --test, or a seeded split when no test file is given"""
    metric, ds = _load_training(cfg)
    if cfg.test is None:
        train, test = train_test_split(ds, 1.0 - cfg.test_fraction, cfg.seed)
        return metric, train, test
    if cfg.discretize != "none":
        raise ValidationError("a separate --test file needs pre-discretized features; "
                              "drop --test to split --data instead", field="test")
    schema = DatasetSchema(label_columns=(cfg.label_column,), delimiter=cfg.delimiter, declared_arity=cfg.arity)
    test = load_dataset(cfg.test, schema, metric.labels)
    if test.n_features != ds.n_features:
        raise ValidationError(f"test has {test.n_features} features, training data {ds.n_features}",
                              field="test")
    return metric, ds, test


def _selection_config(cfg: RunConfig, K: int, measure=None) -> SelectionConfig:
    return SelectionConfig(
        K=K,
        L=cfg.l,
        measure=measure,
        sinkhorn=SinkhornConfig(lam=cfg.lam),
        smoothing=cfg.smoothing,
        recompute_neighbors=cfg.recompute_neighbors,
        max_workers=cfg.threads or 1,
    )


def _write_json(path: Path, payload: Dict[str, Any]):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug output on the console")
@click.option("-q", "--quiet", is_flag=True, help="Warnings and errors only")
def cli(verbose: bool, quiet: bool):
    """Wasserstein feature selection with noisy-label diagnostics"""
    if verbose:
        set_console_level(logging.DEBUG)
    elif quiet:
        set_console_level(logging.WARNING)


@cli.command()
@data_options
@click.option("--k", type=int, help="Number of features to retain")
@click.option("--l", type=int, help="Conditioning-set size (default 3)")
@click.option("--measure", help="wasserstein-exact | wasserstein-sinkhorn | kl")
@click.option("--lambda", "lam", type=float, help="Sinkhorn regularization strength")
@click.option("--smoothing", type=float, help="Additive smoothing per class (default 0.5)")
@click.option("--seed", type=int, help="Recorded in the config echo")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@config_option
@threads_option
@handle_errors
def select(config_file, **flags):
    """Backward elimination down to K features; writes trace.json"""
    cfg = _build_config(config_file, **flags)
    cfg.require("k")
    metric, ds = _load_training(cfg)
    selection = _selection_config(cfg, cfg.k, cfg.measure)

    start = time.perf_counter()
    trace = select_features(ds, metric, selection, ParallelSweepExecutor(max_workers=cfg.threads))
    elapsed = time.perf_counter() - start

    trace.save(cfg.out / "trace.json")
    _write_json(cfg.out / "timing.json", {'select_seconds': elapsed})
    click.echo(f"Retained {len(trace.retained)} of {trace.n_features} features: {trace.retained}")
    click.echo(f"Trace written to {cfg.out / 'trace.json'}")


@cli.command("eval")
@data_options
@click.option("--test", type=click.Path(dir_okay=False), help="Test data (default: split --data)")
@click.option("--trace", type=click.Path(dir_okay=False), help="trace.json from select")
@click.option("--feature-grid", callback=int_list, help="Feature counts to score, e.g. 5,10,15")
@click.option("--top-k", callback=int_list, help="k values of the top-k loss, e.g. 1,3,5")
@click.option("--knn", type=int, help="Neighbors of the kNN classifier (default 5)")
@click.option("--test-fraction", type=float, help="Test share when splitting --data (default 0.2)")
@click.option("--seed", type=int, help="Split seed")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@config_option
@handle_errors
def evaluate(config_file, **flags):
    """Score a selection trace with kNN and the top-k loss; writes eval.tsv"""
    cfg = _build_config(config_file, **flags)
    cfg.require("trace")
    trace = SelectionTrace.load(cfg.trace)
    metric, train, test = _train_and_test(cfg)
    if trace.n_features != train.n_features:
        raise ValidationError(f"trace covers {trace.n_features} features, data has {train.n_features}",
                              field="trace")

    grid = cfg.feature_grid or [len(trace.retained)]
    lines = ["n_features\tk\tloss"]
    for n in sorted(set(grid)):
        losses = evaluate_selection(train, test, trace.retained_at(n), metric, cfg.top_k, cfg.knn, cfg.distance)
        for k, loss in losses.items():
            lines.append(f"{n}\t{k}\t{loss!r}")
            click.echo(f"n_features={n} top-{k} loss={loss:.4f}")
    (cfg.out / "eval.tsv").write_text("\n".join(lines) + "\n")


@cli.command("noise-sweep")
@data_options
@click.option("--test", type=click.Path(dir_okay=False), help="Clean-labeled test data")
@click.option("--synthetic", type=click.Choice(["hierarchical"]), help="Use a generated dataset instead of --data")
@click.option("--p-list", callback=float_list, help="Flip probabilities, e.g. 0,0.1,0.2")
@click.option("--seeds", callback=int_list, help="Noise seeds, e.g. 0,1,2")
@click.option("--measure", help="Comma list of measures (default wasserstein-exact,kl)")
@click.option("--feature-grid", callback=int_list, help="Feature counts, e.g. 5,10,15,20")
@click.option("--top-k", callback=int_list, help="k values of the top-k loss (default 5)")
@click.option("--knn", type=int, help="Neighbors of the kNN classifier (default 5)")
@click.option("--l", type=int, help="Conditioning-set size (default 3)")
@click.option("--lambda", "lam", type=float, help="Sinkhorn regularization strength")
@click.option("--test-fraction", type=float, help="Test share when splitting (default 0.2)")
@click.option("--seed", type=int, help="Split / generator seed")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@config_option
@threads_option
@handle_errors
def noise_sweep(config_file, **flags):
    """Flip -> select on noisy labels -> evaluate on clean labels, over P x seed x measure"""
    cfg = _build_config(config_file, **flags)
    if cfg.synthetic == "hierarchical":
        ds, metric = hierarchical_dataset(seed=cfg.seed)
        train, test = train_test_split(ds, 1.0 - cfg.test_fraction, cfg.seed)
        grid = cfg.feature_grid or SYNTHETIC_FEATURE_GRID
    else:
        metric, train, test = _train_and_test(cfg)
        if cfg.feature_grid is None:
            cfg.require("k")
        grid = cfg.feature_grid or [cfg.k]

    sweep = SweepConfig(
        p_list=cfg.p_list,
        seeds=cfg.seed_list(),
        measures=cfg.measures(),
        feature_grid=grid,
        ks=cfg.top_k,
        k_nn=cfg.knn,
        neighbor_threshold=cfg.neighbor_threshold,
        distance=cfg.distance,
        base=_selection_config(cfg, K=1),
    )
    executor = ParallelSweepExecutor(max_workers=cfg.threads, show_progress=True)
    result = run_noise_sweep(train, test, metric, sweep, executor)
    result.write(cfg.out)

    for entry in result.averaged():
        click.echo(f"{entry['measure']:>22} n_features={entry['n_features']:<4} "
                   f"top-{entry['k']} loss={entry['loss']:.4f}")
    click.echo(f"{len(result.rows)} rows written to {cfg.out / 'losses.tsv'}")


@cli.command("verify-bounds")
@click.option("--trials", type=int, help="Number of random instances (default 200)")
@click.option("--n-features", type=int, help="Binary features per instance (<= 6, default 5)")
@click.option("--n-classes", type=int, help="Classes per instance (<= 4, default 3)")
@click.option("--k", type=int, help="Subset size searched exhaustively (default 2)")
@click.option("--noise-max", type=float, help="Upper end of the random flip level (default 0.5)")
@click.option("--seed", type=int, help="Master seed")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@config_option
@threads_option
@handle_errors
def verify_bounds(config_file, **flags):
    """Brute-force check of the noisy-label inequalities; writes report.json"""
    cfg = _build_config(config_file, **flags)
    family = TheoremFamily(n_features=cfg.n_features, n_classes=cfg.n_classes,
                           k=cfg.k if cfg.k is not None else 2, noise_max=cfg.noise_max)
    report = verify_theorems(family, cfg.trials, cfg.seed,
                             ParallelSweepExecutor(max_workers=cfg.threads, show_progress=True))
    (cfg.out / "report.json").write_text(report.to_json() + "\n")
    report.print_summary()
    if report.violations:
        sys.exit(EXIT_VIOLATION)


def _parse_vector(text: str, name: str) -> DiscreteDistribution:
    values = _split_list(text, float, name)
    return DiscreteDistribution(values)


def _parse_matrix(text: str) -> GroundMetric:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ValidationError(f"could not parse matrix '{text}'", field="matrix") from None
    return GroundMetric.from_matrix([f"c{i}" for i in range(len(rows))], rows)


@cli.command("ot")
@click.option("--p", "p_text", required=True, help="Source distribution, e.g. 0.7,0.3")
@click.option("--q", "q_text", required=True, help="Target distribution, e.g. 0.4,0.6")
@click.option("--metric", type=click.Path(dir_okay=False), help="Metric spec or matrix file")
@click.option("--matrix", help='Inline metric, rows split by ";" e.g. "0,1;1,0"')
@click.option("--method", type=click.Choice(["exact", "sinkhorn", "both"]), default="both", show_default=True)
@click.option("--lambda", "lam", type=float, help="Sinkhorn regularization strength")
@click.option("--out", type=click.Path(file_okay=False), help="Also write config.json and ot.json here")
@config_option
@handle_errors
def ot_command(p_text, q_text, matrix, method, config_file, **flags):
    """Wasserstein distance between two class distributions"""
    out = flags.pop("out")
    cfg = load_run_config(config_file, {**flags, 'out': out})
    if out is not None:
        cfg.write_echo()
    p = _parse_vector(p_text, "--p")
    q = _parse_vector(q_text, "--q")
    if matrix is not None:
        metric = _parse_matrix(matrix)
    else:
        cfg.require("metric")
        metric = load_metric(cfg.metric)

    results: Dict[str, Any] = {}
    if method in ("exact", "both"):
        plan = exact_wasserstein(p, q, metric)
        results['exact'] = plan.to_dict()
        click.echo(f"exact     {plan.cost:.10g}")
    if method in ("sinkhorn", "both"):
        plan = sinkhorn_wasserstein(p, q, metric, SinkhornConfig(lam=cfg.lam))
        results['sinkhorn'] = plan.to_dict()
        click.echo(f"sinkhorn  {plan.cost:.10g}  (lambda={cfg.lam}, {plan.iterations} iterations)")
    if out is not None:
        _write_json(cfg.out / "ot.json", results)


@cli.command("metric-check")
@click.option("--metric", type=click.Path(dir_okay=False), required=True, help="Metric spec or matrix file")
@handle_errors
def metric_check(metric):
    """Validate a ground metric and print its size"""
    d = load_metric(metric)
    click.echo(f"valid metric: n_c={d.n_classes} max(D)={d.max_distance:.6g}")
    click.echo(f"labels: {', '.join(d.labels)}")


if __name__ == "__main__":
    cli()
