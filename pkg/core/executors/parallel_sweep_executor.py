"""
Parallel Sweep Execution Engine
Bounded worker pool for independent units of work: per-feature δ scores
within a selection round, theorem-verification trials and noise-sweep cells.

Results always come back in input order, so callers stay deterministic
whatever the worker count.

Example:
    executor = ParallelSweepExecutor(max_workers=4)
    deltas = executor.map(score_feature, remaining, desc="round 3")
    executor.last_summary.speedup_factor
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar
import os
import time

from tqdm import tqdm

from logging_config import setup_logger

logger = setup_logger('executor', 'executor.log')

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV = "WASSFS_THREADS"


def default_workers() -> int:
    """Worker cap: WASSFS_THREADS when set, otherwise the CPU count"""
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={value!r}")
    return os.cpu_count() or 1


@dataclass
class TaskResult:
    """Outcome of one unit of work"""
    index: int
    status: str  # success, error
    duration_seconds: float
    error_message: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'status': self.status,
            'duration_seconds': self.duration_seconds,
            'error_message': self.error_message,
        }


@dataclass
class ExecutionSummary:
    """Summary of one map() call"""
    description: str
    total_tasks: int
    successful_tasks: int
    failed_tasks: int
    workers: int
    total_duration_seconds: float
    sequential_estimated_time: float
    task_results: List[TaskResult] = field(default_factory=list)

    @property
    def speedup_factor(self) -> float:
        if self.total_tasks == 0 or self.sequential_estimated_time <= 0 or self.total_duration_seconds <= 0:
            return 1.0
        return self.sequential_estimated_time / self.total_duration_seconds


class ParallelSweepExecutor:
    """
    Run independent tasks on a thread pool (numpy/scipy release the GIL in
    the heavy kernels).
    """

    def __init__(self, max_workers: Optional[int] = None, show_progress: bool = False):
        """
        Args:
            max_workers: pool size; None reads WASSFS_THREADS / CPU count.
                Capped by WASSFS_THREADS when that is set.
            show_progress: tqdm bar per map() call
        """
        cap = default_workers()
        self.max_workers = cap if max_workers is None else max(1, min(int(max_workers), cap))
        self.show_progress = show_progress
        self.last_summary: Optional[ExecutionSummary] = None

        logger.debug(f"Executor with {self.max_workers} worker threads")

    def map(self, fn: Callable[[T], R], items: Sequence[T], desc: str = "tasks") -> List[R]:
        """
        Apply fn to every item.

        Returns:
            Results in input order

        Raises:
            The first failing task's exception (lowest input index), after all
            tasks have finished
        """
        items = list(items)
        start = time.perf_counter()
        results: List[Any] = [None] * len(items)
        records: List[Optional[TaskResult]] = [None] * len(items)
        errors: Dict[int, BaseException] = {}

        progress = tqdm(total=len(items), desc=desc, disable=not self.show_progress, leave=False)
        try:
            if self.max_workers == 1 or len(items) <= 1:
                for index, item in enumerate(items):
                    self._run_one(fn, index, item, results, records, errors)
                    progress.update(1)
            else:
                with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                    future_to_index = {
                        pool.submit(_timed_call, fn, item): index
                        for index, item in enumerate(items)
                    }
                    for future in as_completed(future_to_index):
                        index = future_to_index[future]
                        try:
                            value, duration = future.result()
                            results[index] = value
                            records[index] = TaskResult(index, "success", duration)
                        except Exception as e:
                            errors[index] = e
                            records[index] = TaskResult(index, "error", 0.0, str(e))
                        progress.update(1)
        finally:
            progress.close()

        self.last_summary = self._create_summary(desc, records, time.perf_counter() - start)
        summary = self.last_summary
        logger.debug(f"{desc}: {summary.successful_tasks}/{summary.total_tasks} ok on {summary.workers} workers "
                     f"in {summary.total_duration_seconds:.2f}s (speedup {summary.speedup_factor:.2f}x)")

        if errors:
            first = min(errors)
            logger.error(f"{desc}: {len(errors)} of {len(items)} tasks failed; first at index {first}: "
                         f"{errors[first]}")
            raise errors[first]
        return results

    def _run_one(self, fn, index, item, results, records, errors):
        try:
            value, duration = _timed_call(fn, item)
            results[index] = value
            records[index] = TaskResult(index, "success", duration)
        except Exception as e:
            errors[index] = e
            records[index] = TaskResult(index, "error", 0.0, str(e))

    def _create_summary(self, desc: str, records: List[Optional[TaskResult]],
                        total_duration: float) -> ExecutionSummary:
        done = [r for r in records if r is not None]
        return ExecutionSummary(
            description=desc,
            total_tasks=len(done),
            successful_tasks=sum(1 for r in done if r.status == "success"),
            failed_tasks=sum(1 for r in done if r.status == "error"),
            workers=self.max_workers,
            total_duration_seconds=total_duration,
            sequential_estimated_time=sum(r.duration_seconds for r in done),
            task_results=done,
        )


def _timed_call(fn: Callable[[T], R], item: T):
    start = time.perf_counter()
    value = fn(item)
    return value, time.perf_counter() - start
