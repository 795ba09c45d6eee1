"""
Delta Score Caching
Keeps δ scores between elimination rounds so only features whose
conditioning set changed are rescored.

Removing one feature only touches the conditionals of features that had it
in their neighborhood, so most δ values carry over to the next round.

Example:
    cache = DeltaScoreCache()

    delta = cache.get_or_compute(3, (0, 5, 7), lambda: delta_score(...))
    delta = cache.get_or_compute(3, (0, 5, 7), lambda: delta_score(...))  # hit

    cache.invalidate(5)   # drops every entry conditioned on feature 5
    print(f"Cache hit rate: {cache.stats.get_hit_rate():.1%}")
"""

from dataclasses import dataclass
from typing import Callable, Dict, Any, Tuple
import threading

CacheKey = Tuple[int, Tuple[int, ...]]


@dataclass
class CacheStatistics:
    """Cache performance statistics"""
    total_requests: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    invalidated: int = 0

    def get_hit_rate(self) -> float:
        if self.total_requests == 0:
            return 0.0
        return self.cache_hits / self.total_requests

    def to_dict(self) -> Dict[str, Any]:
        return {
            'total_requests': self.total_requests,
            'cache_hits': self.cache_hits,
            'cache_misses': self.cache_misses,
            'invalidated': self.invalidated,
        }

    def print_statistics(self):
        print("\n" + "=" * 80)
        print("DELTA CACHE STATISTICS")
        print("=" * 80)
        print(f"  Total Requests: {self.total_requests}")
        print(f"  Cache Hits: {self.cache_hits} ({self.get_hit_rate():.1%})")
        print(f"  Cache Misses: {self.cache_misses}")
        print(f"  Invalidated: {self.invalidated}")
        print("=" * 80)


class DeltaScoreCache:
    """
    In-memory δ store keyed by (feature, conditioning set).

    Safe to share between the worker threads of one selection run.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.entries: Dict[CacheKey, float] = {}
        self.stats = CacheStatistics()
        self._lock = threading.Lock()

    def get_or_compute(self, feature: int, condition_set: Tuple[int, ...],
                       compute: Callable[[], float]) -> float:
        """
        Cached δ for (feature, condition_set), computing it on a miss

        Args:
            feature: scored feature index
            condition_set: its ordered neighborhood G_i
            compute: zero-argument callable returning δ
        """
        key = (int(feature), tuple(int(j) for j in condition_set))
        with self._lock:
            self.stats.total_requests += 1
            if self.enabled and key in self.entries:
                self.stats.cache_hits += 1
                return self.entries[key]
            self.stats.cache_misses += 1

        value = compute()

        if self.enabled:
            with self._lock:
                self.entries[key] = value
        return value

    def invalidate(self, feature: int) -> int:
        """Drop entries scoring `feature` or conditioned on it; returns how many"""
        with self._lock:
            stale = [key for key in self.entries if key[0] == feature or feature in key[1]]
            for key in stale:
                del self.entries[key]
            self.stats.invalidated += len(stale)
        return len(stale)

    def clear(self):
        with self._lock:
            self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)
