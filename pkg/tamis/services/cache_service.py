import logging
from typing import Any, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)


class CacheService:
    """Run-scoped in-memory store for arrays that are expensive to recompute"""

    def __init__(self):
        self._cache: Dict[str, Any] = {}
        self._hits = 0
        self._misses = 0

    def _generate_key(self, prefix: str, *args) -> str:
        """Generate cache key from prefix and arguments"""
        return f"{prefix}:{':'.join(map(str, args))}"

    def get(self, key: str) -> Optional[Any]:
        if key not in self._cache:
            self._misses += 1
            return None
        self._hits += 1
        return self._cache[key]

    def set(self, key: str, value: Any) -> None:
        self._cache[key] = value

    def get_stats(self) -> Dict[str, Any]:
        return {
            'total_entries': len(self._cache),
            'hits': self._hits,
            'misses': self._misses,
            'memory_usage_mb': self._estimate_memory_usage(),
        }

    def _estimate_memory_usage(self) -> float:
        total = sum(value.nbytes for value in self._cache.values() if isinstance(value, np.ndarray))
        return total / (1024 * 1024)


class ProposalDensityCache:
    """log q_s(x) for the draws of stage u, keyed by the pair (s, u).

    Stage proposals and draws never change once recorded, so an entry stays
    valid for the whole run. AMIS reweights every past draw against every
    past proposal at each stage; with the cache each pair is evaluated once.
    """

    def __init__(self, cache_service: Optional[CacheService] = None):
        self.cache = cache_service or CacheService()
        self.evaluations = 0

    def proposal_log_density(self, proposal_stage: int, sample_stage: int, theta, points) -> np.ndarray:
        key = self.cache._generate_key('log_q', proposal_stage, sample_stage)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        values = theta.log_density(points)
        values.flags.writeable = False
        self.cache.set(key, values)
        self.evaluations += values.size
        return values

    def get_stats(self) -> Dict[str, Any]:
        stats = self.cache.get_stats()
        stats['proposal_evaluations'] = self.evaluations
        return stats
