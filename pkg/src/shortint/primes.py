"""Prime tables shared by the sieve and the prime-sum machinery."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from math import isqrt

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class PrimeTable:
    """All primes up to (and including) `limit`, sorted ascending."""

    limit: int
    values: np.ndarray

    def upto(self, bound: float) -> np.ndarray:
        """Primes <= bound as a view into the table."""
        if math.floor(bound) > self.limit:
            raise UsageError(f"prime table covers {self.limit}, need {bound}")
        hi = int(np.searchsorted(self.values, math.floor(bound), side="right"))
        return self.values[:hi]

    def in_window(self, lo: float, hi: float) -> np.ndarray:
        """Primes p with lo <= p <= hi."""
        if math.floor(hi) > self.limit:
            raise UsageError(f"prime table covers {self.limit}, need {hi}")
        a = int(np.searchsorted(self.values, lo, side="left"))
        b = int(np.searchsorted(self.values, math.floor(hi), side="right"))
        return self.values[a:b]


def eratosthenes(limit: int) -> np.ndarray:
    """Primes up to limit by a plain byte sieve; int64 output."""
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.nonzero(flags)[0].astype(np.int64)


_lock = threading.Lock()
_cached: PrimeTable | None = None


def prime_table(limit: int) -> PrimeTable:
    """Prime table covering at least `limit`, cached process-wide.

    The cache only grows; callers share read-only views of one array.
    """
    global _cached
    limit = max(int(limit), 2)
    with _lock:
        if _cached is None or _cached.limit < limit:
            values = eratosthenes(limit)
            values.setflags(write=False)
            _cached = PrimeTable(limit=limit, values=values)
        return _cached
