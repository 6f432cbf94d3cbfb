"""SpaceSaving counter table with deterministic tie-breaking.

A table starts in an exact mode (a plain dict of counts) and stays there for
as long as every distinct element fits; no eviction can have happened, so bulk
merging pre-aggregated counts is equivalent to inserting one by one.  The
first chunk that would overflow the capacity switches the table to the
compiled per-element kernel in :mod:`freqtest._kernel`.

Entry order is non-increasing counter with ascending id among ties.  On
eviction the victim is the largest id among the minimum counters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np

from . import _kernel
from .core import DecayParams, FrequencyFunction, RationalLike, as_rational, residual

__all__ = [
    "CounterEntry",
    "CounterTable",
    "counter_at",
    "exactness_holds",
    "insert",
    "min_counter",
    "new_table",
    "recommend_table_size",
    "residual_bound",
    "zipf_table_size",
]


@dataclass(frozen=True)
class CounterEntry:
    element: int
    counter: int
    error: int


def _as_ids(elements) -> np.ndarray:
    if isinstance(elements, np.ndarray) and elements.dtype == np.uint64:
        return elements
    arr = np.asarray(elements)
    if arr.dtype.kind == "i" and arr.size and arr.min() < 0:
        raise ValueError("element ids must be non-negative")
    return arr.astype(np.uint64, copy=False)


class CounterTable:
    """SpaceSaving table of capacity ``K``."""

    def __init__(self, capacity: int) -> None:
        capacity = int(capacity)
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.items_processed = 0
        self._exact: dict[int, int] | None = {}
        self._arrays = None
        self._snapshot = None

    # -- updates -------------------------------------------------------------

    def insert(self, element: int) -> None:
        e = int(element)
        if self._exact is not None:
            d = self._exact
            if e in d:
                d[e] += 1
                self.items_processed += 1
                self._snapshot = None
                return
            if len(d) < self.capacity:
                if e < 0 or e >= 1 << 64:
                    raise ValueError(f"element id out of range: {e}")
                d[e] = 1
                self.items_processed += 1
                self._snapshot = None
                return
        self._feed(np.array([e], dtype=np.uint64))

    def extend(self, elements, summary: tuple[np.ndarray, np.ndarray] | None = None) -> None:
        """Insert every element of ``elements`` in order.

        ``summary`` may carry the chunk's ``(unique ids, counts)`` when the
        caller already has it; it must describe ``elements`` exactly.
        """
        ids = _as_ids(elements)
        if ids.size == 0:
            return
        if self._exact is not None:
            if summary is None:
                summary = np.unique(ids, return_counts=True)
            if self.merge_counts(*summary):
                return
        self._feed(ids)

    def merge_counts(self, uniq: np.ndarray, counts: np.ndarray) -> bool:
        """Add pre-aggregated counts if no eviction can result.

        Returns False, leaving the table untouched, when the table is already
        evicting or the new distinct elements would not fit.
        """
        d = self._exact
        if d is None:
            return False
        keys = uniq.tolist()
        fresh = len(keys) - sum(1 for u in keys if u in d)
        if len(d) + fresh > self.capacity:
            return False
        for u, c in zip(keys, counts.tolist()):
            d[u] = d.get(u, 0) + c
        self.items_processed += int(counts.sum())
        self._snapshot = None
        return True

    def _feed(self, ids: np.ndarray) -> None:
        if self._arrays is None:
            self._to_kernel()
        state, *arrays = self._arrays
        _kernel.process(ids, state, *arrays)
        self.items_processed += int(ids.size)
        self._snapshot = None

    def _to_kernel(self) -> None:
        k = self.capacity
        buckets = 1 << max(4, (2 * k - 1).bit_length())
        ids = np.zeros(k, dtype=np.uint64)
        counts = np.zeros(k, dtype=np.int64)
        errors = np.zeros(k, dtype=np.int64)
        d = self._exact or {}
        m = len(d)
        if m:
            ids[:m] = np.fromiter(d.keys(), dtype=np.uint64, count=m)
            counts[:m] = np.fromiter(d.values(), dtype=np.int64, count=m)
        heap = np.zeros(k, dtype=np.int64)
        hpos = np.zeros(k, dtype=np.int64)
        keys = np.zeros(buckets, dtype=np.uint64)
        vals = np.full(buckets, -1, dtype=np.int64)
        state = np.array([m, k, buckets - 1], dtype=np.int64)
        _kernel.rebuild(state, ids, counts, heap, hpos, keys, vals)
        self._arrays = (state, ids, counts, errors, heap, hpos, keys, vals)
        self._exact = None

    # -- queries -------------------------------------------------------------

    def _sorted(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._snapshot is None:
            if self._exact is not None:
                m = len(self._exact)
                ids = np.fromiter(self._exact.keys(), dtype=np.uint64, count=m)
                counts = np.fromiter(self._exact.values(), dtype=np.int64, count=m)
                errors = np.zeros(m, dtype=np.int64)
            else:
                state, ids, counts, errors = self._arrays[:4]
                m = int(state[0])
                ids, counts, errors = ids[:m], counts[:m], errors[:m]
            order = np.lexsort((ids, -counts))
            self._snapshot = (ids[order], counts[order], errors[order])
        return self._snapshot

    def __len__(self) -> int:
        if self._exact is not None:
            return len(self._exact)
        return int(self._arrays[0][0])

    @property
    def is_full(self) -> bool:
        return len(self) >= self.capacity

    @property
    def evicting(self) -> bool:
        """True once the table left exact mode (it may have evicted)."""
        return self._exact is None

    def entries(self) -> list[CounterEntry]:
        ids, counts, errors = self._sorted()
        return [CounterEntry(int(e), int(c), int(x))
                for e, c, x in zip(ids.tolist(), counts.tolist(), errors.tolist())]

    def __iter__(self) -> Iterator[CounterEntry]:
        return iter(self.entries())

    def counters(self) -> np.ndarray:
        """Counters in table order (non-increasing)."""
        return self._sorted()[1]

    def counter_at(self, r: int) -> int:
        if r < 1:
            raise ValueError(f"positions start at 1, got {r}")
        counts = self._sorted()[1]
        return int(counts[r - 1]) if r <= counts.size else 0

    def min_counter(self) -> int:
        return self.counter_at(self.capacity) if self.is_full else 0

    def lookup(self, element: int) -> CounterEntry | None:
        e = int(element)
        if self._exact is not None:
            c = self._exact.get(e)
            return None if c is None else CounterEntry(e, c, 0)
        ids, counts, errors = self._sorted()
        hit = np.flatnonzero(ids == np.uint64(e))
        if hit.size == 0:
            return None
        j = int(hit[0])
        return CounterEntry(e, int(counts[j]), int(errors[j]))

    def estimate(self, element: int) -> int:
        """Counter of ``element``, or ``c_K`` when it is not in the table."""
        entry = self.lookup(element)
        return entry.counter if entry is not None else self.min_counter()

    def top(self, k: int) -> list[int]:
        return [int(e) for e in self._sorted()[0][:k].tolist()]

    def dump(self) -> str:
        """Lines ``element_id counter error`` in table order."""
        return "".join(f"{e.element} {e.counter} {e.error}\n" for e in self.entries())


# Functional spellings of the table operations.

def new_table(capacity: int) -> CounterTable:
    return CounterTable(capacity)


def insert(table: CounterTable, element: int) -> None:
    table.insert(element)


def counter_at(table: CounterTable, r: int) -> int:
    return table.counter_at(r)


def min_counter(table: CounterTable) -> int:
    return table.min_counter()


def residual_bound(freq: FrequencyFunction | Iterable[int], capacity: int) -> Fraction:
    """``min over 0 <= u < K/2`` of ``F_res(u) / (K - 2u)``."""
    f = freq if isinstance(freq, FrequencyFunction) else FrequencyFunction(freq)
    if capacity < 1:
        raise ValueError("capacity must be positive")
    best = None
    for u in range(0, (capacity + 1) // 2):
        res = residual(f, u) if u <= f.n else 0
        value = Fraction(res, capacity - 2 * u)
        if best is None or value < best:
            best = value
    return best


def exactness_holds(table: CounterTable, freq: FrequencyFunction, k: int) -> bool:
    """``c_K <= f(k) - f(k+1)``: the top-k entries are then the true top-k."""
    if not 1 <= k < table.capacity:
        raise ValueError(f"need 1 <= k < K, got k={k}, K={table.capacity}")
    return table.min_counter() <= freq(k) - freq(k + 1)


def recommend_table_size(k: int, eps: RationalLike, decay: DecayParams | None = None) -> int:
    """``ceil(k (2 + 1/eps))``.

    On a ``decay``-decreasing input the top-k counters are then within
    ``eps * f(i) * decay.tail_factor`` of the true counts.
    """
    eps = as_rational(eps)
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if k < 1:
        raise ValueError("k must be positive")
    return math.ceil(k * (2 + 1 / eps))


def zipf_table_size(k: int, alpha: float, c: float = 1.0) -> int:
    """``ceil(c * k^(1 + 1/alpha))``, enough to recover the top-k of a Zipf stream."""
    if alpha <= 0 or k < 1:
        raise ValueError("need alpha > 0 and k >= 1")
    return math.ceil(c * k ** (1 + 1 / alpha))
