"""Compiled inner loop of the SpaceSaving table.

State lives in flat arrays so a whole chunk of the stream is processed in one
call:

* ``ids``, ``counts``, ``errors``: one slot per table entry;
* ``heap``/``hpos``: indexed binary min-heap over slots keyed by
  ``(count, -id)``, so the root is the minimum counter and, among ties, the
  largest id (the eviction victim);
* ``keys``/``vals``: linear-probing hash map from id to slot, size a power of
  two, ``vals == -1`` marks an empty bucket.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _bucket(key, mask):
    h = key * np.uint64(0x9E3779B97F4A7C15)
    h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(mask))


@njit(cache=True, inline="always")
def _less(a, b, ids, counts):
    # heap order: smaller count first, then larger id first
    ca = counts[a]
    cb = counts[b]
    if ca != cb:
        return ca < cb
    return ids[a] > ids[b]


@njit(cache=True)
def _sift_up(pos, heap, hpos, ids, counts):
    slot = heap[pos]
    while pos > 0:
        parent = (pos - 1) >> 1
        other = heap[parent]
        if _less(slot, other, ids, counts):
            heap[pos] = other
            hpos[other] = pos
            pos = parent
        else:
            break
    heap[pos] = slot
    hpos[slot] = pos


@njit(cache=True)
def _sift_down(pos, size, heap, hpos, ids, counts):
    slot = heap[pos]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        right = child + 1
        if right < size and _less(heap[right], heap[child], ids, counts):
            child = right
        other = heap[child]
        if _less(other, slot, ids, counts):
            heap[pos] = other
            hpos[other] = pos
            pos = child
        else:
            break
    heap[pos] = slot
    hpos[slot] = pos


@njit(cache=True)
def _lookup(key, keys, vals, mask):
    b = _bucket(key, mask)
    while True:
        v = vals[b]
        if v == -1:
            return -1
        if keys[b] == key:
            return v
        b = (b + 1) & mask


@njit(cache=True)
def _put(key, slot, keys, vals, mask):
    b = _bucket(key, mask)
    while vals[b] != -1:
        b = (b + 1) & mask
    keys[b] = key
    vals[b] = slot


@njit(cache=True)
def _delete(key, keys, vals, mask):
    b = _bucket(key, mask)
    while keys[b] != key or vals[b] == -1:
        b = (b + 1) & mask
    vals[b] = -1
    # backward-shift the rest of the probe run
    j = b
    while True:
        j = (j + 1) & mask
        if vals[j] == -1:
            return
        home = _bucket(keys[j], mask)
        # move j into the hole at b unless its home lies cyclically in (b, j]
        if (j > b and (home <= b or home > j)) or (j < b and (home <= b and home > j)):
            keys[b] = keys[j]
            vals[b] = vals[j]
            vals[j] = -1
            b = j


@njit(cache=True)
def process(stream, state, ids, counts, errors, heap, hpos, keys, vals):
    """Feed ``stream`` through the table; ``state = [size, capacity, mask]``."""
    size = state[0]
    capacity = state[1]
    mask = state[2]
    for idx in range(stream.shape[0]):
        e = stream[idx]
        slot = _lookup(e, keys, vals, mask)
        if slot >= 0:
            counts[slot] += 1
            _sift_down(hpos[slot], size, heap, hpos, ids, counts)
        elif size < capacity:
            slot = size
            ids[slot] = e
            counts[slot] = 1
            errors[slot] = 0
            heap[size] = slot
            hpos[slot] = size
            size += 1
            _sift_up(size - 1, heap, hpos, ids, counts)
            _put(e, slot, keys, vals, mask)
        else:
            slot = heap[0]
            _delete(ids[slot], keys, vals, mask)
            ids[slot] = e
            errors[slot] = counts[slot]
            counts[slot] += 1
            _sift_down(0, size, heap, hpos, ids, counts)
            _put(e, slot, keys, vals, mask)
    state[0] = size


@njit(cache=True)
def rebuild(state, ids, counts, heap, hpos, keys, vals):
    """Rebuild heap and hash map from the first ``state[0]`` slots."""
    size = state[0]
    mask = state[2]
    vals[:] = -1
    for s in range(size):
        heap[s] = s
        hpos[s] = s
        _put(ids[s], s, keys, vals, mask)
    for pos in range(size // 2 - 1, -1, -1):
        _sift_down(pos, size, heap, hpos, ids, counts)
