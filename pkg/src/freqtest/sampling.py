"""Level schedule, seeded hash subsampling and single-pass fan-out.

Level i looks at ranks around ``z_i = ceil((1+eps1^2)^i)`` through the
substream of elements whose hash is divisible by ``a_i``.  Its table answers
with the counter at position ``r = ceil(z_i / a_i)``.

Seeds: level i uses ``derive_seed(master, i)``; the same rule derives
per-trial master seeds in experiments (``derive_seed(master, trial)``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .core import DecayParams, RationalLike, as_rational

__all__ = [
    "Chunk",
    "HashSampler",
    "Level",
    "LevelSchedule",
    "build_schedule",
    "concentrated_B",
    "default_B",
    "derive_seed",
    "fan_out",
    "iter_chunks",
    "keep",
    "mix",
    "mix_array",
    "splitmix64",
]

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """SplitMix64 output function applied to ``x``."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Child seed of ``master`` along ``path`` (e.g. a level or trial index)."""
    x = splitmix64(int(master) & MASK64)
    for step in path:
        x = splitmix64(x ^ splitmix64(int(step) & MASK64))
    return x


def mix(seed: int, element: int) -> int:
    """64-bit hash of ``element`` under ``seed``."""
    return splitmix64((int(element) & MASK64) ^ splitmix64(int(seed) & MASK64))


def mix_array(seed: int, ids: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mix`; agrees with it element by element."""
    key = np.uint64(splitmix64(int(seed) & MASK64))
    z = np.asarray(ids, dtype=np.uint64) ^ key
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class HashSampler:
    """Keeps an element iff ``mix(seed, e) % modulus == 0``."""

    seed: int
    modulus: int

    def __post_init__(self) -> None:
        if self.modulus < 1:
            raise ValueError("modulus must be positive")

    def keep(self, element: int) -> bool:
        return self.modulus == 1 or mix(self.seed, element) % self.modulus == 0

    def keep_mask(self, ids: np.ndarray) -> np.ndarray:
        if self.modulus == 1:
            return np.ones(len(ids), dtype=bool)
        return mix_array(self.seed, ids) % np.uint64(self.modulus) == 0

    @property
    def key(self) -> tuple[int, int]:
        # every modulus-1 sampler keeps everything, whatever its seed
        return (0, 1) if self.modulus == 1 else (self.seed, self.modulus)


def keep(sampler: HashSampler, element: int) -> bool:
    return sampler.keep(element)


@dataclass(frozen=True)
class Level:
    i: int
    z: int
    a: int
    r: int
    K: int
    seed: int
    #: table size given by the closed-form formula, before capping at n
    K_formula: int = 0

    @property
    def sampler(self) -> HashSampler:
        return HashSampler(self.seed, self.a)


@dataclass(frozen=True)
class LevelSchedule:
    levels: tuple[Level, ...]
    n: int
    eps1: Fraction
    eps2: Fraction
    delta: Fraction
    decay: DecayParams
    B: float
    k_mult: float
    coverage: str
    master_seed: int
    #: number of iterations of the level loop before deduplication
    loop_count: int = field(default=0)

    def __iter__(self) -> Iterator[Level]:
        return iter(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def small_z_limit(self) -> int:
        """Levels with ``z <= ceil(1/eps1^3)`` form the single-stream regime."""
        return math.ceil(1 / self.eps1 ** 3)

    @property
    def total_counters(self) -> int:
        """Counters actually allocated: each table holds at most ``min(K, n)``."""
        return sum(level.K for level in self.levels)

    @property
    def total_formula_counters(self) -> int:
        return sum(level.K_formula for level in self.levels)

    @property
    def max_K(self) -> int:
        """Largest closed-form table size over the levels."""
        return max((level.K_formula for level in self.levels), default=0)

    def counter_budget(self) -> int:
        """``ceil(log_{1+eps1} n) * max K``: the closed-form memory bound."""
        return self.loop_count * self.max_K

    def exact_threshold(self) -> int | None:
        """Smallest z whose level cannot overflow: ``n / a <= K``."""
        for level in self.levels:
            if self.n <= level.K * level.a:
                return level.z
        return None

    def explain(self) -> str:
        """One line per level: ``i z a r K seed``."""
        return "".join(f"{lv.i} {lv.z} {lv.a} {lv.r} {lv.K} {lv.seed}\n" for lv in self.levels)


def default_B(n: int, delta: RationalLike) -> float:
    """``6 ln(ln(n) / delta)``, floored at 1."""
    return max(1.0, 6.0 * math.log(math.log(n) / float(as_rational(delta))))


def concentrated_B(n: int, delta: RationalLike, eps1: RationalLike) -> float:
    """``default_B / eps1^2``.

    Large enough that the r-th sampled element ranks within ``z (1 +- eps1^2)``
    with probability ``1 - O(delta / ln n)``; the plain default is not.
    """
    e1 = float(as_rational(eps1))
    return default_B(n, delta) / (e1 * e1)


def _z_values(eps1: Fraction, n: int, coverage: str) -> tuple[list[tuple[int, int]], int]:
    base = 1 + eps1 * eps1
    loop_count = math.ceil(math.log(n) / math.log(1 + float(eps1)))
    if coverage == "paper":
        first, last = 1, loop_count
    elif coverage == "domain":
        first, last = 0, None
    else:
        raise ValueError(f"unknown coverage {coverage!r}")
    out: list[tuple[int, int]] = []
    power = base ** first
    i = first
    while last is None or i <= last:
        z = math.ceil(power)
        if z > n:
            break
        if not out or z != out[-1][1]:
            out.append((i, z))
        i += 1
        power *= base
    return out, loop_count


def build_schedule(n: int, eps1: RationalLike, eps2: RationalLike, delta: RationalLike,
                   decay: DecayParams, *, B: float | None = None, k_mult: float = 1.0,
                   seed: int = 0, coverage: str = "domain") -> LevelSchedule:
    """Levels for a universe of ``n`` elements.

    Table sizes follow ``K = 2 (z/a) tail (1+eps1^2) ln(n) / (eps2 delta)``
    scaled by ``k_mult`` and capped at ``n``.

    ``coverage="domain"`` (default) takes ``i = 0, 1, ...`` until ``z_i``
    exceeds ``n`` so every rank of the domain is probed.  ``coverage="paper"``
    runs ``i = 1 .. ceil(log_{1+eps1} n)`` only.  Duplicate z values are
    merged, keeping the first i.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    eps1, eps2, delta = as_rational(eps1), as_rational(eps2), as_rational(delta)
    for name, v in (("eps1", eps1), ("eps2", eps2), ("delta", delta)):
        if not 0 < v < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {v}")
    if not decay.gamma1 < decay.gamma2:
        raise ValueError("gamma1/gamma2 must be below 1")
    if k_mult <= 0:
        raise ValueError("k_mult must be positive")
    B = default_B(n, delta) if B is None else float(B)
    if B <= 0:
        raise ValueError("B must be positive")
    e1sq = float(eps1 * eps1)
    small_limit = math.ceil(1 / eps1 ** 3)
    base_K = (2 * float(decay.tail_factor) * (1 + e1sq) * math.log(n)
              / (float(eps2) * float(delta)))
    zs, loop_count = _z_values(eps1, n, coverage)
    levels = []
    for i, z in zs:
        a = 1 if z <= small_limit else max(1, math.ceil(e1sq * z / B))
        r = -(-z // a)
        K = max(1, math.ceil(k_mult * base_K * z / a))
        # a table never holds more than n distinct elements
        levels.append(Level(i=i, z=z, a=a, r=r, K=min(K, n), seed=derive_seed(seed, i),
                            K_formula=K))
    return LevelSchedule(levels=tuple(levels), n=n, eps1=eps1, eps2=eps2, delta=delta,
                         decay=decay, B=B, k_mult=k_mult, coverage=coverage,
                         master_seed=int(seed), loop_count=loop_count)


# --- fan-out -----------------------------------------------------------------

class Chunk:
    """A block of a (sub)stream.

    A sampled chunk keeps a reference to its parent and builds its element
    array only on demand; its ``(unique, counts)`` summary is derived from the
    parent's summary, which is far cheaper when only counts are needed.
    """

    __slots__ = ("_ids", "_summary", "_parent", "_sampler", "_children")

    def __init__(self, ids: np.ndarray | None, parent: Chunk | None = None,
                 sampler: HashSampler | None = None) -> None:
        self._ids = ids
        self._summary = None
        self._parent = parent
        self._sampler = sampler
        self._children: dict = {}

    @property
    def ids(self) -> np.ndarray:
        if self._ids is None:
            base = self._parent.ids
            self._ids = base[self._sampler.keep_mask(base)]
        return self._ids

    def __len__(self) -> int:
        if self._ids is not None:
            return len(self._ids)
        return int(self.summary()[1].sum())

    def summary(self) -> tuple[np.ndarray, np.ndarray]:
        if self._summary is None:
            if self._parent is not None:
                uniq, cnts = self._parent.summary()
                mask = self._sampler.keep_mask(uniq)
                self._summary = (uniq[mask], cnts[mask])
            else:
                self._summary = _count_ids(self._ids)
        return self._summary

    def sample(self, sampler: HashSampler) -> Chunk:
        """Sub-chunk of kept elements (cached per sampler)."""
        if sampler.modulus == 1:
            return self
        child = self._children.get(sampler.key)
        if child is None:
            child = Chunk(None, self, sampler)
            self._children[sampler.key] = child
        return child


def _count_ids(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if ids.size and int(ids.max()) < max(1 << 16, 4 * ids.size):
        counts = np.bincount(ids.astype(np.int64))
        uniq = np.flatnonzero(counts)
        return uniq.astype(np.uint64), counts[uniq]
    return np.unique(ids, return_counts=True)


def iter_chunks(stream, chunk_size: int = 1 << 20) -> Iterator[np.ndarray]:
    """Split ``stream`` (array or iterable of ids) into ``uint64`` arrays."""
    if isinstance(stream, np.ndarray):
        arr = stream.astype(np.uint64, copy=False)
        for start in range(0, len(arr), chunk_size):
            yield arr[start:start + chunk_size]
        return
    buf: list[int] = []
    for e in stream:
        buf.append(int(e))
        if len(buf) >= chunk_size:
            yield np.array(buf, dtype=np.uint64)
            buf = []
    if buf:
        yield np.array(buf, dtype=np.uint64)


class LevelError(RuntimeError):
    """A level consumer failed; ``level`` identifies which one."""

    def __init__(self, level: Level, cause: BaseException) -> None:
        super().__init__(f"level i={level.i} (z={level.z}) failed: {cause!r}")
        self.level = level


def fan_out(stream, schedule: LevelSchedule | Sequence[Level],
            sink: Callable[[Level, Chunk], None], chunk_size: int = 1 << 20) -> None:
    """Offer every element to every level, in one pass over ``stream``.

    ``sink(level, chunk)`` receives the kept elements of each block in stream
    order.  Levels with the same sampler share one filtered chunk.
    """
    levels = list(schedule)
    for block in iter_chunks(stream, chunk_size):
        parent = Chunk(block)
        for level in levels:
            sub = parent.sample(level.sampler)
            if len(sub) == 0:
                continue
            try:
                sink(level, sub)
            except Exception as exc:
                raise LevelError(level, exc) from exc
