"""Streaming testers: stream vs. reference, stream vs. stream, marginals.

Every tester builds a level schedule, feeds the stream(s) through one
SpaceSaving table per level in a single pass, reads the counter at position
``r`` of each table and runs the coherence test against reference values.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DecayParams,
    FrequencyFunction,
    RationalLike,
    Tolerances,
    as_rational,
    eps_close,
    is_decreasing,
)
from .sampling import (
    Chunk,
    Level,
    LevelSchedule,
    build_schedule,
    concentrated_B,
    fan_out,
    splitmix64,
)
from .spacesaving import CounterTable

__all__ = [
    "Corrector",
    "LevelRecord",
    "TesterParams",
    "Verdict",
    "build_corrector",
    "coherence_check",
    "project",
    "run_levels",
    "test_marginals",
    "test_reference",
    "test_two_streams",
]

YES = "YES"
NO = "NO"


@dataclass(frozen=True)
class TesterParams:
    """Tolerances, confidence and schedule knobs.

    ``B`` and ``k_mult`` tune the schedule (sampling divisor and table size
    multiplier); ``B="concentrated"`` selects :func:`concentrated_B` for the
    universe size at hand.  ``k1_mult`` scales the reference-side tables of the
    two-stream tester.  ``factor`` is the coherence slack multiplier.
    """

    tol: Tolerances
    delta: Fraction = Fraction(1, 10)
    decay: DecayParams = field(default_factory=lambda: DecayParams(2, Fraction(5, 2)))
    B: float | str | None = None
    k_mult: float = 1.0
    k1_mult: float = 1.0
    seed: int = 0
    coverage: str = "domain"
    factor: int = 5
    chunk_size: int = 1 << 20

    __test__ = False  # not a pytest class despite the name

    def __post_init__(self) -> None:
        delta = as_rational(self.delta)
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        object.__setattr__(self, "delta", delta)
        if self.factor < 1:
            raise ValueError("factor must be at least 1")
        if isinstance(self.B, str) and self.B != "concentrated":
            raise ValueError(f"B must be a number or 'concentrated', got {self.B!r}")

    def with_seed(self, seed: int) -> TesterParams:
        return replace(self, seed=int(seed))

    def schedule(self, n: int) -> LevelSchedule:
        B = concentrated_B(n, self.delta, self.tol.eps1) if self.B == "concentrated" else self.B
        return build_schedule(n, self.tol.eps1, self.tol.eps2, self.delta, self.decay,
                              B=B, k_mult=self.k_mult, seed=self.seed,
                              coverage=self.coverage)


@dataclass(frozen=True)
class LevelRecord:
    """Outcome of the coherence test at one level."""

    i: int
    z: int
    a: int
    r: int
    K: int
    counter: int
    min_counter: int
    ref_prev: int | None
    ref_cur: int
    ref_next: int
    small: bool
    passed: bool

    @property
    def clause(self) -> str:
        """Which comparison decided the level."""
        if self.small:
            return "cur" if self.passed else "not close to f(z_i)"
        return "neighbours" if self.passed else "not close to f(z_i-1), f(z_i), f(z_i+1)"

    def row(self) -> str:
        prev = "-" if self.ref_prev is None else str(self.ref_prev)
        return (f"{self.i} {self.z} {self.counter} {prev} {self.ref_cur} "
                f"{self.ref_next} {'pass' if self.passed else 'FAIL'}")


@dataclass(frozen=True)
class Corrector:
    """Step function through ``(z_i, g_hat(z_i))`` and its running minimum."""

    breakpoints: tuple[tuple[int, int], ...]
    values: tuple[int, ...]

    def _step(self, t: int) -> int:
        # index of the last breakpoint at or below t (the first one for t < z_1)
        return max(bisect_right([z for z, _ in self.breakpoints], t) - 1, 0)

    def __call__(self, t: int) -> int:
        """Monotone value at rank t; the first step extends below ``z_1``."""
        return self.values[self._step(t)] if self.breakpoints else 0

    def raw(self, t: int) -> int:
        return self.breakpoints[self._step(t)][1] if self.breakpoints else 0

    def as_function(self, n: int) -> FrequencyFunction:
        """The monotone step function on ranks ``1..n``."""
        out = []
        j = 0
        zs = [z for z, _ in self.breakpoints]
        for t in range(1, n + 1):
            while j + 1 < len(zs) and zs[j + 1] <= t:
                j += 1
            out.append(self.values[j] if zs else 0)
        return FrequencyFunction(out)

    def raw_function(self, n: int) -> list[int]:
        out = []
        j = 0
        zs = [z for z, _ in self.breakpoints]
        for t in range(1, n + 1):
            while j + 1 < len(zs) and zs[j + 1] <= t:
                j += 1
            out.append(self.breakpoints[j][1] if zs else 0)
        return out

    def is_monotone(self) -> bool:
        return all(a >= b for a, b in zip(self.values, self.values[1:]))


def build_corrector(points: Iterable[tuple[int, int]]) -> Corrector:
    """Running minimum of the per-level counters, ordered by level."""
    pts = tuple((int(z), int(c)) for z, c in points)
    values = []
    low = None
    for _, c in pts:
        low = c if low is None else min(low, c)
        values.append(low)
    return Corrector(pts, tuple(values))


@dataclass(frozen=True)
class Verdict:
    answer: str
    failing_level: int | None
    evidence: tuple[LevelRecord, ...]
    schedule: LevelSchedule
    corrector: Corrector

    @property
    def yes(self) -> bool:
        return self.answer == YES

    @property
    def failure(self) -> LevelRecord | None:
        for rec in self.evidence:
            if not rec.passed:
                return rec
        return None

    def render(self) -> str:
        """Structured text: ``key=value`` header lines then evidence rows."""
        fail = self.failure
        lines = [
            f"answer={self.answer}",
            f"failing_level={'-' if fail is None else fail.i}",
            f"failing_z={'-' if fail is None else fail.z}",
            f"failing_clause={'-' if fail is None else fail.clause}",
            f"levels={len(self.evidence)}",
            f"seed={self.schedule.master_seed}",
            "evidence=i z c ref_prev ref_cur ref_next pass",
        ]
        lines.extend(rec.row() for rec in self.evidence)
        return "\n".join(lines) + "\n"


def coherence_check(small: bool, c: int, f_prev: int | None, f_cur: int, f_next: int,
                    eps2: RationalLike, factor: int = 5) -> bool:
    """``c`` must be ``factor*eps2``-close to ``f_cur`` (small regime) or to one
    of the three neighbouring reference values (large regime)."""
    eps = factor * as_rational(eps2)
    if small:
        return eps_close(c, f_cur, eps)
    refs = [v for v in (f_prev, f_cur, f_next) if v is not None]
    return any(eps_close(c, v, eps) for v in refs)


def run_levels(stream, schedule: LevelSchedule, capacity=None,
               chunk_size: int = 1 << 20) -> dict[int, CounterTable]:
    """One table per level fed in a single pass; keys are level indices.

    ``capacity(level)`` overrides the table size (the default is ``level.K``).
    """
    tables = {lv.i: CounterTable(capacity(lv) if capacity else lv.K) for lv in schedule}

    def sink(level: Level, chunk: Chunk) -> None:
        table = tables[level.i]
        if not table.merge_counts(*chunk.summary()):
            table.extend(chunk.ids)

    fan_out(stream, schedule, sink, chunk_size=chunk_size)
    return tables


def _coherence(schedule: LevelSchedule, counters: Sequence[int], mins: Sequence[int],
               refs: Sequence[int], ref_beyond: int, eps2: Fraction,
               factor: int) -> Verdict:
    levels = list(schedule)
    limit = schedule.small_z_limit
    records = []
    failing = None
    for k, lv in enumerate(levels):
        prev = refs[k - 1] if k > 0 else None
        nxt = refs[k + 1] if k + 1 < len(levels) else ref_beyond
        small = lv.z <= limit
        ok = coherence_check(small, counters[k], prev, refs[k], nxt, eps2, factor)
        records.append(LevelRecord(i=lv.i, z=lv.z, a=lv.a, r=lv.r, K=lv.K,
                                   counter=counters[k], min_counter=mins[k],
                                   ref_prev=prev, ref_cur=refs[k], ref_next=nxt,
                                   small=small, passed=ok))
        if not ok and failing is None:
            failing = lv.i
    corrector = build_corrector((lv.z, c) for lv, c in zip(levels, counters))
    return Verdict(answer=YES if failing is None else NO, failing_level=failing,
                   evidence=tuple(records), schedule=schedule, corrector=corrector)


def _as_reference(f, n: int | None) -> tuple[FrequencyFunction, int]:
    f = f if isinstance(f, FrequencyFunction) else FrequencyFunction(f)
    if n is None:
        n = f.n
    if f.n > n:
        raise ValueError(f"reference has {f.n} ranks but the universe has only {n} elements")
    if n < 2:
        raise ValueError("the universe needs at least 2 elements")
    return f.padded(n), n


def test_reference(stream, f, params: TesterParams, n: int | None = None) -> Verdict:
    """Decide whether the stream's profile matches the reference ``f``.

    ``n`` is the declared universe size (default: the length of ``f``).
    """
    f, n = _as_reference(f, n)
    schedule = params.schedule(n)
    tables = run_levels(stream, schedule, chunk_size=params.chunk_size)
    levels = list(schedule)
    counters = [tables[lv.i].counter_at(lv.r) for lv in levels]
    mins = [tables[lv.i].min_counter() for lv in levels]
    refs = [f(lv.z) for lv in levels]
    return _coherence(schedule, counters, mins, refs, f(n), params.tol.eps2, params.factor)


test_reference.__test__ = False  # keep pytest from collecting it when imported


def _count_distinct(stream) -> tuple[np.ndarray, int]:
    arr = stream if isinstance(stream, np.ndarray) else np.fromiter(
        (int(e) for e in stream), dtype=np.uint64)
    return arr, int(np.unique(arr).size)


def reference_capacity(schedule: LevelSchedule, k1_mult: float = 1.0) -> int:
    """Table size for the reference side of the two-stream tester.

    Same form as the single-stream size with ``eps1`` replaced by
    ``eps1^4 / 5`` and an extra factor 2, capped at the universe size.
    """
    e1 = float(schedule.eps1) ** 4 / 5
    n = schedule.n
    lnln = max(1.0, math.log(math.log(n)))
    k1 = (4 / (float(schedule.eps2) * e1 * e1) * float(schedule.decay.tail_factor)
          * math.log(n) * lnln / float(schedule.delta) * (1 + e1 * e1))
    return min(n, max(1, math.ceil(k1_mult * k1)))


def test_two_streams(s1, s2, params: TesterParams, n: int | None = None,
                     swap: bool = False) -> Verdict:
    """Decide whether two streams have close profiles.

    Stream 1 is the reference side: its counters, made monotone by a running
    minimum, replace the reference function.  ``swap`` exchanges the roles.
    Without ``n`` both streams are materialised to count distinct elements.
    """
    if swap:
        s1, s2 = s2, s1
    if n is None:
        s1, d1 = _count_distinct(s1)
        s2, d2 = _count_distinct(s2)
        n = max(d1, d2, 2)
    schedule = params.schedule(n)
    levels = list(schedule)
    k1 = reference_capacity(schedule, params.k1_mult)
    t1 = run_levels(s1, schedule, capacity=lambda lv: k1, chunk_size=params.chunk_size)
    t2 = run_levels(s2, schedule, chunk_size=params.chunk_size)
    ref = build_corrector((lv.z, t1[lv.i].counter_at(lv.r)) for lv in levels)
    refs = list(ref.values)
    counters = [t2[lv.i].counter_at(lv.r) for lv in levels]
    mins = [t2[lv.i].min_counter() for lv in levels]
    beyond = refs[-1] if refs else 0
    return _coherence(schedule, counters, mins, refs, beyond, params.tol.eps2, params.factor)


test_two_streams.__test__ = False


def _tuple_key(values: Sequence[int]) -> int:
    if len(values) == 1:
        return int(values[0])
    h = 0x243F6A8885A308D3
    for v in values:
        h = splitmix64(h ^ (int(v) & ((1 << 64) - 1)))
    return h


def project(tuples: Iterable[Sequence[int]], coords: Sequence[int]) -> np.ndarray:
    """Element ids of the sub-tuples at ``coords`` (0-based).

    A single coordinate keeps its value as the id; several coordinates are
    hashed to a 64-bit id.
    """
    coords = list(coords)
    if not coords:
        raise ValueError("projection needs at least one coordinate")
    out = []
    for lineno, tup in enumerate(tuples, start=1):
        try:
            out.append(_tuple_key([tup[c] for c in coords]))
        except IndexError:
            raise ValueError(f"tuple {lineno} has {len(tup)} coordinates; "
                             f"projection asks for {coords}") from None
    return np.array(out, dtype=np.uint64)


def test_marginals(tuples: Iterable[Sequence[int]], proj1: Sequence[int],
                   proj2: Sequence[int], params: TesterParams,
                   n: int | None = None, swap: bool = False) -> Verdict:
    """Compare the profiles of two projections of a tuple stream.

    Both projections are formed in the same pass; the smaller support is
    zero-padded by the shared universe size.
    """
    tuples = list(tuples)
    return test_two_streams(project(tuples, proj1), project(tuples, proj2), params,
                            n=n, swap=swap)


test_marginals.__test__ = False


def corrector_is_decreasing(verdict: Verdict, decay: DecayParams, n: int) -> bool:
    return is_decreasing(verdict.corrector.as_function(n), decay)
