"""Exact frequency functions, relative Frechet closeness and its certificates.

Everything here is pure and exact: tolerances are ``Fraction`` values and all
verdict-determining comparisons are integer cross-multiplications.  These
routines are the ground truth that the streaming components are tested
against.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from collections import Counter
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

RationalLike = Union[int, str, Fraction, Decimal, float]

__all__ = [
    "ABSENT",
    "Coupling",
    "DecayParams",
    "FrequencyFunction",
    "IntervalPartition",
    "ProfileFormatError",
    "Rectangle",
    "Tolerances",
    "as_rational",
    "covers",
    "dump_profile",
    "eps_close",
    "find_coupling",
    "find_separating_rectangle",
    "frechet_close",
    "frequency_of_stream",
    "interval_partition",
    "is_decreasing",
    "is_half_stable",
    "load_profile",
    "parse_profile",
    "point_close",
    "ranked_elements",
    "residual",
    "separation_side",
    "tail_bound",
    "verify_coupling",
]

#: Returned by searches that find no certificate.
ABSENT = None


def as_rational(value: RationalLike) -> Fraction:
    """Convert ``value`` to an exact ``Fraction``.

    Strings may be decimals (``"0.3"``) or ratios (``"3/10"``).  Floats go
    through their shortest repr so ``0.3`` becomes ``3/10`` rather than the
    binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"not a finite number: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, (str, Decimal)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational number: {value!r}") from exc
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


@dataclass(frozen=True)
class Tolerances:
    """Rank slack ``eps1`` and count slack ``eps2``.

    Both must be positive.  Values of 1 or more are accepted because the
    farness thresholds used by the testers (``10*eps2`` and friends) routinely
    exceed 1.
    """

    eps1: Fraction
    eps2: Fraction

    def __post_init__(self) -> None:
        e1, e2 = as_rational(self.eps1), as_rational(self.eps2)
        if e1 <= 0 or e2 <= 0:
            raise ValueError(f"tolerances must be positive, got ({e1}, {e2})")
        object.__setattr__(self, "eps1", e1)
        object.__setattr__(self, "eps2", e2)

    def scaled(self, m1: RationalLike, m2: RationalLike) -> Tolerances:
        return Tolerances(self.eps1 * as_rational(m1), self.eps2 * as_rational(m2))

    def __le__(self, other: Tolerances) -> bool:
        return self.eps1 <= other.eps1 and self.eps2 <= other.eps2


@dataclass(frozen=True)
class DecayParams:
    """Decay rate: ``f(ceil(gamma1*t)) <= f(t)/gamma2``."""

    gamma1: Fraction
    gamma2: Fraction

    def __post_init__(self) -> None:
        g1, g2 = as_rational(self.gamma1), as_rational(self.gamma2)
        if not (g2 > g1 > 1):
            raise ValueError(f"need gamma2 > gamma1 > 1, got ({g1}, {g2})")
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)

    @property
    def tail_factor(self) -> Fraction:
        """``(gamma1 - 1) / (1 - gamma1/gamma2)``, the constant of the tail lemma."""
        return (self.gamma1 - 1) / (1 - self.gamma1 / self.gamma2)


class FrequencyFunction:
    """Non-increasing sequence of non-negative counts, ranks 1..n.

    ``f(t)`` returns the count at rank ``t`` and 0 for ranks beyond ``n``.
    """

    __slots__ = ("_counts", "_total")

    def __init__(self, counts: Iterable[int]) -> None:
        values = tuple(int(c) for c in counts)
        prev = None
        for t, c in enumerate(values, start=1):
            if c < 0:
                raise ValueError(f"negative count {c} at rank {t}")
            if prev is not None and c > prev:
                raise ValueError(f"counts increase at rank {t}: {prev} < {c}")
            prev = c
        self._counts = values
        self._total = sum(values)

    @property
    def counts(self) -> tuple[int, ...]:
        return self._counts

    @property
    def n(self) -> int:
        return len(self._counts)

    @property
    def total(self) -> int:
        return self._total

    def __call__(self, t: int) -> int:
        if t < 1:
            raise IndexError(f"ranks start at 1, got {t}")
        return self._counts[t - 1] if t <= len(self._counts) else 0

    def __len__(self) -> int:
        return len(self._counts)

    def __iter__(self) -> Iterator[int]:
        return iter(self._counts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, FrequencyFunction):
            return self._counts == other._counts
        if isinstance(other, (list, tuple)):
            return self._counts == tuple(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._counts)

    def __repr__(self) -> str:
        if len(self._counts) <= 12:
            return f"FrequencyFunction({list(self._counts)})"
        head = ", ".join(map(str, self._counts[:6]))
        return f"FrequencyFunction([{head}, ...], n={self.n}, total={self.total})"

    def padded(self, n: int) -> FrequencyFunction:
        if n <= self.n:
            return self
        return FrequencyFunction(self._counts + (0,) * (n - self.n))

    def support(self) -> FrequencyFunction:
        """The function restricted to its positive counts."""
        k = self.n
        while k and self._counts[k - 1] == 0:
            k -= 1
        return self if k == self.n else FrequencyFunction(self._counts[:k])


Profile = Union[FrequencyFunction, Sequence[int]]


def _as_function(f: Profile) -> FrequencyFunction:
    return f if isinstance(f, FrequencyFunction) else FrequencyFunction(f)


def ranked_elements(stream: Iterable[int]) -> list[tuple[int, int]]:
    """``(element, occurrences)`` pairs by decreasing count, ties by ascending id."""
    counts = Counter(int(e) for e in stream)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def frequency_of_stream(stream: Iterable[int]) -> FrequencyFunction:
    """Exact profile of a finite stream."""
    return FrequencyFunction(c for _, c in ranked_elements(stream))


# --- closeness ---------------------------------------------------------------

def eps_close(a: RationalLike, b: RationalLike, eps: RationalLike) -> bool:
    """``|a - b| <= eps * min(a, b)`` in exact arithmetic."""
    a, b, eps = as_rational(a), as_rational(b), as_rational(eps)
    if a < 0 or b < 0:
        raise ValueError("eps_close is defined on non-negative values")
    return abs(a - b) <= eps * min(a, b)


def _close_int(a: int, b: int, p: int, q: int) -> bool:
    # eps = p/q; integers only
    if a < b:
        a, b = b, a
    return q * (a - b) <= p * b


def point_close(p: tuple, q: tuple, tol: Tolerances) -> bool:
    return eps_close(p[0], q[0], tol.eps1) and eps_close(p[1], q[1], tol.eps2)


def _pair(f: Profile, g: Profile) -> tuple[tuple[int, ...], tuple[int, ...]]:
    f, g = _as_function(f), _as_function(g)
    n = max(f.n, g.n)
    return f.padded(n).counts, g.padded(n).counts


def _rank_window(i: int, p: int, q: int, n: int) -> tuple[int, int]:
    """1-based ranks j with |i - j| <= (p/q) * min(i, j), clipped to [1, n]."""
    lo = -((-i * q) // (p + q))  # ceil(i / (1 + eps))
    hi = (i * (p + q)) // q  # floor(i * (1 + eps))
    return max(lo, 1), min(hi, n)


def _close_set(fi: int, i: int, neg_g: list[int], p1: int, q1: int, p2: int,
               q2: int) -> tuple[int, int]:
    """Ranks of g whose points are close to ``(i, fi)``, as 1-based ``[lo, hi]``.

    Empty when ``lo > hi``.  Uses that g is non-increasing, so the ranks with
    an acceptable count form a contiguous block.
    """
    n = len(neg_g)
    lo, hi = _rank_window(i, p1, q1, n)
    if lo > hi:
        return lo, hi
    upper = (fi * (p2 + q2)) // q2  # floor(fi * (1 + eps2))
    lower = -((-fi * q2) // (p2 + q2))  # ceil(fi / (1 + eps2))
    # first rank with g <= upper, last rank with g >= lower
    first = bisect_left(neg_g, -upper) + 1
    last = bisect_right(neg_g, -lower)
    return max(lo, first), min(hi, last)


def covers(f: Profile, g: Profile, tol: Tolerances) -> bool:
    """Every point of ``f`` has a close point of ``g``.

    Each function is taken on its own domain (no padding), which is one half
    of the Frechet condition.
    """
    fc = _as_function(f).counts
    neg_g = [-c for c in _as_function(g).counts]
    e1, e2 = tol.eps1, tol.eps2
    p1, q1, p2, q2 = e1.numerator, e1.denominator, e2.numerator, e2.denominator
    for i, fi in enumerate(fc, start=1):
        lo, hi = _close_set(fi, i, neg_g, p1, q1, p2, q2)
        if lo > hi:
            return False
    return True


def frechet_close(f: Profile, g: Profile, tol: Tolerances) -> bool:
    """Relative Frechet closeness after zero-padding to the common domain."""
    fc, gc = _pair(f, g)
    return covers(fc, gc, tol) and covers(gc, fc, tol)


@dataclass(frozen=True)
class Coupling:
    """Monotone sequence of 1-based index pairs ``(a, b)``."""

    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def verify_coupling(f: Profile, g: Profile, coupling: Coupling | Sequence,
                    tol: Tolerances) -> bool:
    """Structural validity plus point closeness of every coupled pair."""
    fc, gc = _pair(f, g)
    n = len(fc)
    pairs = list(coupling.pairs if isinstance(coupling, Coupling) else coupling)
    if not pairs:
        return n == 0
    if tuple(pairs[0]) != (1, 1) or tuple(pairs[-1]) != (n, n):
        return False
    e1, e2 = tol.eps1, tol.eps2
    p1, q1, p2, q2 = e1.numerator, e1.denominator, e2.numerator, e2.denominator
    prev = None
    for a, b in pairs:
        if not (1 <= a <= n and 1 <= b <= n):
            return False
        if prev is not None:
            da, db = a - prev[0], b - prev[1]
            if da not in (0, 1) or db not in (0, 1) or da == db == 0:
                return False
        if not (_close_int(a, b, p1, q1) and _close_int(fc[a - 1], gc[b - 1], p2, q2)):
            return False
        prev = (a, b)
    return True


def find_coupling(f: Profile, g: Profile, tol: Tolerances) -> Coupling | None:
    """Coupling of relative length at most ``tol``, or ``ABSENT``.

    For each rank i of f the close ranks of g form an interval ``[l_i, r_i]``;
    pairing i with ``max(l_i, r_{i-1}) .. r_i`` yields a monotone coupling
    whenever the functions are close.
    """
    fc, gc = _pair(f, g)
    n = len(fc)
    if n == 0:
        return Coupling(())
    neg_g = [-c for c in gc]
    e1, e2 = tol.eps1, tol.eps2
    p1, q1, p2, q2 = e1.numerator, e1.denominator, e2.numerator, e2.denominator
    pairs: list[tuple[int, int]] = []
    r_prev = 1
    for i, fi in enumerate(fc, start=1):
        lo, hi = _close_set(fi, i, neg_g, p1, q1, p2, q2)
        if lo > hi:
            return ABSENT
        start = max(lo, r_prev)
        if start > hi:
            return ABSENT
        pairs.extend((i, j) for j in range(start, hi + 1))
        r_prev = hi
    coupling = Coupling(tuple(pairs))
    return coupling if verify_coupling(fc, gc, coupling, tol) else ABSENT


# --- rectangles and half-stability ------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """Region ``[x, x(1+eps1)] x [y, y(1+eps2)]``."""

    x: Fraction
    y: Fraction
    eps1: Fraction
    eps2: Fraction

    @property
    def right(self) -> Fraction:
        return self.x * (1 + self.eps1)

    @property
    def top(self) -> Fraction:
        return self.y * (1 + self.eps2)

    def ranks(self) -> range:
        """Integer ranks inside the horizontal span."""
        return range(math.ceil(self.x), math.floor(self.right) + 1)


def _separated(low_max: int, high_min: int, p2: int, q2: int) -> bool:
    # exists y > 0 with low_max <= y and y(1+eps2) <= high_min
    if low_max == 0:
        return high_min > 0
    return low_max * (p2 + q2) <= high_min * q2


def _candidate_windows(n: int, e1: Fraction) -> Iterator[tuple[Fraction, int, int]]:
    """Spans with corners at integers or at integers divided by ``1 + eps1``.

    Yields ``(x, first_rank, last_rank)`` for spans inside ``[1, n]`` holding at
    least one integer rank.
    """
    one = 1 + e1
    for t in range(1, n + 1):
        # left corner at t
        x = Fraction(t)
        if x * one <= n:
            yield x, t, math.floor(x * one)
        # right edge at t
        x = t / one
        if x >= 1:
            yield x, math.ceil(x), t


def separation_side(f: Profile, g: Profile, rect: Rectangle) -> str | None:
    """``"f"`` if f lies below ``rect`` and g above it, ``"g"`` for the reverse."""
    fc, gc = _pair(f, g)
    n = len(fc)
    if rect.x < 1 or rect.right > n or rect.y <= 0:
        return None
    ranks = rect.ranks()
    if len(ranks) == 0:
        return None
    fs = [fc[t - 1] for t in ranks]
    gs = [gc[t - 1] for t in ranks]
    if max(fs) <= rect.y and min(gs) >= rect.top:
        return "f"
    if max(gs) <= rect.y and min(fs) >= rect.top:
        return "g"
    return None


def find_separating_rectangle(f: Profile, g: Profile,
                              tol: Tolerances) -> Rectangle | None:
    """Rectangle with one function below and the other above across its span.

    Both functions are non-increasing, so the extreme values over a span are
    its endpoint values and each candidate costs O(1).
    """
    fc, gc = _pair(f, g)
    n = len(fc)
    e1, e2 = tol.eps1, tol.eps2
    p2, q2 = e2.numerator, e2.denominator
    for x, s, e in _candidate_windows(n, e1):
        for low, high in ((fc, gc), (gc, fc)):
            low_max, high_min = low[s - 1], high[e - 1]
            if _separated(low_max, high_min, p2, q2):
                y = Fraction(low_max) if low_max > 0 else Fraction(high_min) / (1 + e2)
                return Rectangle(x, y, e1, e2)
    return ABSENT


def _window_ok(fs: int, fe: int, p2: int, q2: int) -> bool:
    # values in [y, y(1+eps2)] with y = f(e): f(s) <= f(e) * (1 + eps2)
    return fs * q2 <= fe * (p2 + q2)


def _valid_windows_containing(fc: Sequence[int], t: int, e1: Fraction) -> Iterator[tuple[int, int]]:
    """Minimal integer contents ``[s, e]`` of spans ``[x, x(1+eps1)]`` holding t.

    Spans must lie inside ``[1, n]``.  For each first rank s, the earliest
    admissible corner gives the shortest content, and shorter contents are
    always easier to satisfy.
    """
    n = len(fc)
    one = 1 + e1
    x_min = max(Fraction(t) / one, Fraction(1))
    for s in range(math.ceil(x_min), t + 1):
        if s - 1 >= x_min:
            # corner just above s - 1
            e = math.floor((s - 1) * one)
            if (s - 1) * one >= n:
                break
        else:
            e = math.floor(x_min * one)
            if x_min * one > n:
                break
        yield s, max(e, t)


def is_half_stable(f: Profile, tol: Tolerances, min_count: int = 0) -> bool:
    """Every rank lies in a span ``[x, x(1+eps1)]`` whose counts fit in ``[y, y(1+eps2)]``.

    With ``min_count`` > 0 only ranks whose count is at least ``min_count``
    need to be covered (rounded profiles are unreliable in their low tail).
    When the domain is shorter than any admissible span the whole domain is
    the only window.
    """
    fc = _as_function(f).counts
    n = len(fc)
    e1, e2 = tol.eps1, tol.eps2
    p2, q2 = e2.numerator, e2.denominator
    if n == 0:
        return True
    if n < 1 + e1:
        return all(c < min_count for c in fc) or _window_ok(fc[0], fc[-1], p2, q2)
    for t in range(1, n + 1):
        if fc[t - 1] < min_count:
            continue
        if not any(_window_ok(fc[s - 1], fc[e - 1], p2, q2)
                   for s, e in _valid_windows_containing(fc, t, e1)):
            return False
    return True


@dataclass(frozen=True)
class IntervalPartition:
    """Consecutive integer intervals ``[l_j, r_j]`` covering ``1..n``."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        expected = 1
        for lo, hi in self.intervals:
            if lo != expected or hi < lo:
                raise ValueError(f"intervals must tile 1..n, got {self.intervals}")
            expected = hi + 1

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def satisfies(self, f: Profile, tol: Tolerances) -> bool:
        """Each interval is long enough and nearly flat: ``r >= floor((1+eps1) l)``
        and ``f(r) >= f(l) / (1 + 3 eps2)``."""
        fc = _as_function(f).counts
        if not self.intervals or self.intervals[-1][1] != len(fc):
            return False
        one = 1 + tol.eps1
        flat = 1 + 3 * tol.eps2
        for lo, hi in self.intervals:
            if hi < math.floor(one * lo):
                return False
            if fc[hi - 1] * flat < fc[lo - 1]:
                return False
        return True


def _anchor_points(n: int, e1: Fraction) -> list[int]:
    base = 1 + e1 / 3
    points: list[int] = []
    power = Fraction(1)
    while True:
        x = math.ceil(power)
        if x > n:
            return points
        if not points or x != points[-1]:
            points.append(x)
        power *= base


def interval_partition(f: Profile, tol: Tolerances) -> IntervalPartition | None:
    """Greedy partition certifying half-stability, or ``ABSENT``.

    Anchors ``x_i = ceil((1+eps1/3)^i)`` each get a valid span reaching as far
    right as possible; spans are then picked greedily, skipping any that
    overlap the last pick.  The picks' left ends start the intervals.
    """
    fc = _as_function(f).counts
    n = len(fc)
    if n == 0:
        return ABSENT
    e1, e2 = tol.eps1, tol.eps2
    p2, q2 = e2.numerator, e2.denominator
    one = 1 + e1
    spans: list[tuple[int, int]] = []
    pinned = Fraction(n) / one  # corner of the span whose right edge is n
    for x in _anchor_points(n, e1):
        best = None
        candidates = [(s, math.floor(s * one)) for s in range(max(math.ceil(x / one), 1), x + 1)
                      if s * one <= n]
        if pinned >= 1 and math.ceil(pinned) <= x:
            candidates.append((math.ceil(pinned), n))
        if n < one:
            candidates.append((1, n))
        for s, e in candidates:
            if e >= x and _window_ok(fc[s - 1], fc[e - 1], p2, q2):
                if best is None or e > best[1]:
                    best = (s, e)
        if best is None:
            return ABSENT
        spans.append(best)
    starts: list[int] = []
    last_end = 0
    for s, e in spans:
        if s > last_end:
            starts.append(s)
            last_end = e
    if starts[0] != 1:
        return ABSENT
    bounds = starts[1:] + [n + 1]
    partition = IntervalPartition(tuple((lo, hi - 1) for lo, hi in zip(starts, bounds)))
    return partition if partition.satisfies(fc, tol) else ABSENT


# --- decay and tails ---------------------------------------------------------

def is_decreasing(f: Profile, decay: DecayParams) -> bool:
    """``f(ceil(gamma1*t)) <= f(t)/gamma2`` for every t with ``gamma1*t <= n``.

    A plain sequence need not be non-increasing, so the predicate also applies
    to raw step functions such as the uncorrected tester output.
    """
    fc = f.counts if isinstance(f, FrequencyFunction) else tuple(int(c) for c in f)
    n = len(fc)
    g1, g2 = decay.gamma1, decay.gamma2
    t = 1
    while g1 * t <= n:
        if fc[math.ceil(g1 * t) - 1] * g2 > fc[t - 1]:
            return False
        t += 1
    return True


def residual(f: Profile, u: int) -> int:
    """Total count at ranks ``u+1 .. n``."""
    fc = _as_function(f).counts
    if not 0 <= u <= len(fc):
        raise ValueError(f"u must lie in [0, {len(fc)}], got {u}")
    return sum(fc[u:])


def tail_bound(f: Profile, decay: DecayParams, k: int, eps: RationalLike) -> bool:
    """Check ``(eps/k) F_res(k) <= eps f(k) (gamma1-1)/(1-gamma1/gamma2)``."""
    fc = _as_function(f)
    eps = as_rational(eps)
    if not 1 <= k <= fc.n:
        raise ValueError(f"k must lie in [1, {fc.n}], got {k}")
    return eps / k * residual(fc, k) <= eps * fc(k) * decay.tail_factor


# --- profile text format -----------------------------------------------------

class ProfileFormatError(ValueError):
    """A profile file is malformed; the message carries the line number."""


def parse_profile(lines: Iterable[str]) -> FrequencyFunction:
    """One decimal count per line, non-increasing.

    Blank lines and ``#`` comments are skipped.
    """
    counts: list[int] = []
    for lineno, raw in enumerate(lines, start=1):
        token = raw.split("#", 1)[0].strip()
        if not token:
            continue
        if not token.isdigit():
            raise ProfileFormatError(f"line {lineno}: expected a non-negative integer, got {token!r}")
        c = int(token)
        if counts and c > counts[-1]:
            raise ProfileFormatError(f"line {lineno}: count {c} exceeds previous count {counts[-1]}")
        counts.append(c)
    return FrequencyFunction(counts)


def load_profile(path) -> FrequencyFunction:
    with open(path, encoding="utf-8") as fh:
        return parse_profile(fh)


def dump_profile(f: Profile) -> str:
    return "".join(f"{c}\n" for c in _as_function(f).counts)
