"""Reference profiles, stream synthesis, far instances and reduction fixtures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import FrequencyFunction, Tolerances, frechet_close

__all__ = [
    "FarInstance",
    "StreamSpec",
    "double_jump_labels",
    "double_jump_stream",
    "f0_profile",
    "geometric_profile",
    "index_reduction_stream",
    "index_reference",
    "parse_bits",
    "random_ids",
    "perturb_far",
    "render_labels",
    "scale_profile",
    "stream_from_profile",
    "uniform_profile",
    "zipf_profile",
]

ORDERINGS = ("shuffled", "sorted", "round-robin")


def _apportion(weights: Sequence, total: int) -> FrequencyFunction:
    """Largest-remainder rounding of ``total * w_i / sum(w)``.

    Weights are non-increasing.  Ties in the fractional part go to the lower
    rank, which keeps the result non-increasing.
    """
    if total < 0:
        raise ValueError("total must be non-negative")
    exact = all(isinstance(w, (int, Fraction)) for w in weights)
    if exact:
        # integer weights over a common denominator; remainders share the divisor
        den = math.lcm(*(Fraction(w).denominator for w in weights)) if weights else 1
        ints = [int(w * den) for w in weights]
        s = sum(ints)
        floors, fracs = [], []
        for w in ints:
            q, r = divmod(total * w, s)
            floors.append(q)
            fracs.append(r)
    else:
        w = np.asarray(weights, dtype=np.float64)
        raw = total * (w / w.sum())
        floors = np.floor(raw).astype(np.int64).tolist()
        fracs = (raw - np.floor(raw)).tolist()
    deficit = total - sum(floors)
    order = sorted(range(len(weights)), key=lambda t: (-fracs[t], t))
    for t in order[:deficit]:
        floors[t] += 1
    return FrequencyFunction(floors)


def zipf_profile(n: int, N: int, alpha: float) -> FrequencyFunction:
    """``f(i) ~ c N / i^alpha`` rounded so the counts sum to ``N``.

    Integer exponents are evaluated in exact rationals.
    """
    if n < 1 or N < 0 or alpha <= 0:
        raise ValueError("need n >= 1, N >= 0, alpha > 0")
    if float(alpha).is_integer():
        a = int(alpha)
        scale = math.lcm(*range(1, n + 1)) ** a
        weights = [scale // i ** a for i in range(1, n + 1)]
    else:
        weights = np.arange(1, n + 1, dtype=np.float64) ** (-float(alpha))
    return _apportion(list(weights), N)


def uniform_profile(n: int, N: int) -> FrequencyFunction:
    if n < 1:
        raise ValueError("n must be positive")
    return _apportion([1] * n, N)


def geometric_profile(n: int, N: int) -> FrequencyFunction:
    """``f(i) ~ c N / 2^i``."""
    if n < 1:
        raise ValueError("n must be positive")
    return _apportion([Fraction(1, 2 ** i) for i in range(1, n + 1)], N)


@dataclass(frozen=True)
class StreamSpec:
    profile: FrequencyFunction
    ordering: str = "shuffled"
    seed: int = 0
    #: id of each rank (default: rank i gets id i)
    ids: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if not isinstance(self.profile, FrequencyFunction):
            object.__setattr__(self, "profile", FrequencyFunction(self.profile))
        if self.ids is not None and len(self.ids) != self.profile.n:
            raise ValueError("need one id per rank")


def random_ids(n: int, seed: int, universe: int | None = None) -> tuple[int, ...]:
    """``n`` distinct ids drawn from ``1..universe`` (a random relabelling)."""
    universe = n if universe is None else universe
    rng = np.random.default_rng(seed)
    return tuple(int(v) + 1 for v in rng.choice(universe, size=n, replace=False))


def stream_from_profile(spec: StreamSpec) -> np.ndarray:
    """Stream whose exact profile is ``spec.profile``.

    Rank i is element ``i`` unless ``spec.ids`` relabels it.  Orderings:
    all copies grouped by rank (``sorted``), one copy of each element per
    round (``round-robin``) or a seeded permutation (``shuffled``).
    """
    counts = np.asarray(spec.profile.counts, dtype=np.int64)
    labels = (np.arange(1, len(counts) + 1, dtype=np.uint64) if spec.ids is None
              else np.asarray(spec.ids, dtype=np.uint64))
    stream = np.repeat(labels, counts)
    if spec.ordering == "sorted" or stream.size == 0:
        return stream
    if spec.ordering == "round-robin":
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        occurrence = np.arange(stream.size) - starts
        rank = np.repeat(np.arange(len(counts)), counts)
        return stream[np.lexsort((rank, occurrence))]
    rng = np.random.default_rng(spec.seed)
    return stream[rng.permutation(stream.size)]


def scale_profile(f: FrequencyFunction, factor: Fraction) -> FrequencyFunction:
    """``floor(factor * f(i))`` at every rank; monotone when ``factor >= 0``."""
    factor = Fraction(factor)
    return FrequencyFunction(math.floor(c * factor) for c in f.counts)


@dataclass(frozen=True)
class FarInstance:
    """A perturbed profile with the oracle evidence that it is far."""

    profile: FrequencyFunction
    target: Tolerances
    strategy: str
    distortion: Fraction
    transcript: tuple[str, ...]


def _default_band(f: FrequencyFunction) -> int:
    support = f.support().n
    return max(1, 2 ** max(0, int(math.log2(max(support, 1))) - 2))


def perturb_far(f: FrequencyFunction, target: Tolerances, *, band: int | None = None,
                max_distortion: int = 4096) -> FarInstance:
    """Profile oracle-verified NOT ``target``-close to ``f``.

    Counts on the dyadic band ``[z, 2z)`` are multiplied by growing factors
    starting above ``(1+eps2)^2`` and the profile is re-sorted; if that never
    works the ranks are stretched instead.  Every attempt is checked against
    the exact oracle and logged in the transcript.
    """
    if not isinstance(f, FrequencyFunction):
        f = FrequencyFunction(f)
    z = _default_band(f) if band is None else band
    if not 1 <= z <= f.n:
        raise ValueError(f"band start {z} outside 1..{f.n}")
    log: list[str] = []
    start = math.floor((1 + target.eps2) ** 2) + 1
    factor = start
    while factor <= max_distortion:
        counts = list(f.counts)
        for t in range(z, min(2 * z, f.n + 1)):
            counts[t - 1] *= factor
        g = FrequencyFunction(sorted(counts, reverse=True))
        close = frechet_close(f, g, target)
        log.append(f"scale band [{z},{min(2 * z, f.n + 1) - 1}] by {factor}: "
                   f"{'close' if close else 'far'}")
        if not close:
            return FarInstance(g, target, "scale", Fraction(factor), tuple(log))
        factor *= 2
    stretch = math.floor((1 + target.eps1) ** 2) + 1
    while stretch <= max_distortion:
        g = FrequencyFunction(f(math.ceil(t / stretch)) for t in range(1, f.n + 1))
        close = frechet_close(f, g, target)
        log.append(f"stretch ranks by {stretch}: {'close' if close else 'far'}")
        if not close:
            return FarInstance(g, target, "stretch", Fraction(stretch), tuple(log))
        stretch *= 2
    raise ValueError("no far instance within the distortion budget:\n" + "\n".join(log))


# --- reduction fixtures ------------------------------------------------------

def parse_bits(x) -> tuple[int, ...]:
    bits = tuple(int(b) for b in x)
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"not a bit string: {x!r}")
    return bits


def index_reduction_stream(x, y: int) -> np.ndarray:
    """One copy of ``a_i`` (id i) for each set bit ``x_i``, then ``a_y``."""
    bits = parse_bits(x)
    if not 1 <= y <= len(bits):
        raise ValueError(f"y must lie in 1..{len(bits)}, got {y}")
    items = [i for i, b in enumerate(bits, start=1) if b] + [y]
    return np.array(items, dtype=np.uint64)


def index_reference(x) -> FrequencyFunction:
    """Count 1 on ``k`` ranks, ``k`` being the number of set bits."""
    return FrequencyFunction([1] * sum(parse_bits(x)))


def f0_profile(n: int) -> FrequencyFunction:
    """``f(t) = 2^(k-i)`` for ``2^(i-1) < t <= 2^i`` with ``n = 2^k`` (and f(1) = n)."""
    if n < 16 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 16, got {n}")
    k = n.bit_length() - 1
    return FrequencyFunction(2 ** (k - (t - 1).bit_length()) for t in range(1, n + 1))


def double_jump_labels(x, y: int) -> list[str]:
    """The stream as symbolic labels ``b1``.. and ``a1``.."""
    bits = parse_bits(x)
    half = len(bits)
    n = 2 * half
    f0 = f0_profile(n)  # validates the size
    if not 1 <= y <= half:
        raise ValueError(f"y must lie in 1..{half}, got {y}")
    out: list[str] = []
    for j in range(1, half // 2 + 1):
        out.extend([f"b{j}"] * f0(j))
    for i, b in enumerate(bits, start=1):
        if b:
            out.extend([f"a{i}"] * 2)
    for i, b in enumerate(bits, start=1):
        if not b:
            out.append(f"a{i}")
    out.append(f"a{y}")
    return out


def double_jump_stream(x, y: int) -> np.ndarray:
    """Prefix ``b_1 .. b_{n'/2}`` with f0 counts, then every ``a_i`` twice when
    ``x_i = 1`` and once otherwise, then ``a_y``.

    Ids: ``b_j`` is ``j`` and ``a_i`` is ``n'/2 + i``.
    """
    half = len(parse_bits(x))
    ids = []
    for label in double_jump_labels(x, y):
        k = int(label[1:])
        ids.append(k if label[0] == "b" else half // 2 + k)
    return np.array(ids, dtype=np.uint64)


def render_labels(labels: Sequence[str]) -> str:
    """Run-length form, e.g. ``b1^16 b2^8 a4``."""
    parts = []
    j = 0
    while j < len(labels):
        k = j
        while k < len(labels) and labels[k] == labels[j]:
            k += 1
        run = k - j
        parts.append(labels[j] if run == 1 else f"{labels[j]}^{run}")
        j = k
    return " ".join(parts)
