"""Acceptance criteria 1-11.

Each test prints one ``C<k> PASS|FAIL`` line (collected in the terminal
summary) before asserting.  Monte-Carlo criteria run 200 master seeds and use
the tuned sampling divisor ``B="concentrated"``; thresholds are never tuned.
"""
from __future__ import annotations

import itertools
import math
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest

from freqtest.core import (
    DecayParams,
    FrequencyFunction,
    Tolerances,
    covers,
    find_coupling,
    find_separating_rectangle,
    frechet_close,
    frequency_of_stream,
    is_half_stable,
    verify_coupling,
)
from freqtest.generators import (
    StreamSpec,
    double_jump_labels,
    double_jump_stream,
    f0_profile,
    geometric_profile,
    index_reduction_stream,
    index_reference,
    perturb_far,
    render_labels,
    scale_profile,
    stream_from_profile,
    uniform_profile,
    zipf_profile,
)
from freqtest.sampling import derive_seed
from freqtest.spacesaving import CounterTable
from freqtest.tester import TesterParams, run_levels, test_reference, test_two_streams

from _oracles import clopper_pearson_lower, rectangle_separates

SEEDS = 200
TOL = Tolerances(F(3, 10), F(1, 5))
DELTA = F(1, 5)
DECAY = DecayParams(2, F(5, 2))
PARAMS = TesterParams(TOL, delta=DELTA, decay=DECAY, B="concentrated")
N_ZIPF, TOTAL_ZIPF = 10 ** 4, 10 ** 6


def verdict_line(report, k: int, ok: bool, detail: str) -> None:
    report(f"C{k} {'PASS' if ok else 'FAIL'}: {detail}")


def shuffled(profile, seed):
    return stream_from_profile(StreamSpec(profile, "shuffled", seed))


def trial_seed(tag: int, k: int) -> int:
    return derive_seed(tag, k)


# --- criteria 1 and 2: SpaceSaving ------------------------------------------------

def random_stream(rng: random.Random):
    n = rng.randint(1, 10 ** 4)
    N = rng.randint(1, 10 ** 5)
    kind = rng.choice(["zipf", "uniform", "geometric"])
    if kind == "zipf":
        profile = zipf_profile(n, N, rng.choice([0.5, 1, 1.5, 2, 2.5]))
    elif kind == "uniform":
        profile = uniform_profile(n, N)
    else:
        profile = geometric_profile(min(n, 40), N)
    ordering = rng.choice(["shuffled", "sorted", "round-robin"])
    return stream_from_profile(StreamSpec(profile, ordering, rng.getrandbits(32)))


def spacesaving_violations(stream: np.ndarray, K: int) -> list[str]:
    """Properties 1-4, the rank lemmas and the residual bound at doubling
    checkpoints, all against exact counts kept alongside."""
    out = []
    table = CounterTable(K)
    exact = np.zeros(int(stream.max()) + 1 if stream.size else 1, dtype=np.int64)
    pos = 0
    cut = 1024
    while pos < stream.size:
        end = min(cut, stream.size)
        block = stream[pos:end]
        table.extend(block)
        exact += np.bincount(block.astype(np.int64), minlength=exact.size)
        pos, cut = end, cut * 2
        N = int(end)
        entries = table.entries()
        ids = np.array([e.element for e in entries], dtype=np.int64)
        cnt = np.array([e.counter for e in entries], dtype=np.int64)
        err = np.array([e.error for e in entries], dtype=np.int64)
        occ = exact[ids]
        cK = table.min_counter()
        f = np.sort(exact[exact > 0])[::-1]
        if table.is_full and cnt.sum() != N:
            out.append("P1")
        if (err > cK).any():
            out.append("P2")
        if ((cnt - err > occ) | (occ > cnt)).any():
            out.append("P3")
        absent = np.ones(exact.size, dtype=bool)
        absent[ids] = False
        if (exact[absent] > cK).any():
            out.append("P4")
        if cK * K > N:
            out.append("c_K <= N/K")
        m = min(K, f.size)
        padded_c = np.zeros(m, dtype=np.int64)
        padded_c[:len(cnt[:m])] = cnt[:m]
        if (np.abs(f[:m] - padded_c) > cK).any() or (f[K:] > cK).any():
            out.append("|f(i) - c_i| <= c_K")
        if (np.abs(f[:len(occ)] - occ[:f.size]) > cK).any():
            out.append("SpaceSaving lemma")
        # residual: c_K (K - 2u) <= sum_{i > u} f(i) for every u < K/2
        suffix = np.concatenate([np.cumsum(f[::-1])[::-1], [0]])
        u = np.arange(0, (K + 1) // 2)
        res = suffix[np.minimum(u, f.size)]
        if (cK * (K - 2 * u) > res).any():
            out.append("residual")
    return out


@pytest.fixture(scope="module")
def spacesaving_runs():
    rng = random.Random(20240601)
    start = time.perf_counter()
    results = []
    for _ in range(1000):
        stream = random_stream(rng)
        K = rng.randint(8, 512)
        results.append(spacesaving_violations(stream, K))
    return results, time.perf_counter() - start


def test_c1_spacesaving_invariants(spacesaving_runs, report):
    results, seconds = spacesaving_runs
    bad = [v for r in results for v in r if v != "residual"]
    ok = len(results) >= 1000 and not bad and seconds < 120
    verdict_line(report, 1, ok, f"{len(results)} streams, {len(bad)} violations, {seconds:.1f}s")
    assert ok, bad[:10]


def test_c2_residual_bound(spacesaving_runs, report):
    results, _ = spacesaving_runs
    bad = sum(r.count("residual") for r in results)
    spreads = {}
    for alpha in (1.5, 2):
        g = zipf_profile(N_ZIPF, TOTAL_ZIPF, alpha)
        s = shuffled(g, 1)
        ratios = []
        for K in (32, 64, 128, 256, 512):
            t = CounterTable(K)
            t.extend(s)
            ratios.append(t.min_counter() * K ** alpha / TOTAL_ZIPF)
        spreads[alpha] = max(ratios) / min(ratios)
    ok = bad == 0 and all(v <= 4 for v in spreads.values())
    detail = ", ".join(f"alpha={a} max/min={v:.3f}" for a, v in spreads.items())
    verdict_line(report, 2, ok, f"{bad} residual violations; {detail} (<= 4)")
    assert ok


# --- criterion 3: coupling certificates --------------------------------------------

def test_c3_coupling_equivalence(report):
    tols = [Tolerances(F(1, 4), F(1, 2)), Tolerances(F(1, 2), F(1, 3))]
    checked = bad = 0
    for n in range(1, 9):
        fs = [tuple(reversed(c)) for c in itertools.combinations_with_replacement(range(5), n)]
        for tol in tols:
            for a in fs:
                for b in fs:
                    cert = find_coupling(a, b, tol)
                    checked += 1
                    if (cert is not None) != frechet_close(a, b, tol):
                        bad += 1
                    elif cert is not None and not verify_coupling(a, b, cert, tol):
                        bad += 1
    rng = random.Random(7)
    for _ in range(10 ** 4):
        n = rng.randint(1, 64)
        top = rng.choice([4, 20, 1000])
        a = sorted((rng.randint(0, top) for _ in range(n)), reverse=True)
        b = sorted((rng.randint(0, top) for _ in range(rng.randint(1, 64))), reverse=True)
        tol = Tolerances(F(rng.randint(1, 10), 10), F(rng.randint(1, 20), 10))
        cert = find_coupling(a, b, tol)
        checked += 1
        if (cert is not None) != frechet_close(a, b, tol):
            bad += 1
        elif cert is not None and not verify_coupling(a, b, cert, tol):
            bad += 1
    ok = bad == 0
    verdict_line(report, 3, ok, f"{checked} pairs, {bad} violations")
    assert ok


# --- criterion 4: dichotomy --------------------------------------------------------

def test_c4_dichotomy(report):
    e1, e2 = F(1, 5), F(1, 10)
    stable = Tolerances(3 * e1, e2)
    rng = random.Random(11)

    def draw():
        steps = [(rng.randint(1, 40), rng.randint(0, 60)) for _ in range(rng.randint(1, 6))]
        counts = []
        for width, level in sorted(steps, key=lambda s: -s[1]):
            counts.extend([level] * width)
        return counts

    tested = bad = 0
    while tested < 1000:
        f, g = draw(), draw()
        n = max(len(f), len(g))
        if not 2 <= n <= 200:
            continue
        f = FrequencyFunction(f + [0] * (n - len(f)))
        g = FrequencyFunction(g + [0] * (n - len(g)))
        if not (is_half_stable(f, stable) and is_half_stable(g, stable)):
            continue
        if frechet_close(f, g, Tolerances(3 * e1, 10 * e2)):
            continue
        tested += 1
        rect = find_separating_rectangle(f, g, Tolerances(e1, 8 * e2))
        if rect is None or not rectangle_separates(f.counts, g.counts, rect):
            bad += 1
    ok = bad == 0
    verdict_line(report, 4, ok, f"{tested} far half-stable pairs, {bad} without a rectangle")
    assert ok


# --- criteria 5, 6, 7, 11: reference tester ------------------------------------------

@pytest.fixture(scope="module")
def zipf_reference():
    return zipf_profile(N_ZIPF, TOTAL_ZIPF, 1.5)


@pytest.fixture(scope="module")
def completeness_runs(zipf_reference):
    g = zipf_reference
    start = time.perf_counter()
    runs = []
    for k in range(SEEDS):
        seed = trial_seed(5, k)
        runs.append(test_reference(shuffled(g, seed), g, PARAMS.with_seed(seed)))
    return runs, time.perf_counter() - start


def test_c5_completeness(completeness_runs, report):
    runs, seconds = completeness_runs
    yes = sum(v.yes for v in runs)
    lower = clopper_pearson_lower(yes, len(runs))
    ok = lower > 1 - float(DELTA) and seconds < 600
    verdict_line(report, 5, ok, f"YES {yes}/{len(runs)}, 95% CI lower {lower:.4f} (> 0.8), "
                                f"{seconds:.1f}s")
    assert ok


def test_c6_soundness(zipf_reference, report):
    g = zipf_reference
    far = perturb_far(g, TOL.scaled(3, 10))
    assert not frechet_close(g, far.profile, TOL.scaled(3, 10))
    no = 0
    for k in range(SEEDS):
        seed = trial_seed(6, k)
        no += not test_reference(shuffled(far.profile, seed), g, PARAMS.with_seed(seed)).yes
    ok = no / SEEDS >= 1 - float(DELTA)
    verdict_line(report, 6, ok, f"NO {no}/{SEEDS} (>= 0.8); far instance: {far.transcript[-1]}")
    assert ok


def test_c7_tolerant_acceptance(zipf_reference, report):
    g = zipf_reference
    f = scale_profile(g, F(11, 10))
    assert frechet_close(f, g, Tolerances(TOL.eps1 ** 4, TOL.eps2))
    yes = 0
    for k in range(SEEDS):
        seed = trial_seed(7, k)
        yes += test_reference(shuffled(g, seed), f, PARAMS.with_seed(seed)).yes
    ok = yes / SEEDS >= 1 - float(DELTA)
    verdict_line(report, 7, ok, f"YES {yes}/{SEEDS} (>= 0.8) against f = floor(1.1 g)")
    assert ok


def test_c11_corrector(completeness_runs, zipf_reference, report):
    runs, _ = completeness_runs
    g = zipf_reference
    target = TOL.scaled(5, 2)
    close = sum(frechet_close(v.corrector.as_function(g.n), g, target) for v in runs)
    monotone = sum(v.corrector.is_monotone() for v in runs)
    ok = close / len(runs) >= 0.8 and monotone == len(runs)
    verdict_line(report, 11, ok, f"close at (5eps1, 2eps2) {close}/{len(runs)} (>= 0.8), "
                                 f"monotone {monotone}/{len(runs)}")
    assert ok


# --- criterion 8: two streams -------------------------------------------------------

def test_c8_two_streams(zipf_reference, report):
    g = zipf_reference
    far = perturb_far(g, TOL.scaled(4, 12)).profile
    assert not frechet_close(g, far, TOL.scaled(4, 12))
    yes = no = 0
    for k in range(SEEDS):
        seed = trial_seed(8, k)
        s1 = shuffled(g, derive_seed(seed, 1))
        params = PARAMS.with_seed(seed)
        yes += test_two_streams(s1, shuffled(g, derive_seed(seed, 2)), params, n=g.n).yes
        no += not test_two_streams(s1, shuffled(far, derive_seed(seed, 3)), params, n=g.n).yes
    ok = yes / SEEDS >= 0.8 and no / SEEDS >= 0.8
    verdict_line(report, 8, ok, f"same profile YES {yes}/{SEEDS}, far pair NO {no}/{SEEDS} "
                                f"(>= 0.8 each)")
    assert ok


# --- criterion 9: lower-bound fixtures ---------------------------------------------

def test_c9_lower_bound_fixtures(report):
    bad = checked = 0
    far_tol = Tolerances(F(1, 2), F(1, 2))  # (10 eps, 10 eps) with eps = 1/20
    for length in range(1, 13):
        for bits in itertools.product("01", repeat=length):
            x = "".join(bits)
            f = index_reference(x)
            k = x.count("1")
            for y in range(1, length + 1):
                g = frequency_of_stream(index_reduction_stream(x, y))
                checked += 1
                if x[y - 1] == "1":
                    bad += g(1) != 2 or covers(g, f, far_tol)
                elif k > 0:
                    bad += g.counts != (1,) * (k + 1) or not covers(g, f, Tolerances(F(1, k), F(1, k)))
                else:
                    bad += g.counts != (1,)
    f0 = f0_profile(16)
    for bits in itertools.product("01", repeat=8):
        x = "".join(bits)
        for y in range(1, 9):
            g = frequency_of_stream(double_jump_stream(x, y))
            checked += 1
            bad += g.n != 4 + 8 or g.total != 32 + 8 + x.count("1") + 1
            if x.count("1") != 4:
                continue
            if x[y - 1] == "1":
                bad += g(5) != 3 or covers(g, f0, Tolerances(F(1, 4), F(1, 4)))
            else:
                bad += not covers(g, f0, Tolerances(F(1, 8), F(1, 8)))
    worked = render_labels(double_jump_labels("01100110", 4))
    exact = worked == "b1^16 b2^8 b3^4 b4^4 a2^2 a3^2 a6^2 a7^2 a1 a4 a5 a8 a4"
    ok = bad == 0 and exact
    verdict_line(report, 9, ok, f"{checked} (x, y) cases, {bad} violations, "
                                f"worked stream {'exact' if exact else 'MISMATCH'}")
    assert ok


# --- criterion 10: space accounting -------------------------------------------------

def expected_levels(n: int):
    """Independent recomputation of the level table sizes."""
    e1, e2, delta = TOL.eps1, TOL.eps2, DELTA
    B = 6 * math.log(math.log(n) / float(delta))
    tail = 1 / (1 - float(DECAY.gamma1 / DECAY.gamma2))
    small = math.ceil(1 / e1 ** 3)
    base = 1 + e1 * e1
    sizes, seen, i = [], set(), 0
    while True:
        z = math.ceil(base ** i)
        if z > n:
            break
        if z not in seen:
            seen.add(z)
            a = 1 if z <= small else max(1, math.ceil(float(e1 * e1) * z / B))
            K = math.ceil(2 * (z / a) * tail * (1 + float(e1 * e1)) * math.log(n)
                          / (float(e2) * float(delta)))
            sizes.append(K)
        i += 1
    return sizes


def test_c10_space_accounting(report):
    params = TesterParams(TOL, delta=DELTA, decay=DECAY)
    lines, ok = [], True
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        sch = params.schedule(n)
        sizes = expected_levels(n)
        allocated = sum(min(K, n) for K in sizes)
        bound = math.ceil(math.log(n) / math.log(1 + float(TOL.eps1))) * max(sizes)
        ok &= [lv.K_formula for lv in sch] == sizes
        ok &= sch.total_counters == allocated and sch.counter_budget() == bound
        ok &= allocated <= bound
        if n <= 10 ** 4:
            tables = run_levels(np.arange(1, 11, dtype=np.uint64), sch)
            ok &= sum(t.capacity for t in tables.values()) == allocated
        lines.append(f"n={n}: {allocated} <= {bound} (uncapped {sum(sizes)})")
    verdict_line(report, 10, bool(ok), "; ".join(lines))
    assert ok
