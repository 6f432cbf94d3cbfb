from __future__ import annotations

import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqtest.core import (
    DecayParams,
    FrequencyFunction,
    Tolerances,
    covers,
    frechet_close,
    frequency_of_stream,
    is_decreasing,
    is_half_stable,
)
from freqtest.generators import (
    StreamSpec,
    double_jump_labels,
    double_jump_stream,
    f0_profile,
    geometric_profile,
    index_reduction_stream,
    index_reference,
    parse_bits,
    perturb_far,
    random_ids,
    render_labels,
    scale_profile,
    stream_from_profile,
    uniform_profile,
    zipf_profile,
)

from _oracles import brute_frechet

ALPHAS = [1.1, 1.25, 1.5, 2, 2.5, 3]
profiles = st.builds(
    zipf_profile, st.integers(1, 60), st.integers(0, 2000), st.sampled_from(ALPHAS))


class TestProfiles:
    def test_zipf_exact_example(self):
        # c = 12/25 so the raw values are integral
        assert zipf_profile(4, 100, 1).counts == (48, 24, 16, 12)

    def test_single_rank(self):
        assert zipf_profile(1, 37, 1.5).counts == (37,)

    def test_uniform_and_geometric(self):
        assert uniform_profile(4, 8).counts == (2, 2, 2, 2)
        assert uniform_profile(3, 7).counts == (3, 2, 2)
        assert geometric_profile(3, 7).counts == (4, 2, 1)

    def test_zipf_head_is_linear_in_N(self):
        # f(1) = Theta(N) for alpha > 1: bounded below by 1/zeta(alpha)
        for alpha, low in ((1.5, 0.38), (2, 0.6)):
            for n in (10, 100, 1000, 10 ** 4):
                assert zipf_profile(n, 10 ** 6, alpha)(1) >= low * 10 ** 6

    @given(profiles)
    def test_non_increasing(self, f):
        assert f.counts == tuple(sorted(f.counts, reverse=True))

    @given(st.integers(1, 60), st.integers(0, 5000), st.sampled_from(ALPHAS))
    def test_rounding_error_below_one(self, n, N, alpha):
        f = zipf_profile(n, N, alpha)
        assert f.total == N
        c = 1 / sum(j ** -alpha for j in range(1, n + 1))
        assert all(abs(f(i) - c * N / i ** alpha) < 1 + 1e-9 for i in range(1, n + 1))

    @pytest.mark.parametrize("call", [
        lambda: zipf_profile(0, 5, 1), lambda: zipf_profile(3, 5, 0),
        lambda: uniform_profile(0, 3), lambda: geometric_profile(0, 3),
    ])
    def test_rejects_bad_arguments(self, call):
        with pytest.raises(ValueError):
            call()

    @settings(max_examples=200)
    @given(st.integers(2, 400), st.integers(100, 10 ** 6), st.sampled_from([1.5, 2, 2.5, 3]),
           st.sampled_from([5, 10, 20]))
    def test_zipf_head_is_decreasing(self, n, N, alpha, inv_eta):
        eta = F(1, inv_eta)
        head = [c for c in zipf_profile(n, N, alpha).counts if c >= inv_eta]
        gamma2 = F(2 ** alpha) * (1 - eta)
        assert gamma2 > 2
        assert is_decreasing(FrequencyFunction(head), DecayParams(2, gamma2))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 400), st.integers(100, 10 ** 6), st.sampled_from(ALPHAS),
           st.sampled_from([2, 4, 5, 10]))
    def test_zipf_half_stable(self, n, N, alpha, inv_eps):
        # count slack 2*eps absorbs (1+eps/alpha)^alpha > 1+eps and rounding
        eps = F(1, inv_eps)
        f = zipf_profile(n, N, alpha)
        assert is_half_stable(f, Tolerances(eps / F(alpha), 2 * eps), min_count=inv_eps)

    def test_half_stability_needs_second_order_slack(self):
        f = zipf_profile(77, 136626, 2)
        eps = F(1, 4)
        assert not is_half_stable(f, Tolerances(eps / 2, eps), min_count=4)
        assert is_half_stable(f, Tolerances(eps / 2, 2 * eps), min_count=4)


class TestStreams:
    def test_sorted_example(self):
        assert stream_from_profile(StreamSpec([4, 2], "sorted")).tolist() == [1, 1, 1, 1, 2, 2]

    def test_round_robin(self):
        s = stream_from_profile(StreamSpec([3, 2, 1], "round-robin"))
        assert s.tolist() == [1, 2, 3, 1, 2, 1]

    @given(profiles, st.sampled_from(["shuffled", "sorted", "round-robin"]),
           st.integers(0, 2 ** 32))
    def test_round_trip(self, f, ordering, seed):
        s = stream_from_profile(StreamSpec(f, ordering, seed))
        assert frequency_of_stream(s).counts == f.support().counts

    def test_shuffle_is_deterministic(self):
        spec = StreamSpec(zipf_profile(100, 5000, 1.5), "shuffled", 42)
        a, b = stream_from_profile(spec), stream_from_profile(spec)
        assert a.tobytes() == b.tobytes()
        other = stream_from_profile(StreamSpec(spec.profile, "shuffled", 43))
        assert a.tobytes() != other.tobytes()

    def test_relabelled_ids(self):
        ids = random_ids(5, seed=3, universe=1000)
        assert len(set(ids)) == 5 and all(1 <= i <= 1000 for i in ids)
        s = stream_from_profile(StreamSpec([3, 2, 2, 1, 1], "sorted", ids=ids))
        assert s[:3].tolist() == [ids[0]] * 3
        with pytest.raises(ValueError):
            StreamSpec([3, 2], ids=(1,))

    def test_bad_ordering(self):
        with pytest.raises(ValueError):
            StreamSpec([1], "reversed")

    def test_scale_profile(self):
        assert scale_profile(FrequencyFunction([10, 5, 1]), F(11, 10)).counts == (11, 5, 1)


class TestPerturbFar:
    def test_example_band(self):
        # Zipf 1.5 with a dyadic band scaled by 2 is far at (0.3, 0.3)
        f = zipf_profile(64, 10 ** 4, 1.5)
        tol = Tolerances(F(3, 10), F(3, 10))
        counts = list(f.counts)
        for t in range(8, 16):
            counts[t - 1] *= 2
        g = FrequencyFunction(sorted(counts, reverse=True))
        assert not frechet_close(f, g, tol)
        assert not brute_frechet(f.counts, g.counts, tol.eps1, tol.eps2)

    def test_identity_is_close(self):
        f = zipf_profile(64, 10 ** 4, 1.5)
        assert frechet_close(f, f, Tolerances(F(3, 10), F(3, 10)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(4, 60), st.integers(200, 5000), st.sampled_from(ALPHAS),
           st.sampled_from([(F(1, 10), F(1, 10)), (F(9, 10), F(2)), (F(3, 10), F(3, 10))]))
    def test_always_far_and_monotone(self, n, N, alpha, eps):
        f = zipf_profile(n, N, alpha)
        if f(1) == 0:
            return
        tol = Tolerances(*eps)
        far = perturb_far(f, tol)
        assert far.profile.counts == tuple(sorted(far.profile.counts, reverse=True))
        assert not frechet_close(f, far.profile, tol)
        assert not brute_frechet(f.counts, far.profile.counts, tol.eps1, tol.eps2)
        assert far.transcript and far.transcript[-1].endswith("far")

    def test_budget_exhausted(self):
        with pytest.raises(ValueError, match="budget"):
            perturb_far(FrequencyFunction([0, 0]), Tolerances(1, 1))

    def test_band_out_of_range(self):
        with pytest.raises(ValueError):
            perturb_far(FrequencyFunction([3, 2]), Tolerances(1, 1), band=5)


class TestIndexFixture:
    def test_index_one(self):
        g = frequency_of_stream(index_reduction_stream("1111", 2))
        f = index_reference("1111")
        assert g.counts == (2, 1, 1, 1)
        eps = F(1, 20)
        assert not covers(g, f, Tolerances(10 * eps, 10 * eps))
        assert not frechet_close(g, f, Tolerances(10 * eps, 10 * eps))

    def test_index_zero(self):
        g = frequency_of_stream(index_reduction_stream("1110", 4))
        f = index_reference("1110")
        assert g.counts == (1, 1, 1, 1)
        eps = F(1, 3)
        assert covers(g, f, Tolerances(eps, eps))
        # the zero-padded rank 4 of f has no partner in g
        assert not frechet_close(g, f, Tolerances(eps, eps))

    def test_all_zeros(self):
        assert index_reduction_stream("000", 1).tolist() == [1]

    @pytest.mark.parametrize("x,y", [("101", 0), ("101", 4), ("1021", 1)])
    def test_rejects(self, x, y):
        with pytest.raises(ValueError):
            index_reduction_stream(x, y)

    def test_parse_bits(self):
        assert parse_bits("0110") == (0, 1, 1, 0)
        assert parse_bits([1, 0]) == (1, 0)


class TestDoubleJump:
    def test_f0(self):
        assert f0_profile(16).counts == (16, 8, 4, 4) + (2,) * 4 + (1,) * 8

    @pytest.mark.parametrize("n", [8, 24, 0])
    def test_f0_sizes(self, n):
        with pytest.raises(ValueError):
            f0_profile(n)

    def test_worked_stream(self):
        labels = double_jump_labels("01100110", 4)
        assert render_labels(labels) == (
            "b1^16 b2^8 b3^4 b4^4 a2^2 a3^2 a6^2 a7^2 a1 a4 a5 a8 a4")
        ids = double_jump_stream("01100110", 4)
        assert ids[:16].tolist() == [1] * 16 and ids[-1] == 4 + 4

    def test_double_jump(self):
        f0 = f0_profile(16)
        g1 = frequency_of_stream(double_jump_stream("01100110", 3))
        g0 = frequency_of_stream(double_jump_stream("01100110", 4))
        assert g1(5) == 3 and 3 not in g0.counts
        eps = F(1, 40)
        assert not covers(g1, f0, Tolerances(10 * eps, 10 * eps))
        assert covers(g0, f0, Tolerances(F(1, 8), F(1, 8)))

    def test_balanced_words(self):
        f0 = f0_profile(16)
        for ones in itertools.combinations(range(8), 4):
            x = "".join("1" if i in ones else "0" for i in range(8))
            for y in range(1, 9):
                g = frequency_of_stream(double_jump_stream(x, y))
                if x[y - 1] == "1":
                    assert not covers(g, f0, Tolerances(F(1, 4), F(1, 4)))
                else:
                    assert covers(g, f0, Tolerances(F(1, 8), F(1, 8)))

    def test_element_count_of_y(self):
        for x in ("11111111", "00000000", "10000000"):
            for y in (1, 8):
                s = double_jump_stream(x, y)
                assert np.count_nonzero(s == 4 + y) == (2 if x[y - 1] == "1" else 1) + 1

    @pytest.mark.parametrize("x,y", [("0110", 1), ("01100110", 9)])
    def test_rejects(self, x, y):
        with pytest.raises(ValueError):
            double_jump_stream(x, y)

    def test_render_labels(self):
        assert render_labels([]) == ""
        assert render_labels(["a1", "a1", "b2"]) == "a1^2 b2"
