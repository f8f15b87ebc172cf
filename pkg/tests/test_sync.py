import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from railsync.sync import (DEFAULT_NULL_RUNS, DEFAULT_TAU, category_means, null_baseline,
                           null_sigmas, order_parameter, profile_of, rank_window_average,
                           reduced_sync, sync_index, to_phases, SyncRecord)
from railsync.synthetic import SyntheticParams, generate_synthetic

times_st = st.lists(st.integers(0, 1439), min_size=1, max_size=60)


def oracle_sigma(times, tau=120):
    # direct complex sum, independent of the vectorized implementation
    z = sum(cmath.exp(2j * math.pi * (t % tau) / tau) for t in times) / len(times)
    return abs(z)


class TestPhases:
    def test_examples(self):
        assert to_phases([130]).phases[0] == pytest.approx(math.pi / 6)
        assert to_phases([0, 240]).phases.tolist() == [0.0, 0.0]
        assert DEFAULT_TAU == 120

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            to_phases([])

    @given(st.lists(st.floats(0, 1e5, allow_nan=False), min_size=1, max_size=30))
    def test_range(self, times):
        ph = to_phases(times).phases
        assert np.all((ph >= 0) & (ph < 2 * math.pi))


class TestIndex:
    def test_examples(self):
        assert order_parameter(np.array([1.3] * 7)) == pytest.approx(1.0)
        assert order_parameter(np.array([0, math.pi])) == pytest.approx(0.0, abs=1e-12)
        assert order_parameter(np.array([0, math.pi / 2])) == pytest.approx(0.70711, abs=1e-5)

    @given(times_st)
    def test_matches_oracle(self, times):
        assert sync_index(to_phases(times)) == pytest.approx(oracle_sigma(times), abs=1e-12)

    @given(times_st, st.integers(-5000, 5000))
    def test_shift_invariance(self, times, shift):
        a = sync_index(to_phases(times))
        b = sync_index(to_phases([t + shift for t in times]))
        assert abs(a - b) <= 1e-12

    @given(times_st, st.randoms(use_true_random=False))
    def test_permutation_and_duplication(self, times, rnd):
        a = sync_index(to_phases(times))
        perm = list(times)
        rnd.shuffle(perm)
        assert sync_index(to_phases(perm)) == pytest.approx(a, abs=1e-12)
        assert sync_index(to_phases(times * 3)) == pytest.approx(a, abs=1e-12)

    @given(times_st)
    def test_bounds_and_unity(self, times):
        s = sync_index(to_phases(times))
        assert 0.0 <= s <= 1.0
        distinct = len({t % 120 for t in times})
        assert (s > 1 - 1e-12) == (distinct == 1)

    @given(st.integers(1, 200), st.floats(0, 120))
    def test_roots_of_unity(self, n, offset):
        times = [offset + k * 120 / n for k in range(n)]
        expected = 1.0 if n == 1 else 0.0
        assert sync_index(to_phases(times)) == pytest.approx(expected, abs=1e-9)


class TestNull:
    def test_single_event(self):
        assert np.allclose(null_sigmas(1, n_runs=50, seed=3), 1.0)

    @pytest.mark.parametrize("t_k", [10, 50, 200])
    def test_second_moment(self, t_k):
        s = null_sigmas(t_k, n_runs=10_000, seed=11)
        assert np.mean(s ** 2) == pytest.approx(1 / t_k, rel=0.05)

    def test_default_runs(self):
        assert DEFAULT_NULL_RUNS == 100

    def test_seeded(self):
        assert null_baseline(30, seed=5) == null_baseline(30, seed=5)

    def test_periodic_station(self):
        tt_times = [17 + 120 * k for k in range(10)]
        sigma = sync_index(to_phases(tt_times))
        base = null_baseline(10, seed=0)
        assert sigma == pytest.approx(1.0)
        assert sigma - base > 0

    def test_gridded_station(self):
        times = [k * 12 for k in range(10)]
        assert sync_index(to_phases(times)) == pytest.approx(0.0, abs=1e-9)
        assert 0.0 - null_baseline(10, seed=0) < 0


class TestReduced:
    def test_independent_of_workers(self):
        tt = generate_synthetic(SyntheticParams(width=8, height=8, n_lines=8, min_line_hops=2), 2)
        assert reduced_sync(tt, seed=4, workers=1) == reduced_sync(tt, seed=4, workers=3)

    def test_ranked_and_consistent(self):
        tt = generate_synthetic(SyntheticParams(width=8, height=8, n_lines=8, min_line_hops=2), 2)
        recs = reduced_sync(tt, seed=4)
        assert [r.rank for r in recs] == list(range(1, len(recs) + 1))
        assert all(a.t_k >= b.t_k for a, b in zip(recs, recs[1:]))
        for r in recs:
            assert r.sigma_star == pytest.approx(r.sigma - r.sigma_null)


class TestProfile:
    def test_examples(self):
        assert rank_window_average([3.0] * 10, 4).values.tolist() == [3.0] * 7
        assert rank_window_average([1, 5, 2], 1).values.tolist() == [1, 5, 2]
        ramp = rank_window_average(list(range(1, 11)), 3)
        assert ramp.values.tolist() == pytest.approx(list(range(2, 10)))
        assert ramp.ranks.tolist() == list(range(2, 10))

    def test_window_too_large(self):
        with pytest.raises(ValueError):
            rank_window_average([1, 2], 3)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=40), st.data())
    def test_against_naive(self, values, data):
        w = data.draw(st.integers(1, len(values)))
        prof = rank_window_average(values, w)
        naive = [sum(values[i:i + w]) / w for i in range(len(values) - w + 1)]
        assert prof.values.tolist() == pytest.approx(naive, abs=1e-9)


def rec(t_k, s, rank=1):
    return SyncRecord(f"s{rank}", t_k, s, 0.0, s, rank)


class TestCategories:
    def test_only_medium(self):
        assert set(category_means([rec(100, 0.3, k) for k in range(1, 5)])) == {"medium"}

    def test_boundaries_go_to_smaller_class(self):
        out = category_means([rec(80, 1.0, 1), rec(170, 2.0, 2), rec(171, 3.0, 3)])
        assert out == {"small": 1.0, "medium": 2.0, "large": 3.0}

    def test_empty(self):
        assert category_means([]) == {}

    def test_profile_of_uses_rank_order(self):
        recs = [rec(10, float(k), k) for k in (3, 1, 2)]
        assert profile_of(recs, 1).values.tolist() == [1.0, 2.0, 3.0]
