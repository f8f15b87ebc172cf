import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from railsync.avalanche import (PERIODIC, STOCHASTIC, AvaGraph, AvaParams, SupercriticalError,
                                avalanche_stats, compare_drivers, insertion_times, random_graph,
                                run)


@pytest.fixture(scope="module")
def ref_graph():
    return random_graph(70, 240, 0)


class TestGraph:
    def test_complete(self):
        g = random_graph(4, 6, 1)
        assert nx.is_isomorphic(g.to_networkx(), nx.complete_graph(4))

    def test_reference_size(self, ref_graph):
        assert ref_graph.m == 240 and nx.is_connected(ref_graph.to_networkx())

    def test_deterministic(self):
        assert random_graph(30, 60, 9).edges == random_graph(30, 60, 9).edges

    @pytest.mark.parametrize("n,m", [(5, 3), (4, 7), (0, 0)])
    def test_infeasible(self, n, m):
        with pytest.raises(ValueError):
            random_graph(n, m, 0)


class TestRun:
    def test_no_transmission(self, ref_graph):
        r = run(ref_graph, AvaParams(p_trans=0.0, period=1), 50, 3)
        assert r.lengths == [1] * 10
        assert r.times == list(range(4, 50, 5))

    def test_no_amplification(self, ref_graph):
        r = run(ref_graph, AvaParams(m=0.0, p_trans=0.9, period=1), 200, 3)
        assert r.lengths and set(r.lengths) == {1}

    @given(st.floats(0, 0.1), st.floats(0, 1.2), st.integers(0, 1000))
    def test_relaxed_state_below_threshold(self, p, m, seed):
        g = random_graph(20, 40, seed)
        r = run(g, AvaParams(p_trans=p, m=m, period=2), 300, seed, keep_state=True)
        assert np.all(r.final_state <= 4.0)

    def test_guard_trips_on_cycle(self):
        g = AvaGraph.from_networkx(nx.cycle_graph(6))
        with pytest.raises(SupercriticalError):
            run(g, AvaParams(p_trans=1.0, m=1.0, period=1, max_topplings=10_000), 100, 0)

    def test_stochastic_rate(self):
        t = insertion_times(AvaParams(driver=STOCHASTIC, period=17), 100_000,
                            np.random.default_rng(5))
        assert t.size / 100_000 == pytest.approx(1 / 17, rel=0.03)

    def test_periodic_times(self):
        t = insertion_times(AvaParams(period=17), 100, np.random.default_rng(0))
        assert t.tolist() == [0, 17, 34, 51, 68, 85]

    def test_pure_function(self, ref_graph):
        p = AvaParams(driver=STOCHASTIC)
        a, b = run(ref_graph, p, 3000, 12), run(ref_graph, p, 3000, 12)
        assert (a.lengths, a.durations, a.times) == (b.lengths, b.durations, b.times)

    def test_durations_bounded_by_lengths(self, ref_graph):
        r = run(ref_graph, AvaParams(p_trans=0.1), 5000, 1)
        assert all(1 <= d <= n for d, n in zip(r.durations, r.lengths))

    @pytest.mark.parametrize("bad", [dict(p_trans=1.5), dict(driver="x"), dict(period=0),
                                     dict(leak=1.0)])
    def test_bad_params(self, bad):
        with pytest.raises(ValueError):
            AvaParams(**bad)


class TestStats:
    def test_all_ones(self):
        s = avalanche_stats([1, 1, 1])
        assert s.mean_length == 1 and s.histogram == {1: 3} and s.tail_slope is None

    def test_mean(self):
        assert avalanche_stats([1, 1, 2, 4]).mean_length == 2

    def test_empty(self):
        assert avalanche_stats([]) is None

    def test_exact_exponential_tail(self):
        lengths = [n for n in range(1, 12) for _ in range(int(4096 * 2.0 ** -n))]
        s = avalanche_stats(lengths, min_count=1)
        assert s.tail_slope == pytest.approx(-np.log(2), abs=1e-9)
        assert s.tail_goodness == pytest.approx(1.0)

    def test_tail_stops_at_sparse_bins(self):
        lengths = [1] * 100 + [2] * 50 + [3] * 25 + [4] * 12 + [5] * 3 + [9] * 6
        s = avalanche_stats(lengths, min_count=5)
        assert s.tail_range == (2, 4)


class TestCompare:
    def test_no_amplification(self, ref_graph):
        c = compare_drivers(ref_graph, AvaParams(m=0.0), 4, 500, master_seed=1)
        assert c.periodic_mean == 1 and c.stochastic_mean == 1
        assert c.periodic_mean - c.stochastic_mean == 0

    def test_deterministic(self, ref_graph):
        a = compare_drivers(ref_graph, AvaParams(), 3, 1000, master_seed=2)
        b = compare_drivers(ref_graph, AvaParams(), 3, 1000, master_seed=2, workers=2)
        assert a.periodic == b.periodic and a.stochastic == b.stochastic and a.seeds == b.seeds

    def test_needs_two_seeds(self, ref_graph):
        with pytest.raises(ValueError):
            compare_drivers(ref_graph, AvaParams(), 1, 100)

    def test_paired_p_value(self, ref_graph):
        c = compare_drivers(ref_graph, AvaParams(), 10, 2000, master_seed=3)
        p = c.paired_test()
        assert 0.0 <= p <= 1.0
