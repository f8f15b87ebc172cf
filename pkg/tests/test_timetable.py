import os

import pytest
from hypothesis import given, strategies as st

from builders import single_transfer, staircase, timetable
from railsync.synthetic import GERMAN_SCALE, SyntheticParams, generate_synthetic
from railsync.timetable import (ARRIVAL, DEPARTURE, TimetableError, buffering_times,
                                derive_transfers, import_gtfs_subset, parse_gtfs_time,
                                parse_timetable, read_comment_header, route_buffering_times,
                                route_transfers, station_events, station_rank, station_sizes,
                                write_timetable)


def write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def bundle(tmp_path, stations, segments, routes=None):
    write(tmp_path / "stations.csv", stations)
    write(tmp_path / "segments.csv", segments)
    if routes is not None:
        write(tmp_path / "routes.csv", routes)
    return str(tmp_path)


STATIONS = "station_id,name,min_transfer_min\nA,Alpha,3\nB,Beta,5\n"


class TestParse:
    def test_minimal_bundle(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,660\n")
        tt = parse_timetable(d)
        assert len(tt.runs) == 1 and len(tt.stations) == 2
        assert tt.runs["T1"].segments[0].duration == 60

    def test_arrival_before_departure_names_segment(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,600\n")
        with pytest.raises(TimetableError) as exc:
            parse_timetable(d)
        msg = str(exc.value)
        assert "T1" in msg and "A->B" in msg and "line 2" in msg and "arr_min" in msg

    def test_malformed_row_reports_line_and_column(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,660\n"
                   "T2,long_distance,A,6x0,B,700\n")
        with pytest.raises(TimetableError, match=r"line 3.*dep_min"):
            parse_timetable(d)

    def test_subminute_rejected(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600.5,B,660\n")
        with pytest.raises(TimetableError, match="integer minutes"):
            parse_timetable(d)

    def test_dangling_station(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,C,660\n")
        with pytest.raises(TimetableError, match="unknown station 'C'"):
            parse_timetable(d)

    def test_dangling_train_in_routes(self, tmp_path):
        d = bundle(tmp_path, STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,660\n",
                   "route_id,passengers,leg_index,train_id,board_station,alight_station\n"
                   "R1,4,0,T9,A,B\n")
        with pytest.raises(TimetableError, match="unknown train 'T9'"):
            parse_timetable(d)

    def test_non_monotone_run(self, tmp_path):
        d = bundle(tmp_path, "station_id,name,min_transfer_min\nA,a,0\nB,b,0\nC,c,0\n",
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,660\n"
                   "T1,long_distance,B,650,C,700\n")
        with pytest.raises(TimetableError):
            parse_timetable(d)

    def test_missing_file(self, tmp_path):
        write(tmp_path / "stations.csv", STATIONS)
        with pytest.raises(TimetableError, match="segments.csv"):
            parse_timetable(str(tmp_path))

    def test_comment_lines_skipped(self, tmp_path):
        d = bundle(tmp_path, '# config: {"seed": 3}\n' + STATIONS,
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,other,A,600,B,660\n")
        assert len(parse_timetable(d).stations) == 2
        assert read_comment_header(os.path.join(d, "stations.csv")) == {"seed": 3}

    def test_route_below_min_transfer(self, tmp_path):
        d = bundle(tmp_path, "station_id,name,min_transfer_min\nA,a,0\nB,b,5\nC,c,0\n",
                   "train_id,category,from_station,dep_min,to_station,arr_min\n"
                   "T1,long_distance,A,600,B,660\n"
                   "T2,long_distance,B,662,C,700\n",
                   "route_id,passengers,leg_index,train_id,board_station,alight_station\n"
                   "R1,1,0,T1,A,B\nR1,1,1,T2,B,C\n")
        with pytest.raises(TimetableError, match="below minimal interchange"):
            parse_timetable(d)


def test_round_trip(tmp_path):
    tt = staircase()
    write_timetable(tt, str(tmp_path), comment="# config: {}")
    back = parse_timetable(str(tmp_path))
    assert back == tt


@given(st.integers(0, 10_000))
def test_round_trip_synthetic(tmp_path_factory, seed):
    tt = generate_synthetic(SyntheticParams(width=6, height=6, n_lines=4, n_routes=15,
                                            min_line_hops=2), seed)
    d = str(tmp_path_factory.mktemp("rt"))
    write_timetable(tt, d)
    assert parse_timetable(d) == tt


def test_german_scale_counts(tmp_path):
    tt = generate_synthetic(GERMAN_SCALE, 0)
    assert (len(tt.stations), tt.n_segments) == (2622, 43772)
    write_timetable(tt, str(tmp_path))
    back = parse_timetable(str(tmp_path))
    assert (len(back.stations), back.n_segments) == (2622, 43772)
    with open(tmp_path / "segments.csv") as fh:
        assert sum(1 for _ in fh) - 1 == 43772


class TestGtfs:
    def make(self, tmp_path, times, trips="trip_id,route_id\nt1,r\n"):
        write(tmp_path / "stops.txt", "stop_id,stop_name\nA,a\nB,b\nC,c\n")
        write(tmp_path / "trips.txt", trips)
        write(tmp_path / "stop_times.txt",
              "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n" + times)
        return str(tmp_path)

    def test_three_stops_two_segments(self, tmp_path):
        d = self.make(tmp_path, "t1,10:00:00,10:00:00,A,1\nt1,10:30:00,10:32:00,B,2\n"
                                "t1,11:00:00,11:00:00,C,3\n")
        tt = import_gtfs_subset(d, default_min_transfer=4)
        run = tt.runs["t1"]
        assert len(run.segments) == 2
        assert run.segments[1].dep_time == 632
        assert tt.stations["B"].min_transfer == 4

    def test_past_midnight(self, tmp_path):
        d = self.make(tmp_path, "t1,24:40:00,24:40:00,A,1\nt1,25:10:00,25:10:00,B,2\n")
        assert import_gtfs_subset(d).runs["t1"].segments[0].arr_time == 1510
        assert parse_gtfs_time("25:10:00") == 1510

    def test_duplicate_trip(self, tmp_path):
        d = self.make(tmp_path, "t1,10:00:00,10:00:00,A,1\nt1,10:30:00,10:30:00,B,2\n",
                      trips="trip_id,route_id\nt1,r\nt1,r\n")
        with pytest.raises(TimetableError, match="duplicate trip_id"):
            import_gtfs_subset(d)

    def test_seconds_rejected(self, tmp_path):
        d = self.make(tmp_path, "t1,10:00:30,10:00:30,A,1\nt1,10:30:00,10:30:00,B,2\n")
        with pytest.raises(TimetableError, match="sub-minute"):
            import_gtfs_subset(d)


class TestEvents:
    def test_single_segment(self):
        tt = timetable({"A": 0, "B": 0}, {"T": [("A", 10, "B", 20)]})
        ev = station_events(tt)
        assert [e.kind for e in ev["A"].events] == [DEPARTURE]
        assert [e.kind for e in ev["B"].events] == [ARRIVAL]

    def test_interior_stations_get_two_events(self):
        tt = timetable({"A": 0, "B": 0, "C": 0, "D": 0},
                       {"T": [("A", 10, "B", 20), ("B", 22, "C", 30), ("C", 31, "D", 40)]})
        assert station_sizes(tt) == {"A": 1, "B": 2, "C": 2, "D": 1}

    @given(st.integers(0, 5000))
    def test_sizes_sum_to_twice_segments(self, seed):
        tt = generate_synthetic(SyntheticParams(width=8, height=8, n_lines=6, min_line_hops=2),
                                seed)
        assert sum(station_sizes(tt).values()) == 2 * tt.n_segments


class TestRank:
    def test_examples(self):
        assert station_rank({"A": 10, "B": 300, "C": 40}) == ["B", "C", "A"]
        assert station_rank({"A": 10, "B": 10}) == ["A", "B"]
        assert station_rank({"Q": 3}) == ["Q"]

    @given(st.dictionaries(st.text(min_size=1, max_size=4), st.integers(0, 50), min_size=1))
    def test_permutation_and_order(self, sizes):
        r = station_rank(sizes)
        assert sorted(r) == sorted(sizes)
        assert r == station_rank(dict(reversed(list(sizes.items()))))
        assert all(sizes[a] >= sizes[b] for a, b in zip(r, r[1:]))


class TestTransfers:
    def pair(self, arr, dep, mt, window=120):
        tt = timetable({"O": 0, "X": mt, "Z": 0},
                       {"F": [("O", arr - 30, "X", arr)], "G": [("X", dep, "Z", dep + 30)]})
        return derive_transfers(tt, window)

    def test_included(self):
        (t,) = self.pair(600, 607, 5)
        assert t.buffer == 7 and t.station == "X" and t.slack == 2

    def test_below_min_transfer(self):
        assert self.pair(600, 603, 5) == []

    def test_beyond_window(self):
        assert self.pair(600, 800, 5) == []

    def test_mean_and_absent(self):
        tt = timetable({"O": 0, "X": 0, "Z": 0},
                       {"F": [("O", 560, "X", 600)], "G": [("X", 607, "Z", 640)],
                        "H": [("X", 609, "Z", 650)]})
        b = buffering_times(derive_transfers(tt))
        assert b == {"X": 8.0}
        assert "O" not in b

    @given(st.integers(0, 5000))
    def test_bounds(self, seed):
        tt = generate_synthetic(SyntheticParams(width=8, height=8, n_lines=6, min_line_hops=2),
                                seed)
        for t in derive_transfers(tt, 90):
            assert tt.stations[t.station].min_transfer <= t.buffer <= 90

    def test_route_transfers(self):
        tt = single_transfer(buffer=6, passengers=3)
        (t,) = route_transfers(tt)
        assert t.buffer == 6
        assert route_buffering_times(tt) == {"X": 6.0}
