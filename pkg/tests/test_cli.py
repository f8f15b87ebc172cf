import json
import os
import subprocess
import sys

import pytest

from railsync.cli import main
from railsync.timetable import read_comment_header, read_csv_rows

SMALL = ["--width", "8", "--height", "8", "--lines", "6", "--routes", "80"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("generate", "--out-dir", d, "--seed", 3, *SMALL) == 0
    assert run("sync", "--out-dir", d, "--seed", 3, "--threads", 1) == 0
    assert run("sweep", "--out-dir", d, "--seed", 3, "--threads", 1, "--p", 5, 15, 30) == 0
    assert run("report", "--out-dir", d, "--window", 10) == 0
    return d


def test_artifacts_are_self_describing(pipeline):
    files = ["sync.csv", "sync_categories.csv", "sweep.csv", "buffering.csv", "metrics.csv",
             "profile.csv", "quadrants.csv", "correlation.csv", "timetable/segments.csv"]
    for name in files:
        path = os.path.join(pipeline, name)
        cfg = read_comment_header(path)
        assert cfg["seed"] in (0, 3) and cfg["tau"] == 120
        rows = list(read_csv_rows(path, []))
        assert rows


def test_headers(pipeline):
    def header(name):
        rows = read_csv_rows(os.path.join(pipeline, name), [])
        return list(next(rows)[1])

    assert header("sync.csv") == ["station_id", "rank", "t_k", "sigma", "sigma_null",
                                  "sigma_star"]
    assert header("metrics.csv") == ["station_id", "rank", "t_k", "b", "s_p5", "s_p15",
                                     "s_p30", "sigma_star", "quadrant"]
    assert header("profile.csv") == ["center_rank", "b_avg", "s_avg", "sigma_star_avg"]
    assert header("quadrants.csv") == ["label", "count", "sigma_star_mean"]
    assert header("sweep.csv")[:7] == ["station_id", "rank", "p", "affected_passengers",
                                       "s_mean", "s_total", "stranded"]


def test_quadrant_thresholds_echoed(pipeline):
    with open(os.path.join(pipeline, "metrics.csv")) as fh:
        lines = [next(fh) for _ in range(2)]
    assert lines[1].startswith("# thresholds:")


def test_report_without_sweep(tmp_path, capsys):
    assert run("generate", "--out-dir", tmp_path, *SMALL) == 0
    assert run("sync", "--out-dir", tmp_path, "--threads", 1) == 0
    assert run("report", "--out-dir", tmp_path) == 1
    assert "sweep.csv" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert run("sync", "--bogus") == 1


def test_invalid_bundle(tmp_path, capsys):
    (tmp_path / "stations.csv").write_text("station_id,name,min_transfer_min\nA,a,1\n")
    (tmp_path / "segments.csv").write_text(
        "train_id,category,from_station,dep_min,to_station,arr_min\nT,other,A,5,Q,9\n")
    assert run("ingest", "--input", tmp_path, "--out-dir", tmp_path / "out") == 1
    assert "line 2" in capsys.readouterr().err


def test_ingest_gtfs(tmp_path):
    g = tmp_path / "gtfs"
    g.mkdir()
    (g / "stops.txt").write_text("stop_id,stop_name\nA,a\nB,b\n")
    (g / "trips.txt").write_text("trip_id,route_id\nt1,r\n")
    (g / "stop_times.txt").write_text("trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
                                      "t1,08:00:00,08:00:00,A,1\nt1,09:00:00,09:00:00,B,2\n")
    assert run("ingest", "--gtfs", g, "--out-dir", tmp_path / "o") == 0
    assert (tmp_path / "o" / "timetable" / "segments.csv").exists()


def test_avalanche_reference(tmp_path, capsys):
    code = run("avalanche", "--driver", "periodic", "--period", 17, "--threshold", 4, "--m", 0.9,
               "--n", 70, "--edges", 240, "--steps", 2000, "--seeds", 3, "--out-dir", tmp_path,
               "--format", "json", "--threads", 1)
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p_trans"] > 0 and out["edges"] == 240
    rows = [r for _, r in read_csv_rows(str(tmp_path / "avalanche_results.csv"), [])]
    assert len(rows) == 3 and {r["driver"] for r in rows} == {"periodic"}


def test_guard_trip_exit_code(tmp_path):
    assert run("avalanche", "--p-trans", 0.9, "--m", 1.5, "--steps", 500, "--seeds", 1,
               "--max-topplings", 5000, "--out-dir", tmp_path, "--threads", 1) == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 11, "null_runs": 7,
                               "synthetic": {"width": 7, "height": 7, "n_lines": 4,
                                             "min_line_hops": 2}}))
    assert run("generate", "--config", cfg, "--out-dir", tmp_path) == 0
    assert run("sync", "--config", cfg, "--out-dir", tmp_path, "--seed", 12, "--threads", 1) == 0
    header = read_comment_header(str(tmp_path / "sync.csv"))
    assert header["seed"] == 12 and header["null_runs"] == 7 and header["tau"] == 120


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run("sync", "--config", cfg, "--out-dir", tmp_path) == 1


def test_defaults_match_reference_values():
    from railsync.config import RunConfig
    c = RunConfig()
    assert (c.tau, c.null_runs, c.sync_window, c.joint_window) == (120, 100, 40, 26)
    assert c.boundaries == (80, 170) and c.p_values == (5, 30)
    a = c.avalanche
    assert (a.period, a.threshold, a.m, a.n, a.edges) == (17, 4.0, 0.9, 70, 240)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "railsync", "generate", "--out-dir",
                          str(tmp_path), *SMALL], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
