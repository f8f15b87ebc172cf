"""Command-line entry point: ``railsync <subcommand> [options]``.

Exit status is 0 on success, 1 on invalid input or a missing prerequisite
file and 2 when the avalanche guard trips.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import avalanche as ava
from .config import AvalancheConfig, RunConfig, load_config, merge
from .depgraph import DelayError, WaitingPolicy, build_depgraph, secondary_delay_sweep
from .parallel import default_workers
from .report import (QUADRANT_LABELS, assemble_metrics, correlate, joint_profile,
                     quadrant_classify, sync_by_quadrant)
from .sync import SyncRecord, category_means, profile_of, reduced_sync, size_class
from .synthetic import GERMAN_SCALE, build_synthetic
from .timetable import (Category, TimetableError, buffering_times, derive_transfers,
                        import_gtfs_subset, parse_timetable, read_csv_rows,
                        route_buffering_times, write_timetable)

PRESETS = {"german": GERMAN_SCALE}
BUNDLE_DIR = "timetable"


class UsageError(Exception):
    """Invalid input or missing prerequisite (exit 1)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved for guard trips here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output helpers

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".10g")
    return str(x)


class Writer:
    def __init__(self, out_dir: str, cfg: RunConfig):
        self.out_dir = out_dir
        self.comment = "# config: " + cfg.header()
        self.written: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.comment + "\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        self.written.append(path)
        return path


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise UsageError(f"missing prerequisite file: {path}")
    return path


def _bundle_path(cfg: RunConfig, out_dir: str) -> str:
    return cfg.input if cfg.input else os.path.join(out_dir, BUNDLE_DIR)


def _load_timetable(cfg: RunConfig, out_dir: str):
    path = _bundle_path(cfg, out_dir)
    _require(os.path.join(path, "stations.csv"))
    _require(os.path.join(path, "segments.csv"))
    return parse_timetable(path)


def _policy(cfg: RunConfig) -> WaitingPolicy:
    table = {(Category(a), Category(b)): w for a, b, w in cfg.max_wait_table}
    return WaitingPolicy(table, cfg.max_wait, cfg.waiting_mode)


# --------------------------------------------------------------------------
# subcommands

def cmd_ingest(cfg: RunConfig, out: Writer, workers: int) -> dict:
    if cfg.gtfs:
        tt = import_gtfs_subset(cfg.gtfs, cfg.default_min_transfer)
    elif cfg.input:
        tt = parse_timetable(cfg.input)
    else:
        raise UsageError("ingest needs --input BUNDLE or --gtfs DIR")
    dest = os.path.join(out.out_dir, BUNDLE_DIR)
    write_timetable(tt, dest, out.comment)
    out.written.append(dest)
    return {"stations": len(tt.stations), "segments": tt.n_segments,
            "trains": len(tt.runs), "routes": len(tt.routes)}


def cmd_generate(cfg: RunConfig, out: Writer, workers: int) -> dict:
    params = PRESETS[cfg.preset] if cfg.preset else cfg.synthetic
    res = build_synthetic(params, cfg.seed)
    tt = res.timetable
    dest = os.path.join(out.out_dir, BUNDLE_DIR)
    write_timetable(tt, dest, out.comment)
    out.written.append(dest)
    band = sorted(res.band) if res.band else []
    return {"stations": len(tt.stations), "segments": tt.n_segments, "trains": len(tt.runs),
            "routes": len(tt.routes), "planted_stations": len(band)}


def cmd_sync(cfg: RunConfig, out: Writer, workers: int) -> dict:
    tt = _load_timetable(cfg, out.out_dir)
    recs = reduced_sync(tt, cfg.tau, cfg.null_runs, cfg.seed, workers)
    out.csv("sync.csv", ["station_id", "rank", "t_k", "sigma", "sigma_null", "sigma_star"],
            ([r.station, r.rank, r.t_k, r.sigma, r.sigma_null, r.sigma_star] for r in recs))
    summary: dict = {"stations": len(recs)}
    if len(recs) >= cfg.sync_window:
        prof = profile_of(recs, cfg.sync_window)
        out.csv("sync_profile.csv", ["center_rank", "sigma_star_avg"],
                zip(prof.ranks.tolist(), prof.values.tolist()))
        peak = int(np.argmax(prof.values))
        summary["profile_peak_rank"] = int(prof.ranks[peak])
    else:
        summary["profile"] = f"skipped: fewer stations than window {cfg.sync_window}"
    bounds = tuple(cfg.boundaries)
    means = category_means(recs, bounds)
    counts: dict[str, int] = {}
    for r in recs:
        counts[size_class(r.t_k, bounds)] = counts.get(size_class(r.t_k, bounds), 0) + 1
    out.csv("sync_categories.csv", ["class", "stations", "sigma_star_mean"],
            ([c, counts[c], means[c]] for c in ("small", "medium", "large") if c in means))
    summary["category_means"] = means
    return summary


def cmd_sweep(cfg: RunConfig, out: Writer, workers: int) -> dict:
    tt = _load_timetable(cfg, out.out_dir)
    if not tt.routes:
        raise UsageError("sweep needs passenger routes (routes.csv) in the input bundle")
    g = build_depgraph(tt, policy=_policy(cfg))
    rows = secondary_delay_sweep(tt, p_values=cfg.p_values, graph=g, max_delay=cfg.max_delay,
                                 max_legs=cfg.max_legs, workers=workers)
    out.csv("sweep.csv", ["station_id", "rank", "p", "affected_passengers", "s_mean",
                          "s_total", "stranded", "n_scenarios"],
            ([r.station, r.rank, r.p, r.affected_passengers, r.s_mean, r.s_total, r.stranded,
              r.n_scenarios] for r in rows))
    opp = derive_transfers(tt)
    b = buffering_times(opp)
    b_route = route_buffering_times(tt)
    n_opp: dict[str, int] = {}
    for t in opp:
        n_opp[t.station] = n_opp.get(t.station, 0) + 1
    out.csv("buffering.csv", ["station_id", "b", "b_route", "opportunities"],
            ([s, b[s], b_route.get(s), n_opp[s]] for s in sorted(b)))
    return {"stations": len({r.station for r in rows}), "rows": len(rows),
            "transfer_stations": len(b)}


def _run_driver(g, params: ava.AvaParams, a: AvalancheConfig, seeds, workers):
    from .parallel import ordered_map
    return ordered_map(_driver_job, [(g, params, a.steps, s) for s in seeds], workers)


def _driver_job(job):
    g, params, steps, seed = job
    return ava.run(g, params, steps, seed)


def _window_means(run: ava.AvaRun, steps: int, n_windows: int):
    edges = np.linspace(0, steps, n_windows + 1)
    idx = np.searchsorted(edges, np.asarray(run.times, dtype=float), side="right") - 1
    lengths = np.asarray(run.lengths, dtype=float)
    for w in range(n_windows):
        sel = lengths[idx == w]
        yield w, int(sel.size), (float(sel.mean()) if sel.size else None)


def cmd_avalanche(cfg: RunConfig, out: Writer, workers: int) -> dict:
    a = cfg.avalanche
    g = ava.random_graph(a.n, a.edges, a.graph_seed if a.graph_seed is not None else cfg.seed)
    base = ava.AvaParams(p_trans=a.p_trans, m=a.m, threshold=a.threshold, period=a.period,
                         max_topplings=a.max_topplings, leak=a.leak)
    drivers = [ava.PERIODIC, ava.STOCHASTIC] if a.driver == "both" else [a.driver]
    if a.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    seeds = ava.seed_list(cfg.seed, a.seeds)
    runs = {d: _run_driver(g, replace(base, driver=d), a, seeds, workers) for d in drivers}

    results, hist_rows, win_rows, summary_rows = [], [], [], []
    summary: dict = {"p_trans": a.p_trans, "nodes": g.n, "edges": g.m}
    for d in drivers:
        for s, r in zip(seeds, runs[d]):
            st = ava.avalanche_stats([r], a.tail_min_count)
            results.append([d, s, len(r.lengths), st and st.mean_length,
                            st and st.tail_slope, st and st.tail_goodness])
            for w, count, mean in _window_means(r, a.steps, a.time_windows):
                win_rows.append([d, s, w, count, mean])
        st = ava.avalanche_stats(runs[d], a.tail_min_count)
        if st is not None:
            hist_rows.extend([d, k, v] for k, v in st.histogram.items())
        summary_rows.append([d, a.p_trans, st.n_avalanches if st else 0,
                             st and st.mean_length, st and st.tail_slope,
                             st and st.tail_goodness])
        summary[d] = {"avalanches": st.n_avalanches if st else 0,
                      "mean_length": st and st.mean_length,
                      "tail_slope": st and st.tail_slope, "tail_r2": st and st.tail_goodness}
    out.csv("avalanche_results.csv",
            ["driver", "seed", "avalanches", "mean_length", "tail_slope", "tail_r2"], results)
    out.csv("avalanche_histogram.csv", ["driver", "length", "count"], hist_rows)
    out.csv("avalanche_windows.csv", ["driver", "seed", "window", "avalanches", "mean_length"],
            win_rows)
    out.csv("avalanche_summary.csv",
            ["driver", "p_trans", "avalanches", "mean_length", "tail_slope", "tail_r2"],
            summary_rows)
    if len(drivers) == 2 and len(seeds) >= 2:
        cmp = ava.DriverComparison(seeds, [r.mean_length for r in runs[ava.PERIODIC]],
                                   [r.mean_length for r in runs[ava.STOCHASTIC]],
                                   runs[ava.PERIODIC], runs[ava.STOCHASTIC])
        pv = cmp.paired_test()
        out.csv("avalanche_compare.csv",
                ["periodic_mean", "stochastic_mean", "difference", "p_value_greater"],
                [[cmp.periodic_mean, cmp.stochastic_mean,
                  None if cmp.periodic_mean is None else cmp.periodic_mean - cmp.stochastic_mean,
                  pv]])
        summary["paired_p_value"] = pv
    return summary


def _read_sync(path: str) -> list[SyncRecord]:
    cols = ["station_id", "rank", "t_k", "sigma", "sigma_null", "sigma_star"]
    return [SyncRecord(r["station_id"], int(r["t_k"]), float(r["sigma"]),
                       float(r["sigma_null"]), float(r["sigma_star"]), int(r["rank"]))
            for _, r in read_csv_rows(path, cols)]


class _SweepRow:
    __slots__ = ("station", "p", "s_mean", "s_total")

    def __init__(self, station, p, s_mean, s_total):
        self.station, self.p, self.s_mean, self.s_total = station, p, s_mean, s_total


def cmd_report(cfg: RunConfig, out: Writer, workers: int) -> dict:
    d = out.out_dir
    sync_path = _require(os.path.join(d, "sync.csv"))
    sweep_path = _require(os.path.join(d, "sweep.csv"))
    buf_path = _require(os.path.join(d, "buffering.csv"))
    recs = _read_sync(sync_path)
    sweep = [_SweepRow(r["station_id"], int(r["p"]), float(r["s_mean"]), float(r["s_total"]))
             for _, r in read_csv_rows(sweep_path, ["station_id", "p", "s_mean", "s_total"])]
    b = {r["station_id"]: float(r["b"]) for _, r in read_csv_rows(buf_path, ["station_id", "b"])}
    metrics = assemble_metrics(recs, b, sweep, cfg.s_measure)
    if len(metrics) < 2:
        raise UsageError("report needs at least two stations with sync, sweep and buffering data")
    ps = sorted({r.p for r in sweep})
    p_q = cfg.quadrant_p if cfg.quadrant_p is not None else ps[0]
    if p_q not in ps:
        raise UsageError(f"p={p_q} not present in {sweep_path}")
    cls = quadrant_classify(metrics, p_q, mode=cfg.quadrant_mode, window=cfg.joint_window)
    out.comment += "\n# thresholds: " + json.dumps(
        {"b": cls.thresholds[0], "s": cls.thresholds[1], "p": p_q, "mode": cls.mode})
    out.csv("metrics.csv", ["station_id", "rank", "t_k", "b"] + [f"s_p{p}" for p in ps]
            + ["sigma_star", "quadrant"],
            ([m.station, m.rank, m.t_k, m.b] + [m.s.get(p) for p in ps]
             + [m.sigma_star, cls.quadrants[m.station].label] for m in metrics))
    means = sync_by_quadrant(metrics, cls)
    out.csv("quadrants.csv", ["label", "count", "sigma_star_mean"],
            ([lab, cls.counts[lab], means.get(lab)] for lab in QUADRANT_LABELS))
    summary: dict = {"stations": len(metrics), "quadrant_counts": cls.counts,
                     "sigma_star_by_quadrant": means}
    window = min(cfg.joint_window, len(metrics))
    prof = joint_profile(metrics, p_q, window)
    out.csv("profile.csv", ["center_rank", "b_avg", "s_avg", "sigma_star_avg"],
            zip(prof.ranks.tolist(), prof.b.tolist(), prof.s.tolist(), prof.sigma_star.tolist()))
    if len(ps) >= 2:
        p1, p2 = ps[0], ps[-1]
        cor = correlate(metrics, p1, p2)
        out.csv("correlation.csv", ["station_id", f"s_p{p1}", f"s_p{p2}", "y_lin"], cor.pairs)
        summary["pearson_r"] = cor.r
    return summary


COMMANDS: dict[str, Callable] = {
    "ingest": cmd_ingest, "generate": cmd_generate, "sync": cmd_sync,
    "sweep": cmd_sweep, "avalanche": cmd_avalanche, "report": cmd_report,
}


# --------------------------------------------------------------------------
# argument handling

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=default,
                   help="worker processes (default: all cores)")
    p.add_argument("--out-dir", default=default, help="output directory (default .)")
    p.add_argument("--config", default=default, help="JSON config file")
    p.add_argument("--format", choices=("csv", "json"), default=default,
                   help="stdout summary: list of written files (csv) or JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="railsync", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    sp = add("ingest", "validate and normalize a timetable bundle or GTFS subset")
    sp.add_argument("--input", help="native bundle directory")
    sp.add_argument("--gtfs", help="GTFS directory (stops, trips, stop_times)")
    sp.add_argument("--default-min-transfer", type=int)

    sp = add("generate", "write a synthetic timetable bundle")
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--lines", type=int, dest="n_lines")
    sp.add_argument("--routes", type=int, dest="n_routes")
    sp.add_argument("--sync-band", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--segment-budget", type=int)

    sp = add("sync", "reduced synchronization index per station")
    sp.add_argument("--input", help="bundle directory (default OUT_DIR/timetable)")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--null-runs", type=int)
    sp.add_argument("--window", type=int, dest="sync_window")
    sp.add_argument("--boundaries", type=int, nargs=2, metavar=("LO", "HI"))

    sp = add("sweep", "secondary delay for every primary delay at every station")
    sp.add_argument("--input", help="bundle directory (default OUT_DIR/timetable)")
    sp.add_argument("--p", type=int, nargs="+", dest="p_values")
    sp.add_argument("--max-wait", type=int)
    sp.add_argument("--waiting-mode", choices=("capped", "all_or_nothing"))
    sp.add_argument("--max-delay", type=int)
    sp.add_argument("--max-legs", type=int)

    sp = add("avalanche", "threshold cascade model on a random graph")
    sp.add_argument("--driver", choices=("periodic", "stochastic", "both"))
    sp.add_argument("--period", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--m", type=float)
    sp.add_argument("--p-trans", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--edges", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--graph-seed", type=int)
    sp.add_argument("--max-topplings", type=int)
    sp.add_argument("--leak", type=float)

    sp = add("report", "join sync, sweep and buffering outputs")
    sp.add_argument("--window", type=int, dest="joint_window")
    sp.add_argument("--quadrant-mode", choices=("raw", "smoothed"))
    sp.add_argument("--quadrant-p", type=int)
    return parser


_AVA_KEYS = {"driver", "period", "threshold", "m", "p_trans", "n", "edges", "steps", "seeds",
             "graph_seed", "max_topplings", "leak"}
_SYN_KEYS = {"width", "height", "n_lines", "n_routes", "sync_band", "segment_budget"}
_GLOBAL = {"command", "seed", "threads", "out_dir", "config", "format"}


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if ns.config:
        cfg = merge(cfg, load_config(ns.config))
    flags = {k: v for k, v in vars(ns).items() if v is not None and k not in _GLOBAL}
    ava_over = {k: flags.pop(k) for k in list(flags) if k in _AVA_KEYS}
    syn_over = {k: flags.pop(k) for k in list(flags) if k in _SYN_KEYS}
    if ns.seed is not None:
        flags["seed"] = ns.seed
    if ava_over:
        flags["avalanche"] = ava_over
    if syn_over:
        flags["synthetic"] = syn_over
    return merge(cfg, flags)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = resolve_config(ns)
        workers = ns.threads if ns.threads else default_workers()
        out = Writer(ns.out_dir or ".", cfg)
        summary = COMMANDS[ns.command](cfg, out, workers)
    except ava.SupercriticalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, TimetableError, DelayError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if ns.format == "json":
        print(json.dumps({"command": ns.command, "files": out.written, **summary},
                         indent=1, sort_keys=True, default=str))
    else:
        for path in out.written:
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
