"""Synthetic timetables: periodic lines on a planar grid mesh.

Each line follows a shortest lattice path between two random grid nodes and is
served from both endpoints once per line period. An optional planted band
retimes every line through a chosen rank interval of stations so that all
events there fall within a few minutes of a common clock phase.
"""
from __future__ import annotations

import bisect
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .timetable import (Category, Leg, PassengerRoute, Segment, Station, Timetable,
                        TrainRun, planned_arrival, station_rank, validate)


@dataclass(frozen=True)
class SyntheticParams:
    width: int = 20
    height: int = 20
    n_lines: int = 60
    periods: tuple[int, ...] = (120,)
    period_weights: Optional[tuple[float, ...]] = None
    hop_minutes: tuple[int, int] = (6, 14)
    dwell: int = 2
    span_start: int = 300
    span: int = 1080
    min_transfer: tuple[int, int] = (3, 7)
    min_line_hops: int = 4
    max_line_hops: Optional[int] = None
    # rank-fraction interval [lo, hi) of served stations whose events get aligned
    sync_band: Optional[tuple[float, float]] = None
    sync_phase: int = 0
    n_routes: int = 0
    transfer_share: float = 0.5
    route_window: int = 60
    max_passengers: int = 20
    include_unserved: bool = False
    segment_budget: Optional[int] = None
    category_weights: tuple[float, float, float] = (0.3, 0.5, 0.2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticParams":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("periods", "period_weights", "hop_minutes", "min_transfer", "sync_band",
                    "category_weights"):
            if known.get(key) is not None:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass
class Line:
    index: int
    path: list[tuple[int, int]]
    period: int
    category: Category
    hops: list[int]
    offsets: tuple[int, int] = (0, 0)
    planted: bool = False


@dataclass
class SyntheticResult:
    timetable: Timetable
    lines: list[Line]
    band: list[str] = field(default_factory=list)


def station_id(x: int, y: int) -> str:
    return f"S{x:03d}_{y:03d}"


def _check(params: SyntheticParams) -> None:
    if params.n_lines <= 0:
        raise ValueError("need at least one line")
    if params.span <= 0:
        raise ValueError("service span must be positive")
    if params.width < 1 or params.height < 1 or params.width * params.height < 2:
        raise ValueError("grid needs at least two nodes")
    if not params.periods or min(params.periods) <= 0:
        raise ValueError("periods must be positive")
    if params.hop_minutes[0] < 1 or params.hop_minutes[1] < params.hop_minutes[0]:
        raise ValueError("invalid hop_minutes range")
    if params.dwell < 0:
        raise ValueError("dwell must be non-negative")
    max_dist = params.width + params.height - 2
    if params.min_line_hops > max_dist:
        raise ValueError("min_line_hops exceeds the grid diameter")
    if params.sync_band is not None:
        lo, hi = params.sync_band
        if not 0 <= lo < hi <= 1:
            raise ValueError("sync_band must satisfy 0 <= lo < hi <= 1")


def _lattice_path(a, b, rng) -> list[tuple[int, int]]:
    (x0, y0), (x1, y1) = a, b
    steps = [(np.sign(x1 - x0), 0)] * abs(x1 - x0) + [(0, np.sign(y1 - y0))] * abs(y1 - y0)
    order = rng.permutation(len(steps))
    path = [(x0, y0)]
    for k in order:
        dx, dy = steps[k]
        x, y = path[-1]
        path.append((int(x + dx), int(y + dy)))
    return path


def _pivots(hops: list[int], dwell: int) -> list[int]:
    """Relative reference time of every stop: midpoint of the stop's dwell."""
    piv = [-dwell + dwell // 2]
    arr = 0
    for n, h in enumerate(hops):
        arr = (arr + dwell if n else 0) + h
        piv.append(arr + dwell // 2)
    return piv


def _relative_times(hops: list[int], dwell: int) -> list[tuple[int, int]]:
    """(departure, arrival) relative to the train's start for every hop."""
    out = []
    dep = 0
    for h in hops:
        out.append((dep, dep + h))
        dep = dep + h + dwell
    return out


def _trains_per_direction(params: SyntheticParams, line: Line, direction: int) -> list[int]:
    first = params.span_start + line.offsets[direction]
    end = params.span_start + params.span
    return list(range(first, end, line.period))


def _layout(params: SyntheticParams, rng) -> list[Line]:
    weights = None
    if params.period_weights is not None:
        w = np.asarray(params.period_weights, dtype=float)
        weights = w / w.sum()
    cat_w = np.asarray(params.category_weights, dtype=float)
    cat_w = cat_w / cat_w.sum()
    cats = list(Category)
    lines = []
    for idx in range(params.n_lines):
        while True:
            a = (int(rng.integers(params.width)), int(rng.integers(params.height)))
            b = (int(rng.integers(params.width)), int(rng.integers(params.height)))
            dist = abs(a[0] - b[0]) + abs(a[1] - b[1])
            if dist >= max(params.min_line_hops, 1) and (
                    params.max_line_hops is None or dist <= params.max_line_hops):
                break
        path = _lattice_path(a, b, rng)
        period = int(params.periods[rng.choice(len(params.periods), p=weights)])
        category = cats[int(rng.choice(3, p=cat_w))]
        lo, hi = params.hop_minutes
        hops = [int(h) for h in rng.integers(lo, hi + 1, size=len(path) - 1)]
        offsets = (int(rng.integers(period)), int(rng.integers(period)))
        lines.append(Line(idx, path, period, category, hops, offsets))
    return lines


def _expected_sizes(params: SyntheticParams, lines: list[Line]) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for line in lines:
        n = [len(_trains_per_direction(params, line, d)) for d in (0, 1)]
        for k, node in enumerate(line.path):
            sid = station_id(*node)
            if k == 0 or k == len(line.path) - 1:
                ev = n[0] + n[1]
            else:
                ev = 2 * (n[0] + n[1])
            sizes[sid] = sizes.get(sid, 0) + ev
    return sizes


def _plant(params: SyntheticParams, lines: list[Line], band: set[str]) -> None:
    for line in lines:
        idx = [k for k, node in enumerate(line.path) if station_id(*node) in band]
        if not idx:
            continue
        line.planted = True
        for prev, cur in zip(idx, idx[1:]):
            piv = _pivots(line.hops, params.dwell)
            pad = (-(piv[cur] - piv[prev])) % line.period
            line.hops[cur - 1] += pad
        piv = _pivots(line.hops, params.dwell)
        rpiv = _pivots(line.hops[::-1], params.dwell)[::-1]
        h = params.sync_phase
        fwd = (h - params.span_start - piv[idx[0]]) % line.period
        rev = (h - params.span_start - rpiv[idx[-1]]) % line.period
        line.offsets = (int(fwd), int(rev))


def build_synthetic(params: SyntheticParams, seed: int) -> SyntheticResult:
    """Generate a timetable together with its line layout and planted band."""
    _check(params)
    rng = np.random.default_rng(seed)
    lines = _layout(params, rng)

    band: list[str] = []
    if params.sync_band is not None:
        sizes = _expected_sizes(params, lines)
        ranked = station_rank(sizes)
        lo = int(np.floor(params.sync_band[0] * len(ranked)))
        hi = int(np.ceil(params.sync_band[1] * len(ranked)))
        band = ranked[lo:hi]
        _plant(params, lines, set(band))

    trains = []
    for line in lines:
        for direction in (0, 1):
            path = line.path if direction == 0 else line.path[::-1]
            hops = line.hops if direction == 0 else line.hops[::-1]
            rel = _relative_times(hops, params.dwell)
            tag = "F" if direction == 0 else "R"
            for k, start in enumerate(_trains_per_direction(params, line, direction)):
                segs = tuple(Segment(station_id(*path[n]), start + d, station_id(*path[n + 1]),
                                     start + a) for n, (d, a) in enumerate(rel))
                trains.append((start, f"L{line.index:03d}{tag}{k:03d}", line.category, segs))
    trains.sort(key=lambda t: (t[0], t[1]))

    if params.segment_budget is not None:
        kept, used = [], 0
        for start, tid, cat, segs in trains:
            room = params.segment_budget - used
            if room <= 0:
                break
            segs = segs[:room]
            kept.append((start, tid, cat, segs))
            used += len(segs)
        trains = kept

    runs = {tid: TrainRun(tid, cat, segs) for _, tid, cat, segs in trains}

    served = sorted({s for r in runs.values() for s in r.stations})
    if params.include_unserved:
        ids = [station_id(x, y) for x in range(params.width) for y in range(params.height)]
    else:
        ids = served
    lo, hi = params.min_transfer
    mts = rng.integers(lo, hi + 1, size=len(ids))
    stations = {sid: Station(sid, f"Grid {sid[1:4].lstrip('0') or '0'}/"
                                  f"{sid[5:].lstrip('0') or '0'}", int(mt))
                for sid, mt in zip(ids, mts)}

    routes = _sample_routes(params, runs, stations, rng) if params.n_routes else ()
    tt = validate(Timetable(stations, runs, routes))
    return SyntheticResult(tt, lines, [s for s in band if s in stations])


def _sample_routes(params: SyntheticParams, runs: dict[str, TrainRun],
                   stations: dict[str, Station], rng) -> tuple[PassengerRoute, ...]:
    departures: dict[str, list[tuple[int, str, int]]] = {}
    for run in runs.values():
        for k, seg in enumerate(run.segments):
            departures.setdefault(seg.from_station, []).append((seg.dep_time, run.id, k))
    for v in departures.values():
        v.sort()
    train_ids = list(runs)
    routes = []
    for n in range(params.n_routes):
        run = runs[train_ids[int(rng.integers(len(train_ids)))]]
        stops = run.stations
        i = int(rng.integers(len(stops) - 1))
        j = int(rng.integers(i + 1, len(stops)))
        legs = [Leg(run.id, stops[i], stops[j])]
        if rng.random() < params.transfer_share and j < len(stops):
            x = stops[j]
            arr = run.segments[j - 1].arr_time
            deps = departures.get(x, [])
            mt = stations[x].min_transfer
            lo = bisect.bisect_left(deps, (arr + mt, "", -1))
            hi = bisect.bisect_right(deps, (arr + params.route_window, "￿", 1 << 30))
            cands = [d for d in deps[lo:hi] if d[1] != run.id]
            if cands:
                dep_time, tid, k = cands[int(rng.integers(len(cands)))]
                nxt = runs[tid]
                nstops = nxt.stations
                m = int(rng.integers(k + 1, len(nstops)))
                legs.append(Leg(tid, x, nstops[m]))
        pax = int(rng.integers(1, params.max_passengers + 1))
        legs_t = tuple(legs)
        routes.append(PassengerRoute(f"R{n:06d}", pax, legs_t, planned_arrival(runs, legs_t)))
    return tuple(routes)


def generate_synthetic(params: SyntheticParams, seed: int) -> Timetable:
    return build_synthetic(params, seed).timetable


GERMAN_SCALE = SyntheticParams(
    width=57, height=46, n_lines=130, periods=(60, 120), period_weights=(0.3, 0.7),
    include_unserved=True, segment_budget=43772, min_line_hops=10,
)
"""Matches the reported network size: 2622 stations and 43772 train segments."""
