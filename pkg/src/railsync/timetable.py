"""Timetable domain types, CSV bundle / GTFS ingestion and derived observables.

All times are integer minutes since the start of the service day. Times past
``day_length`` denote events on the following day.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional


DEFAULT_DAY_LENGTH = 1440
DEFAULT_TRANSFER_WINDOW = 120

ARRIVAL = "arrival"
DEPARTURE = "departure"


class TimetableError(ValueError):
    """Raised for malformed or inconsistent timetable data."""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[str] = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(os.path.basename(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class Category(str, Enum):
    LONG_DISTANCE_FAST = "long_distance_fast"
    LONG_DISTANCE = "long_distance"
    OTHER = "other"


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    min_transfer: int = 0


@dataclass(frozen=True)
class Segment:
    from_station: str
    dep_time: int
    to_station: str
    arr_time: int

    @property
    def duration(self) -> int:
        return self.arr_time - self.dep_time


@dataclass(frozen=True)
class TrainRun:
    id: str
    category: Category
    segments: tuple[Segment, ...]

    @property
    def stations(self) -> list[str]:
        return [self.segments[0].from_station] + [s.to_station for s in self.segments]

    def arrival_at(self, station: str) -> Optional[int]:
        for seg in self.segments:
            if seg.to_station == station:
                return seg.arr_time
        return None

    def departure_at(self, station: str) -> Optional[int]:
        for seg in self.segments:
            if seg.from_station == station:
                return seg.dep_time
        return None


@dataclass(frozen=True, order=True)
class EventRef:
    """An arrival or departure of one train; ``index`` is the segment index."""

    train: str
    index: int
    kind: str


@dataclass(frozen=True)
class Event:
    time: int
    kind: str
    train: str
    index: int

    @property
    def ref(self) -> EventRef:
        return EventRef(self.train, self.index, self.kind)


@dataclass(frozen=True)
class EventList:
    station: str
    events: tuple[Event, ...]

    @property
    def size(self) -> int:
        return len(self.events)

    @property
    def times(self) -> list[int]:
        return [e.time for e in self.events]


@dataclass(frozen=True)
class TransferOpportunity:
    station: str
    from_arrival: EventRef
    to_departure: EventRef
    buffer: int
    min_transfer: int = 0

    @property
    def slack(self) -> int:
        """Buffer in excess of the station's minimal interchange time."""
        return self.buffer - self.min_transfer


@dataclass(frozen=True)
class Leg:
    train: str
    board: str
    alight: str


@dataclass(frozen=True)
class PassengerRoute:
    id: str
    passenger_count: int
    legs: tuple[Leg, ...]
    planned_arrival: int

    @property
    def origin(self) -> str:
        return self.legs[0].board

    @property
    def destination(self) -> str:
        return self.legs[-1].alight


@dataclass(frozen=True)
class Timetable:
    """Immutable container; treat the mappings as read-only."""

    stations: Mapping[str, Station]
    runs: Mapping[str, TrainRun]
    routes: tuple[PassengerRoute, ...] = ()
    day_length: int = DEFAULT_DAY_LENGTH

    @property
    def n_segments(self) -> int:
        return sum(len(r.segments) for r in self.runs.values())


# --------------------------------------------------------------------------
# validation


def _check_run(run: TrainRun, stations: Mapping[str, Station]) -> None:
    if not run.segments:
        raise TimetableError(f"train {run.id!r} has no segments")
    prev = None
    for n, seg in enumerate(run.segments):
        for sid in (seg.from_station, seg.to_station):
            if sid not in stations:
                raise TimetableError(f"train {run.id!r} segment {n}: unknown station {sid!r}")
        if seg.dep_time < 0 or seg.arr_time < 0:
            raise TimetableError(f"train {run.id!r} segment {n}: negative time")
        if seg.arr_time <= seg.dep_time:
            raise TimetableError(
                f"train {run.id!r} segment {n} ({seg.from_station}->{seg.to_station}): "
                f"arrival {seg.arr_time} not after departure {seg.dep_time}")
        if prev is not None:
            if prev.to_station != seg.from_station:
                raise TimetableError(
                    f"train {run.id!r} segment {n}: starts at {seg.from_station!r} "
                    f"but previous segment ends at {prev.to_station!r}")
            if seg.dep_time < prev.arr_time:
                raise TimetableError(
                    f"train {run.id!r} segment {n}: departs at {seg.dep_time} "
                    f"before arriving at {prev.arr_time}")
        prev = seg


def _leg_events(run: TrainRun, leg: Leg) -> tuple[int, int]:
    """Segment indices (boarding departure, alighting arrival) of a leg."""
    stops = run.stations
    try:
        i = stops.index(leg.board)
        j = stops.index(leg.alight, i + 1)
    except ValueError:
        raise TimetableError(
            f"train {run.id!r} does not run {leg.board!r} -> {leg.alight!r}") from None
    if i >= len(run.segments):
        raise TimetableError(f"train {run.id!r} does not depart from {leg.board!r}")
    return i, j - 1


def planned_arrival(runs: Mapping[str, TrainRun], legs: Iterable[Leg]) -> int:
    legs = list(legs)
    run = runs[legs[-1].train]
    _, j = _leg_events(run, legs[-1])
    return run.segments[j].arr_time


def _check_route(route: PassengerRoute, tt_runs: Mapping[str, TrainRun],
                 stations: Mapping[str, Station]) -> None:
    if route.passenger_count <= 0:
        raise TimetableError(f"route {route.id!r}: passenger count must be positive")
    if not route.legs:
        raise TimetableError(f"route {route.id!r} has no legs")
    for leg in route.legs:
        if leg.train not in tt_runs:
            raise TimetableError(f"route {route.id!r}: unknown train {leg.train!r}")
        _leg_events(tt_runs[leg.train], leg)
    for a, b in zip(route.legs, route.legs[1:]):
        if a.alight != b.board:
            raise TimetableError(
                f"route {route.id!r}: leg on {a.train!r} ends at {a.alight!r} "
                f"but next leg boards at {b.board!r}")
        if a.train == b.train:
            raise TimetableError(f"route {route.id!r}: consecutive legs on the same train")
        ra, rb = tt_runs[a.train], tt_runs[b.train]
        arr = ra.segments[_leg_events(ra, a)[1]].arr_time
        dep = rb.segments[_leg_events(rb, b)[0]].dep_time
        if dep - arr < stations[a.alight].min_transfer:
            raise TimetableError(
                f"route {route.id!r}: transfer at {a.alight!r} from {a.train!r} to "
                f"{b.train!r} has buffer {dep - arr} below minimal interchange "
                f"{stations[a.alight].min_transfer}")
    expected = planned_arrival(tt_runs, route.legs)
    if route.planned_arrival != expected:
        raise TimetableError(
            f"route {route.id!r}: planned arrival {route.planned_arrival} differs from "
            f"scheduled arrival {expected}")


def validate(tt: Timetable) -> Timetable:
    """Check every timetable invariant; returns ``tt`` unchanged."""
    for sid, st in tt.stations.items():
        if sid != st.id:
            raise TimetableError(f"station key {sid!r} does not match id {st.id!r}")
        if st.min_transfer < 0:
            raise TimetableError(f"station {sid!r}: negative minimal transfer time")
    for rid, run in tt.runs.items():
        if rid != run.id:
            raise TimetableError(f"train key {rid!r} does not match id {run.id!r}")
        _check_run(run, tt.stations)
    seen = set()
    for route in tt.routes:
        if route.id in seen:
            raise TimetableError(f"duplicate route id {route.id!r}")
        seen.add(route.id)
        _check_route(route, tt.runs, tt.stations)
    return tt


# --------------------------------------------------------------------------
# native CSV bundle

STATIONS_HEADER = ["station_id", "name", "min_transfer_min"]
SEGMENTS_HEADER = ["train_id", "category", "from_station", "dep_min", "to_station", "arr_min"]
ROUTES_HEADER = ["route_id", "passengers", "leg_index", "train_id", "board_station",
                 "alight_station"]

_INT_RE = re.compile(r"^[+-]?\d+$")


def read_comment_header(path: str) -> dict:
    """Return the JSON config embedded in a leading ``# config:`` line, if any."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("config:"):
                return json.loads(body[len("config:"):])
    return {}


def read_csv_rows(path: str, required: list[str]):
    """Yield ``(line_number, row_dict)`` skipping leading ``#`` comment lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.splitlines(keepends=True)
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    reader = csv.reader(io.StringIO("".join(lines[skip:])))
    try:
        header = next(reader)
    except StopIteration:
        raise TimetableError("missing header row", path, skip + 1) from None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise TimetableError(f"missing required column(s) {missing}", path, skip + 1)
    for n, row in enumerate(reader, start=skip + 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TimetableError(f"expected {len(header)} fields, got {len(row)}", path, n)
        yield n, {h: c.strip() for h, c in zip(header, row)}


def _int_field(value: str, path: str, line: int, column: str, minimum: int = 0) -> int:
    if not _INT_RE.match(value):
        raise TimetableError(f"expected integer minutes, got {value!r}", path, line, column)
    out = int(value)
    if out < minimum:
        raise TimetableError(f"value {out} below {minimum}", path, line, column)
    return out


def parse_timetable(bundle_dir: str, day_length: int = DEFAULT_DAY_LENGTH) -> Timetable:
    """Read and validate a native bundle (``stations.csv``, ``segments.csv``,
    optional ``routes.csv``)."""
    spath = os.path.join(bundle_dir, "stations.csv")
    gpath = os.path.join(bundle_dir, "segments.csv")
    rpath = os.path.join(bundle_dir, "routes.csv")
    for p in (spath, gpath):
        if not os.path.exists(p):
            raise TimetableError("required file missing", p)

    stations: dict[str, Station] = {}
    for n, row in read_csv_rows(spath, STATIONS_HEADER):
        sid = row["station_id"]
        if not sid:
            raise TimetableError("empty station id", spath, n, "station_id")
        if sid in stations:
            raise TimetableError(f"duplicate station id {sid!r}", spath, n, "station_id")
        mt = _int_field(row["min_transfer_min"], spath, n, "min_transfer_min")
        stations[sid] = Station(sid, row["name"], mt)

    seg_rows: dict[str, list[tuple[int, Segment]]] = {}
    categories: dict[str, Category] = {}
    for n, row in read_csv_rows(gpath, SEGMENTS_HEADER):
        tid = row["train_id"]
        if not tid:
            raise TimetableError("empty train id", gpath, n, "train_id")
        try:
            cat = Category(row["category"])
        except ValueError:
            raise TimetableError(f"unknown category {row['category']!r}", gpath, n,
                                 "category") from None
        if categories.setdefault(tid, cat) is not cat:
            raise TimetableError(f"train {tid!r} changes category", gpath, n, "category")
        for col in ("from_station", "to_station"):
            if row[col] not in stations:
                raise TimetableError(f"unknown station {row[col]!r}", gpath, n, col)
        dep = _int_field(row["dep_min"], gpath, n, "dep_min")
        arr = _int_field(row["arr_min"], gpath, n, "arr_min")
        if arr <= dep:
            raise TimetableError(
                f"segment of train {tid!r} {row['from_station']}->{row['to_station']}: "
                f"arrival {arr} not after departure {dep}", gpath, n, "arr_min")
        seg_rows.setdefault(tid, []).append(
            (n, Segment(row["from_station"], dep, row["to_station"], arr)))

    runs: dict[str, TrainRun] = {}
    for tid, rows in seg_rows.items():
        rows.sort(key=lambda r: (r[1].dep_time, r[0]))
        run = TrainRun(tid, categories[tid], tuple(s for _, s in rows))
        try:
            _check_run(run, stations)
        except TimetableError as exc:
            raise TimetableError(str(exc), gpath) from None
        runs[tid] = run

    routes: list[PassengerRoute] = []
    if os.path.exists(rpath):
        legs: dict[str, dict[int, tuple[int, Leg]]] = {}
        counts: dict[str, int] = {}
        first_line: dict[str, int] = {}
        for n, row in read_csv_rows(rpath, ROUTES_HEADER):
            rid = row["route_id"]
            pax = _int_field(row["passengers"], rpath, n, "passengers", minimum=1)
            if counts.setdefault(rid, pax) != pax:
                raise TimetableError(f"route {rid!r} changes passenger count", rpath, n,
                                     "passengers")
            first_line.setdefault(rid, n)
            idx = _int_field(row["leg_index"], rpath, n, "leg_index")
            if row["train_id"] not in runs:
                raise TimetableError(f"unknown train {row['train_id']!r}", rpath, n, "train_id")
            for col in ("board_station", "alight_station"):
                if row[col] not in stations:
                    raise TimetableError(f"unknown station {row[col]!r}", rpath, n, col)
            if idx in legs.setdefault(rid, {}):
                raise TimetableError(f"route {rid!r} repeats leg {idx}", rpath, n, "leg_index")
            legs[rid][idx] = (n, Leg(row["train_id"], row["board_station"],
                                     row["alight_station"]))
        for rid in sorted(first_line, key=first_line.get):
            ordered = [legs[rid][k] for k in sorted(legs[rid])]
            if [k for k in sorted(legs[rid])] != list(range(len(ordered))):
                raise TimetableError(f"route {rid!r}: leg indices must be 0..n-1", rpath,
                                     first_line[rid], "leg_index")
            leg_tuple = tuple(l for _, l in ordered)
            try:
                route = PassengerRoute(rid, counts[rid], leg_tuple,
                                       planned_arrival(runs, leg_tuple))
                _check_route(route, runs, stations)
            except TimetableError as exc:
                raise TimetableError(str(exc), rpath, ordered[0][0]) from None
            routes.append(route)

    return validate(Timetable(stations, runs, tuple(routes), day_length))


def _write_rows(path: str, header: list[str], rows: Iterable[list], comment: Optional[str]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(comment.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_timetable(tt: Timetable, bundle_dir: str, comment: Optional[str] = None) -> None:
    """Serialize ``tt`` as a native bundle. ``comment`` becomes a leading ``#`` line."""
    os.makedirs(bundle_dir, exist_ok=True)
    _write_rows(os.path.join(bundle_dir, "stations.csv"), STATIONS_HEADER,
                ([s.id, s.name, s.min_transfer] for s in tt.stations.values()), comment)
    _write_rows(os.path.join(bundle_dir, "segments.csv"), SEGMENTS_HEADER,
                ([r.id, r.category.value, s.from_station, s.dep_time, s.to_station, s.arr_time]
                 for r in tt.runs.values() for s in r.segments), comment)
    rpath = os.path.join(bundle_dir, "routes.csv")
    if tt.routes:
        _write_rows(rpath, ROUTES_HEADER,
                    ([r.id, r.passenger_count, k, l.train, l.board, l.alight]
                     for r in tt.routes for k, l in enumerate(r.legs)), comment)
    elif os.path.exists(rpath):
        os.remove(rpath)


# --------------------------------------------------------------------------
# GTFS subset

def parse_gtfs_time(value: str) -> int:
    """``HH:MM:SS`` (hours may exceed 23) to minutes; seconds must be zero."""
    m = re.match(r"^\s*(\d{1,3}):(\d{2}):(\d{2})\s*$", value)
    if not m:
        raise ValueError(f"unparseable time {value!r}")
    h, mi, s = (int(x) for x in m.groups())
    if mi > 59 or s > 59:
        raise ValueError(f"unparseable time {value!r}")
    if s:
        raise ValueError(f"sub-minute time {value!r} not supported")
    return 60 * h + mi


def import_gtfs_subset(gtfs_dir: str, default_min_transfer: int = 0,
                       category: Category = Category.LONG_DISTANCE,
                       day_length: int = DEFAULT_DAY_LENGTH) -> Timetable:
    """Build a timetable from ``stops.txt``, ``trips.txt`` and ``stop_times.txt``."""
    stops_path = os.path.join(gtfs_dir, "stops.txt")
    trips_path = os.path.join(gtfs_dir, "trips.txt")
    times_path = os.path.join(gtfs_dir, "stop_times.txt")
    for p in (stops_path, trips_path, times_path):
        if not os.path.exists(p):
            raise TimetableError("required file missing", p)

    stations: dict[str, Station] = {}
    for n, row in read_csv_rows(stops_path, ["stop_id", "stop_name"]):
        if row["stop_id"] in stations:
            raise TimetableError(f"duplicate stop_id {row['stop_id']!r}", stops_path, n,
                                 "stop_id")
        stations[row["stop_id"]] = Station(row["stop_id"], row["stop_name"],
                                           default_min_transfer)

    trips: dict[str, str] = {}
    for n, row in read_csv_rows(trips_path, ["trip_id", "route_id"]):
        if row["trip_id"] in trips:
            raise TimetableError(f"duplicate trip_id {row['trip_id']!r}", trips_path, n,
                                 "trip_id")
        trips[row["trip_id"]] = row["route_id"]

    stops_by_trip: dict[str, list[tuple[int, str, int, int, int]]] = defaultdict(list)
    for n, row in read_csv_rows(times_path, ["trip_id", "stop_sequence", "arrival_time",
                                             "departure_time", "stop_id"]):
        if row["trip_id"] not in trips:
            raise TimetableError(f"unknown trip_id {row['trip_id']!r}", times_path, n, "trip_id")
        if row["stop_id"] not in stations:
            raise TimetableError(f"unknown stop_id {row['stop_id']!r}", times_path, n, "stop_id")
        seq = _int_field(row["stop_sequence"], times_path, n, "stop_sequence")
        parsed = {}
        for col in ("arrival_time", "departure_time"):
            if not row[col]:
                parsed[col] = None
                continue
            try:
                parsed[col] = parse_gtfs_time(row[col])
            except ValueError as exc:
                raise TimetableError(str(exc), times_path, n, col) from None
        arr = parsed["arrival_time"] if parsed["arrival_time"] is not None else parsed["departure_time"]
        dep = parsed["departure_time"] if parsed["departure_time"] is not None else parsed["arrival_time"]
        if arr is None:
            raise TimetableError("stop time without arrival or departure", times_path, n,
                                 "arrival_time")
        stops_by_trip[row["trip_id"]].append((seq, row["stop_id"], arr, dep, n))

    runs: dict[str, TrainRun] = {}
    for tid in trips:
        stops = sorted(stops_by_trip.get(tid, []))
        if len(stops) < 2:
            raise TimetableError(f"trip {tid!r} has fewer than two stop_times", times_path)
        for a, b in zip(stops, stops[1:]):
            if a[0] == b[0]:
                raise TimetableError(f"trip {tid!r} repeats stop_sequence {a[0]}", times_path,
                                     b[4], "stop_sequence")
        segs = tuple(Segment(a[1], a[3], b[1], b[2]) for a, b in zip(stops, stops[1:]))
        run = TrainRun(tid, category, segs)
        try:
            _check_run(run, stations)
        except TimetableError as exc:
            raise TimetableError(str(exc), times_path) from None
        runs[tid] = run

    return validate(Timetable(stations, runs, (), day_length))


# --------------------------------------------------------------------------
# derived observables


def station_events(tt: Timetable) -> dict[str, EventList]:
    """All arrival/departure events per station, sorted by time."""
    per: dict[str, list[Event]] = defaultdict(list)
    for run in tt.runs.values():
        for k, seg in enumerate(run.segments):
            per[seg.from_station].append(Event(seg.dep_time, DEPARTURE, run.id, k))
            per[seg.to_station].append(Event(seg.arr_time, ARRIVAL, run.id, k))
    return {sid: EventList(sid, tuple(sorted(evs, key=lambda e: (e.time, e.kind, e.train,
                                                                  e.index))))
            for sid, evs in sorted(per.items())}


def station_sizes(tt: Timetable) -> dict[str, int]:
    return {sid: el.size for sid, el in station_events(tt).items()}


def station_rank(sizes: Mapping[str, int]) -> list[str]:
    """Station ids by descending size; ties broken by ascending id."""
    return sorted(sizes, key=lambda s: (-sizes[s], s))


def derive_transfers(tt: Timetable, max_window: int = DEFAULT_TRANSFER_WINDOW
                     ) -> list[TransferOpportunity]:
    """Every (arrival, later departure of another train) pair at a station whose
    gap lies in ``[min_transfer, max_window]``."""
    if max_window <= 0:
        raise ValueError("max_window must be positive")
    out: list[TransferOpportunity] = []
    for sid, el in station_events(tt).items():
        mt = tt.stations[sid].min_transfer
        deps = [e for e in el.events if e.kind == DEPARTURE]
        dep_times = [e.time for e in deps]
        for a in el.events:
            if a.kind != ARRIVAL:
                continue
            lo = bisect.bisect_left(dep_times, a.time + mt)
            hi = bisect.bisect_right(dep_times, a.time + max_window)
            for d in deps[lo:hi]:
                if d.train != a.train:
                    out.append(TransferOpportunity(sid, a.ref, d.ref, d.time - a.time, mt))
    return out


def buffering_times(transfers: Iterable[TransferOpportunity]) -> dict[str, float]:
    """Mean buffer per station over its transfer opportunities."""
    total: dict[str, int] = defaultdict(int)
    count: dict[str, int] = defaultdict(int)
    for t in transfers:
        total[t.station] += t.buffer
        count[t.station] += 1
    return {s: total[s] / count[s] for s in sorted(total)}


def route_buffering_times(tt: Timetable) -> dict[str, float]:
    """Passenger-weighted mean buffer per station over transfers actually used by routes."""
    total: dict[str, float] = defaultdict(float)
    weight: dict[str, int] = defaultdict(int)
    for route in tt.routes:
        for a, b in zip(route.legs, route.legs[1:]):
            ra, rb = tt.runs[a.train], tt.runs[b.train]
            arr = ra.segments[_leg_events(ra, a)[1]].arr_time
            dep = rb.segments[_leg_events(rb, b)[0]].dep_time
            total[a.alight] += route.passenger_count * (dep - arr)
            weight[a.alight] += route.passenger_count
    return {s: total[s] / weight[s] for s in sorted(total)}


def route_transfers(tt: Timetable) -> list[TransferOpportunity]:
    """Distinct transfer opportunities used by at least one passenger route."""
    seen: dict[tuple[EventRef, EventRef], TransferOpportunity] = {}
    for route in tt.routes:
        for a, b in zip(route.legs, route.legs[1:]):
            ra, rb = tt.runs[a.train], tt.runs[b.train]
            j = _leg_events(ra, a)[1]
            i = _leg_events(rb, b)[0]
            arr = EventRef(a.train, j, ARRIVAL)
            dep = EventRef(b.train, i, DEPARTURE)
            if (arr, dep) not in seen:
                buf = rb.segments[i].dep_time - ra.segments[j].arr_time
                seen[(arr, dep)] = TransferOpportunity(a.alight, arr, dep, buf,
                                                       tt.stations[a.alight].min_transfer)
    return sorted(seen.values(), key=lambda t: (t.station, t.from_arrival, t.to_departure))


def leg_event_indices(tt: Timetable, leg: Leg) -> tuple[int, int]:
    return _leg_events(tt.runs[leg.train], leg)
