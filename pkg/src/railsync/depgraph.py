"""Delay propagation on a time-expanded dependency graph.

Every departure and arrival of every train is an event node with a planned
time and a (schedule) node carrying that planned time. Standing, traveling
and transfer edges constrain event timestamps; a delay scenario adds forecast
lower bounds and timestamps are recomputed in planned-time order.
"""
from __future__ import annotations

import bisect
import heapq
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .timetable import (ARRIVAL, DEPARTURE, Category, EventRef, PassengerRoute, Timetable,
                        TransferOpportunity, leg_event_indices, route_transfers,
                        station_rank, station_sizes)

DEFAULT_MAX_WAIT = 5
DEFAULT_MIN_STANDING = 2
DEFAULT_MAX_DELAY = 720
DEFAULT_MAX_LEGS = 4

CAPPED = "capped"
ALL_OR_NOTHING = "all_or_nothing"


class DelayError(ValueError):
    pass


@dataclass(frozen=True)
class WaitingPolicy:
    """Maximum wait of a connecting train for a delayed feeder.

    ``mode`` selects what happens when the feeder is later than the allowed
    wait: ``"capped"`` holds the connecting train for the full ``max_wait``
    and then lets it go; ``"all_or_nothing"`` lets it depart on time.
    """

    max_wait: Mapping[tuple[Category, Category], int] = field(default_factory=dict)
    default_max_wait: int = DEFAULT_MAX_WAIT
    mode: str = CAPPED

    def __post_init__(self):
        if self.default_max_wait < 0 or any(v < 0 for v in self.max_wait.values()):
            raise ValueError("waiting times must be non-negative")
        if self.mode not in (CAPPED, ALL_OR_NOTHING):
            raise ValueError(f"unknown waiting mode {self.mode!r}")

    def lookup(self, feeder: Category, connecting: Category) -> int:
        return self.max_wait.get((feeder, connecting), self.default_max_wait)

    def to_dict(self) -> dict:
        return {"default_max_wait": self.default_max_wait, "mode": self.mode,
                "max_wait": [[a.value, b.value, w] for (a, b), w in sorted(
                    self.max_wait.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "WaitingPolicy":
        table = {(Category(a), Category(b)): int(w) for a, b, w in data.get("max_wait", [])}
        return cls(table, int(data.get("default_max_wait", DEFAULT_MAX_WAIT)),
                   data.get("mode", CAPPED))


@dataclass(frozen=True)
class Injection:
    node: Union[int, EventRef]
    delay: int


@dataclass(frozen=True)
class DelayScenario:
    injections: tuple[Injection, ...] = ()

    def __post_init__(self):
        for inj in self.injections:
            if inj.delay < 0:
                raise DelayError("primary delays must be non-negative")


@dataclass(frozen=True)
class Edge:
    kind: str
    tail: int
    head: int
    bound: int


class DepGraph:
    """Event nodes ``0..n-1`` and schedule nodes ``n..2n-1`` (schedule node of
    event ``v`` is ``n + v``). Immutable after construction."""

    def __init__(self, tt: Timetable, transfers: Iterable[TransferOpportunity] = (),
                 policy: Optional[WaitingPolicy] = None,
                 min_standing: int = DEFAULT_MIN_STANDING, catch_up: float = 0.0):
        if not 0.0 <= catch_up <= 1.0:
            raise ValueError("catch_up must lie in [0, 1]")
        self.timetable = tt
        self.policy = policy or WaitingPolicy()
        self.min_standing = min_standing
        self.catch_up = catch_up

        kind, train, station, seg, planned = [], [], [], [], []
        pred, pred_bound = [], []
        self.train_nodes: dict[str, list[int]] = {}
        self.node_of: dict[tuple[str, int, str], int] = {}
        for run in tt.runs.values():
            nodes = []
            for k, s in enumerate(run.segments):
                for kd, st, t in ((DEPARTURE, s.from_station, s.dep_time),
                                  (ARRIVAL, s.to_station, s.arr_time)):
                    v = len(kind)
                    kind.append(kd)
                    train.append(run.id)
                    station.append(st)
                    seg.append(k)
                    planned.append(t)
                    if kd == DEPARTURE:
                        if k:
                            dwell = s.dep_time - run.segments[k - 1].arr_time
                            pred.append(v - 1)
                            pred_bound.append(min(min_standing, dwell))
                        else:
                            pred.append(-1)
                            pred_bound.append(0)
                    else:
                        pred.append(v - 1)
                        pred_bound.append(s.duration)
                    self.node_of[(run.id, k, kd)] = v
                    nodes.append(v)
            self.train_nodes[run.id] = nodes

        self.n = len(kind)
        self.kind = kind
        self.train = train
        self.station = station
        self.segment = seg
        self.planned = np.asarray(planned, dtype=np.int64)
        self._planned_list = planned
        self.pred = pred
        self.pred_bound = pred_bound
        self.is_departure = [k == DEPARTURE for k in kind]

        # transfer in-edges per departure: (feeder arrival, min_transfer, max_wait)
        self.transfer_in: list[list[tuple[int, int, int]]] = [[] for _ in range(self.n)]
        self.succ: list[list[int]] = [[] for _ in range(self.n)]
        for v in range(self.n):
            if pred[v] >= 0:
                self.succ[pred[v]].append(v)
        self.n_transfer = 0
        for t in transfers:
            a = self.node_of[(t.from_arrival.train, t.from_arrival.index, ARRIVAL)]
            d = self.node_of[(t.to_departure.train, t.to_departure.index, DEPARTURE)]
            if station[a] != station[d] or train[a] == train[d]:
                raise DelayError("transfer edge must join different trains at one station")
            mt = tt.stations[station[a]].min_transfer
            w = self.policy.lookup(tt.runs[train[a]].category, tt.runs[train[d]].category)
            self.transfer_in[d].append((a, mt, w))
            self.succ[a].append(d)
            self.n_transfer += 1

        order = sorted(range(self.n), key=lambda v: (planned[v], 0 if kind[v] == ARRIVAL else 1, v))
        self.position = [0] * self.n
        for pos, v in enumerate(order):
            self.position[v] = pos
        self.order = order
        for v in range(self.n):
            for w in self.succ[v]:
                if self.position[w] <= self.position[v]:
                    raise DelayError(
                        f"edge {v}->{w} points backwards in planned time; "
                        "propagation order would be invalid")

        # departures per station sorted by planned time, for routing
        deps: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for v in range(self.n):
            if kind[v] == DEPARTURE:
                deps[station[v]].append((planned[v], v))
        self.departures = {s: [v for _, v in sorted(lst)] for s, lst in deps.items()}
        self.departure_times = {s: [planned[v] for v in lst]
                                for s, lst in self.departures.items()}

    # -- structure views ---------------------------------------------------

    def schedule_node(self, v: int) -> int:
        return self.n + v

    def resolve(self, node: Union[int, EventRef]) -> int:
        if isinstance(node, EventRef):
            try:
                return self.node_of[(node.train, node.index, node.kind)]
            except KeyError:
                raise DelayError(f"no event {node}") from None
        if 0 <= node < self.n:
            return node
        if self.n <= node < 2 * self.n:
            raise DelayError(f"node {node} is a schedule node; delays go on event nodes")
        raise DelayError(f"unknown node {node}")

    def event_node(self, train: str, station: str, kind: str) -> int:
        for v in self.train_nodes[train]:
            if self.kind[v] == kind and self.station[v] == station:
                return v
        raise DelayError(f"train {train!r} has no {kind} at {station!r}")

    @property
    def nodes(self) -> list[dict]:
        ev = [{"kind": self.kind[v], "train": self.train[v], "station": self.station[v],
               "planned": int(self.planned[v])} for v in range(self.n)]
        sched = [{"kind": "schedule", "train": self.train[v], "station": self.station[v],
                  "planned": int(self.planned[v])} for v in range(self.n)]
        return ev + sched

    @property
    def edges(self) -> list[Edge]:
        out = [Edge("schedule", self.n + v, v, int(self.planned[v])) for v in range(self.n)]
        for v in range(self.n):
            if self.pred[v] >= 0:
                out.append(Edge("standing" if self.is_departure[v] else "traveling",
                                self.pred[v], v, self.pred_bound[v]))
            for a, mt, _ in self.transfer_in[v]:
                out.append(Edge("transfer", a, v, mt))
        return out

    # -- timestamps --------------------------------------------------------

    def local_time(self, v: int, ts: Callable[[int], int], lower: int) -> int:
        """Timestamp of ``v`` given final timestamps of its predecessors."""
        p = self._planned_list[v]
        t = max(p, lower)
        u = self.pred[v]
        if self.is_departure[v]:
            if u >= 0:
                t = max(t, ts(u) + self.pred_bound[v])
            capped = self.policy.mode == CAPPED
            for a, mt, w in self.transfer_in[v]:
                need = ts(a) + mt
                if need <= p:
                    continue
                if need <= p + w:
                    t = max(t, need)
                elif capped:
                    t = max(t, p + w)
        else:
            dep = ts(u)
            late = dep - self._planned_list[u]
            recover = math.floor(self.catch_up * late) if self.catch_up else 0
            t = max(t, dep + self.pred_bound[v] - recover)
        return t

    def propagate_delta(self, injections: Iterable[tuple[int, int]]) -> dict[int, int]:
        """Timestamps that differ from the plan, as ``{node: time}``."""
        lower: dict[int, int] = {}
        for v, d in injections:
            lower[v] = max(lower.get(v, 0), self._planned_list[v] + d)
        overlay: dict[int, int] = {}
        planned = self._planned_list
        get = lambda u: overlay.get(u, planned[u])
        pos = self.position
        heap = [(pos[v], v) for v in lower]
        heapq.heapify(heap)
        queued = set(lower)
        while heap:
            _, v = heapq.heappop(heap)
            t = self.local_time(v, get, lower.get(v, 0))
            if t != planned[v]:
                overlay[v] = t
                for w in self.succ[v]:
                    if w not in queued:
                        queued.add(w)
                        heapq.heappush(heap, (pos[w], w))
        return overlay


def build_depgraph(tt: Timetable, transfers: Optional[Iterable[TransferOpportunity]] = None,
                   policy: Optional[WaitingPolicy] = None, **kwargs) -> DepGraph:
    """Dependency graph; without explicit ``transfers`` only the transfers
    used by passenger routes get waiting edges."""
    if transfers is None:
        transfers = route_transfers(tt)
    return DepGraph(tt, transfers, policy, **kwargs)


def _injections(g: DepGraph, sc: DelayScenario) -> list[tuple[int, int]]:
    return [(g.resolve(inj.node), inj.delay) for inj in sc.injections]


def propagate(g: DepGraph, sc: DelayScenario) -> np.ndarray:
    """Timestamps of all event nodes under the scenario."""
    ts = g.planned.copy()
    for v, t in g.propagate_delta(_injections(g, sc)).items():
        ts[v] = t
    return ts


# --------------------------------------------------------------------------
# routing


@dataclass(frozen=True)
class ItineraryLeg:
    train: str
    board: str
    alight: str
    dep_time: int
    arr_time: int


@dataclass(frozen=True)
class Itinerary:
    legs: tuple[ItineraryLeg, ...]

    @property
    def arrival(self) -> int:
        return self.legs[-1].arr_time

    @property
    def trains(self) -> tuple[str, ...]:
        return tuple(leg.train for leg in self.legs)


class Timestamps:
    """Read view of timestamps: planned times overlaid with changed ones."""

    def __init__(self, g: DepGraph, overlay: Optional[Mapping[int, int]] = None,
                 full: Optional[np.ndarray] = None):
        self.g = g
        if full is not None:
            full = np.asarray(full)
            changed = np.flatnonzero(full != g.planned)
            overlay = {int(v): int(full[v]) for v in changed}
        self.overlay = dict(overlay or {})
        self.max_shift = max((t - g._planned_list[v] for v, t in self.overlay.items()),
                             default=0)

    def __call__(self, v: int) -> int:
        return self.overlay.get(v, self.g._planned_list[v])


def _as_timestamps(g: DepGraph, timestamps) -> Timestamps:
    if isinstance(timestamps, Timestamps):
        return timestamps
    if timestamps is None:
        return Timestamps(g)
    if isinstance(timestamps, dict):
        return Timestamps(g, overlay=timestamps)
    return Timestamps(g, full=timestamps)


def earliest_arrival(g: DepGraph, timestamps, origin: str, destination: str,
                     not_before: int, max_legs: int = DEFAULT_MAX_LEGS,
                     horizon: Optional[int] = None) -> Optional[Itinerary]:
    """Fastest itinerary from ``origin`` (ready at ``not_before``) to ``destination``.

    Interchanges honor each station's minimal transfer time. Among itineraries
    with equal arrival the one with fewer legs wins, then smaller train ids.
    Returns ``None`` if the destination cannot be reached (within
    ``horizon`` minutes, when given).
    """
    if origin == destination:
        raise ValueError("origin and destination coincide")
    ts = _as_timestamps(g, timestamps)
    stations = g.timetable.stations
    limit = math.inf if horizon is None else not_before + horizon
    best: dict[str, int] = {origin: not_before}
    # per station: (time, trains, parent station, leg)
    labels: dict[str, tuple] = {origin: (not_before, (), None, None)}
    history = []
    marked = [origin]
    planned = g._planned_list

    for rnd in range(max_legs):
        new: dict[str, tuple] = {}
        prev_best = best.get(destination, math.inf)
        for s in sorted(marked):
            t_s, trains_s, _, _ = labels[s]
            ready = t_s if rnd == 0 else t_s + stations[s].min_transfer
            deps = g.departures.get(s, [])
            times = g.departure_times.get(s, [])
            i = bisect.bisect_left(times, ready - ts.max_shift)
            for v in deps[i:]:
                cur_best = new[destination][0] if destination in new else math.inf
                bound = min(prev_best - 1, cur_best, limit)
                if planned[v] >= bound:
                    break
                dep = ts(v)
                if dep < ready or dep >= bound:
                    continue
                tid = g.train[v]
                if tid in trains_s:
                    continue
                trains = trains_s + (tid,)
                nodes = g.train_nodes[tid]
                k = nodes.index(v)
                for a in nodes[k + 1::2]:
                    ta = ts(a)
                    if ta > bound:
                        break
                    x = g.station[a]
                    if x == origin:
                        continue
                    if ta < best.get(x, math.inf) or (
                            x in new and ta == new[x][0] and trains < new[x][1]):
                        best[x] = ta
                        new[x] = (ta, trains, s, ItineraryLeg(tid, s, x, dep, ta))
                        if x == destination:
                            bound = min(bound, ta)
        if not new:
            break
        history.append(new)
        for x, lab in new.items():
            labels[x] = lab
        marked = [x for x in new if x != destination]

    final = best.get(destination)
    if final is None:
        return None
    # the first round reaching the final arrival uses the fewest legs
    rnd = next(r for r, layer in enumerate(history)
               if destination in layer and layer[destination][0] == final)
    legs = []
    x = destination
    while True:
        lab = history[rnd][x]
        legs.append(lab[3])
        x = lab[2]
        if x == origin:
            break
        rnd -= 1
        while x not in history[rnd]:
            rnd -= 1
    return Itinerary(tuple(reversed(legs)))


# --------------------------------------------------------------------------
# passengers


@dataclass(frozen=True)
class PassengerOutcome:
    delay: int
    stranded: bool = False
    rerouted: bool = False


def route_nodes(g: DepGraph, route: PassengerRoute) -> list[tuple[int, int]]:
    """(boarding departure node, alighting arrival node) for every leg."""
    out = []
    for leg in route.legs:
        i, j = leg_event_indices(g.timetable, leg)
        out.append((g.node_of[(leg.train, i, DEPARTURE)], g.node_of[(leg.train, j, ARRIVAL)]))
    return out


def passenger_delay(route: PassengerRoute, g: DepGraph, timestamps=None,
                    max_delay: int = DEFAULT_MAX_DELAY, max_legs: int = DEFAULT_MAX_LEGS,
                    nodes: Optional[list[tuple[int, int]]] = None,
                    cache: Optional[dict] = None) -> PassengerOutcome:
    """Arrival delay of a passenger who follows the planned legs until a
    connection breaks and then takes the fastest alternative."""
    ts = _as_timestamps(g, timestamps)
    nodes = nodes if nodes is not None else route_nodes(g, route)
    stations = g.timetable.stations
    arr_t = None
    for n, (dv, av) in enumerate(nodes):
        if n:
            x = route.legs[n].board
            ready = arr_t + stations[x].min_transfer
            if ready > ts(dv):
                key = (x, ready, route.destination)
                if cache is not None and key in cache:
                    itin = cache[key]
                else:
                    itin = earliest_arrival(g, ts, x, route.destination, ready, max_legs,
                                            horizon=route.planned_arrival + max_delay - ready)
                    if cache is not None:
                        cache[key] = itin
                if itin is None:
                    return PassengerOutcome(max_delay, stranded=True, rerouted=True)
                delay = itin.arrival - route.planned_arrival
                if delay > max_delay:
                    return PassengerOutcome(max_delay, stranded=True, rerouted=True)
                return PassengerOutcome(max(0, delay), rerouted=True)
        arr_t = ts(av)
    return PassengerOutcome(max(0, arr_t - route.planned_arrival))


# --------------------------------------------------------------------------
# exhaustive sweep


@dataclass(frozen=True)
class SweepRow:
    station: str
    rank: int
    p: int
    affected_passengers: float
    s_mean: float
    s_total: float
    stranded: int
    n_scenarios: int


_SWEEP: dict = {}


def _sweep_init(g: DepGraph, routes: Sequence[PassengerRoute], max_delay: int, max_legs: int):
    by_train: dict[str, list[int]] = defaultdict(list)
    for n, r in enumerate(routes):
        for leg in r.legs:
            by_train[leg.train].append(n)
    _SWEEP.update(g=g, routes=routes, nodes=[route_nodes(g, r) for r in routes],
                  by_train={k: sorted(set(v)) for k, v in by_train.items()},
                  max_delay=max_delay, max_legs=max_legs)


def scenario_outcome(g: DepGraph, arrival: int, p: int) -> tuple[int, int, int]:
    """(passenger-minutes, delayed passengers, stranded passengers) for one
    primary delay on one arrival event; needs ``_sweep_init`` state."""
    overlay = g.propagate_delta([(arrival, p)])
    if not overlay:
        return 0, 0, 0
    ts = Timestamps(g, overlay)
    touched = sorted({r for t in {g.train[v] for v in overlay}
                      for r in _SWEEP["by_train"].get(t, ())})
    total = affected = stranded = 0
    cache: dict = {}
    routes, nodes = _SWEEP["routes"], _SWEEP["nodes"]
    for r in touched:
        out = passenger_delay(routes[r], g, ts, _SWEEP["max_delay"], _SWEEP["max_legs"],
                              nodes=nodes[r], cache=cache)
        if out.delay > 0:
            pax = routes[r].passenger_count
            total += pax * out.delay
            affected += pax
            if out.stranded:
                stranded += pax
    return total, affected, stranded


def _sweep_station(job):
    station, p_values = job
    g = _SWEEP["g"]
    arrivals = sorted(v for v in range(g.n)
                      if g.station[v] == station and not g.is_departure[v])
    rows = []
    for p in p_values:
        tot = aff = strd = 0
        for a in arrivals:
            t, f, s = scenario_outcome(g, a, p) if p > 0 else (0, 0, 0)
            tot += t
            aff += f
            strd += s
        n = len(arrivals)
        rows.append((p, aff / n, (tot / aff) if aff else 0.0, tot / n, strd, n))
    return station, rows


def secondary_delay_sweep(tt: Timetable, routes: Optional[Sequence[PassengerRoute]] = None,
                          p_values: Sequence[int] = (5, 30),
                          policy: Optional[WaitingPolicy] = None,
                          transfers: Optional[Sequence[TransferOpportunity]] = None,
                          graph: Optional[DepGraph] = None,
                          max_delay: int = DEFAULT_MAX_DELAY, max_legs: int = DEFAULT_MAX_LEGS,
                          stations: Optional[Iterable[str]] = None,
                          workers: int = 1) -> list[SweepRow]:
    """Delay every arrival at every station by each ``p`` in turn and aggregate
    the resulting passenger delays per station.

    ``affected_passengers`` and ``s_total`` are averages over the station's
    scenarios; ``s_mean = s_total / affected_passengers``; ``stranded`` is the
    total number of stranded passengers over all scenarios.
    """
    from .parallel import ordered_map

    routes = tt.routes if routes is None else routes
    if not routes:
        raise ValueError("sweep needs at least one passenger route")
    if any(p < 0 for p in p_values):
        raise ValueError("primary delays must be non-negative")
    g = graph if graph is not None else build_depgraph(tt, transfers, policy)
    sizes = station_sizes(tt)
    rank = {s: n for n, s in enumerate(station_rank(sizes), start=1)}
    with_arrivals = sorted({g.station[v] for v in range(g.n) if not g.is_departure[v]})
    if stations is not None:
        keep = set(stations)
        with_arrivals = [s for s in with_arrivals if s in keep]
    jobs = [(s, tuple(p_values)) for s in with_arrivals]
    results = ordered_map(_sweep_station, jobs, workers, initializer=_sweep_init,
                          initargs=(g, tuple(routes), max_delay, max_legs))
    rows = []
    for station, per_p in sorted(results, key=lambda r: (rank[r[0]], r[0])):
        for p, aff, mean, tot, strd, n in per_p:
            rows.append(SweepRow(station, rank[station], p, aff, mean, tot, strd, n))
    return rows


# --------------------------------------------------------------------------
# scenario files


def scenario_to_json(g: DepGraph, sc: DelayScenario) -> str:
    items = []
    for inj in sc.injections:
        v = g.resolve(inj.node)
        items.append({"train": g.train[v], "station": g.station[v], "kind": g.kind[v],
                      "delay_min": inj.delay})
    return json.dumps(items, indent=1)


def scenario_from_json(g: DepGraph, text: str) -> DelayScenario:
    items = json.loads(text)
    out = []
    for it in items:
        kind = it["kind"]
        if kind not in (ARRIVAL, DEPARTURE):
            raise DelayError(f"scenario kind must be arrival or departure, got {kind!r}")
        out.append(Injection(g.event_node(it["train"], it["station"], kind),
                             int(it["delay_min"])))
    return DelayScenario(tuple(out))
