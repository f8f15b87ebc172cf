"""Phase synchronization of station event patterns.

Event times are wrapped onto a circle of circumference ``tau`` and summarized
by the modulus of their mean unit phasor (the Kuramoto order parameter). A
null model with the same number of uniformly placed events gives the baseline
that is subtracted to obtain the reduced index.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .timetable import EventList, Timetable, station_events, station_rank

DEFAULT_TAU = 120
DEFAULT_NULL_RUNS = 100
DEFAULT_WINDOW = 40
DEFAULT_BOUNDARIES = (80, 170)


@dataclass(frozen=True)
class PhaseSeries:
    station: str
    phases: np.ndarray
    tau: float


@dataclass(frozen=True)
class SyncRecord:
    station: str
    t_k: int
    sigma: float
    sigma_null: float
    sigma_star: float
    rank: int


@dataclass(frozen=True)
class RankProfile:
    ranks: np.ndarray
    values: np.ndarray
    window: int


def to_phases(events: EventList | Sequence[float], tau: float = DEFAULT_TAU,
              station: str = "") -> PhaseSeries:
    """Phases ``2*pi*(t mod tau)/tau`` of a station's event times."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if isinstance(events, EventList):
        station = events.station
        times = events.times
    else:
        times = events
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        raise ValueError("cannot build phases from an empty event list")
    phases = 2 * np.pi * np.mod(t, tau) / tau
    # float rounding can land exactly on 2*pi
    phases[phases >= 2 * np.pi] = 0.0
    return PhaseSeries(station, phases, float(tau))


def order_parameter(phases: np.ndarray) -> float:
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise ValueError("empty phase set")
    z = np.exp(1j * phases).mean()
    return float(min(1.0, abs(z)))


def sync_index(ps: PhaseSeries | np.ndarray) -> float:
    """Modulus of the mean unit phasor, in [0, 1]."""
    phases = ps.phases if isinstance(ps, PhaseSeries) else ps
    return order_parameter(phases)


def _stream(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(key.encode())]))


def null_sigmas(t_k: int, tau: float = DEFAULT_TAU, day_length: float = 1440,
                n_runs: int = DEFAULT_NULL_RUNS,
                rng: Optional[np.random.Generator] = None, seed: int = 0) -> np.ndarray:
    """Sync index of ``n_runs`` independent sets of ``t_k`` uniform event times."""
    if t_k < 1 or n_runs < 1:
        raise ValueError("t_k and n_runs must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    times = rng.uniform(0.0, day_length, size=(n_runs, t_k))
    z = np.exp(2j * np.pi * np.mod(times, tau) / tau).mean(axis=1)
    return np.minimum(np.abs(z), 1.0)


def null_baseline(t_k: int, tau: float = DEFAULT_TAU, day_length: float = 1440,
                  n_runs: int = DEFAULT_NULL_RUNS, seed: int = 0,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Mean sync index of the uniform-random null model."""
    return float(null_sigmas(t_k, tau, day_length, n_runs, rng=rng, seed=seed).mean())


def _station_record(args) -> tuple[str, int, float, float]:
    sid, times, tau, day_length, n_runs, seed = args
    sigma = order_parameter(to_phases(times, tau).phases)
    sigma_null = null_baseline(len(times), tau, day_length, n_runs, rng=_stream(seed, sid))
    return sid, len(times), sigma, sigma_null


def reduced_sync(tt: Timetable, tau: float = DEFAULT_TAU, n_runs: int = DEFAULT_NULL_RUNS,
                 seed: int = 0, workers: int = 1,
                 events: Optional[Mapping[str, EventList]] = None) -> list[SyncRecord]:
    """One record per station with events, ordered by rank (1 = largest)."""
    from .parallel import ordered_map

    events = events if events is not None else station_events(tt)
    events = {s: e for s, e in events.items() if e.size}
    ranked = station_rank({s: e.size for s, e in events.items()})
    jobs = [(s, events[s].times, tau, tt.day_length, n_runs, seed) for s in ranked]
    rows = ordered_map(_station_record, jobs, workers)
    return [SyncRecord(sid, t_k, sigma, sigma_null, sigma - sigma_null, rank)
            for rank, (sid, t_k, sigma, sigma_null) in enumerate(rows, start=1)]


def rank_window_average(values: Sequence[float], window: int = DEFAULT_WINDOW,
                        ranks: Optional[Sequence[int]] = None) -> RankProfile:
    """Unweighted sliding mean along rank order, reported at each window's
    center rank (start + window // 2)."""
    v = np.asarray(values, dtype=float)
    r = np.arange(1, v.size + 1) if ranks is None else np.asarray(ranks)
    if r.size != v.size:
        raise ValueError("ranks and values differ in length")
    if np.any(np.diff(r) <= 0):
        raise ValueError("ranks must be strictly increasing")
    if window < 1:
        raise ValueError("window must be at least 1")
    if window > v.size:
        raise ValueError(f"window {window} larger than series of length {v.size}")
    c = np.concatenate([[0.0], np.cumsum(v)])
    means = (c[window:] - c[:-window]) / window
    centers = r[window // 2: window // 2 + means.size]
    return RankProfile(centers, means, window)


def profile_of(records: Sequence[SyncRecord], window: int = DEFAULT_WINDOW) -> RankProfile:
    recs = sorted(records, key=lambda rec: rec.rank)
    return rank_window_average([rec.sigma_star for rec in recs], window,
                               [rec.rank for rec in recs])


def size_class(t_k: int, boundaries: tuple[int, int] = DEFAULT_BOUNDARIES) -> str:
    lo, hi = boundaries
    if t_k > hi:
        return "large"
    if t_k > lo:
        return "medium"
    return "small"


def category_means(records: Iterable[SyncRecord],
                   boundaries: tuple[int, int] = DEFAULT_BOUNDARIES) -> dict[str, float]:
    """Mean reduced index for small/medium/large stations. Stations exactly on
    a boundary belong to the smaller class; empty classes are omitted."""
    if boundaries[0] >= boundaries[1]:
        raise ValueError("boundaries must be ascending")
    groups: dict[str, list[float]] = {}
    for rec in records:
        groups.setdefault(size_class(rec.t_k, boundaries), []).append(rec.sigma_star)
    return {name: float(np.mean(groups[name])) for name in ("small", "medium", "large")
            if name in groups}
