"""Joint analysis of buffering time, secondary delay and reduced sync index."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .sync import rank_window_average

DEFAULT_JOINT_WINDOW = 26
QUADRANT_LABELS = ("++", "+-", "--", "-+")
RAW = "raw"
SMOOTHED = "smoothed"


@dataclass(frozen=True)
class StationMetrics:
    station: str
    rank: int
    t_k: int
    b: float
    s: Mapping[int, float] = field(default_factory=dict)
    sigma_star: float = 0.0


@dataclass(frozen=True)
class Quadrant:
    label: str

    @property
    def efficient(self) -> bool:
        return self.label[0] == "+"

    @property
    def robust(self) -> bool:
        return self.label[1] == "+"


@dataclass
class Classification:
    quadrants: dict[str, Quadrant]
    counts: dict[str, int]
    thresholds: tuple[float, float]
    p: int
    mode: str = RAW


@dataclass(frozen=True)
class Correlation:
    r: Optional[float]
    pairs: list[tuple[str, float, float, float]]
    """(station, x, y, y_lin) sorted by rank."""


@dataclass(frozen=True)
class JointProfile:
    ranks: np.ndarray
    b: np.ndarray
    s: np.ndarray
    sigma_star: np.ndarray
    window: int
    p: int


def _by_rank(metrics: Iterable[StationMetrics]) -> list[StationMetrics]:
    return sorted(metrics, key=lambda m: (m.rank, m.station))


def _s(m: StationMetrics, p: int) -> float:
    try:
        return m.s[p]
    except KeyError:
        raise KeyError(f"station {m.station} has no secondary delay for p={p}") from None


def quadrant_classify(metrics: Sequence[StationMetrics], p: int,
                      thresholds: Optional[tuple[float, float]] = None,
                      mode: str = RAW, window: int = DEFAULT_JOINT_WINDOW) -> Classification:
    """Label each station by efficiency (low b is '+') and robustness (low s is '+').

    Thresholds default to the medians of the compared values. Values equal to
    a threshold get '-'. In ``smoothed`` mode each station is compared through
    the rank-window average whose window covers it (nearest center at the
    ends).
    """
    ms = _by_rank(metrics)
    if not ms:
        raise ValueError("no stations to classify")
    b = np.array([m.b for m in ms], dtype=float)
    s = np.array([_s(m, p) for m in ms], dtype=float)
    if np.isnan(b).any() or np.isnan(s).any():
        bad = next(m.station for m, x, y in zip(ms, b, s) if math.isnan(x) or math.isnan(y))
        raise ValueError(f"station {bad} lacks a buffering time or secondary delay")
    if mode == SMOOTHED:
        b, s = _smooth_per_station(b, window), _smooth_per_station(s, window)
    elif mode != RAW:
        raise ValueError(f"unknown mode {mode!r}")
    bt, st = thresholds if thresholds is not None else (float(np.median(b)),
                                                         float(np.median(s)))
    quads: dict[str, Quadrant] = {}
    counts = dict.fromkeys(QUADRANT_LABELS, 0)
    for m, x, y in zip(ms, b, s):
        label = ("+" if x < bt else "-") + ("+" if y < st else "-")
        quads[m.station] = Quadrant(label)
        counts[label] += 1
    return Classification(quads, counts, (bt, st), p, mode)


def _smooth_per_station(v: np.ndarray, window: int) -> np.ndarray:
    window = min(window, v.size)
    prof = rank_window_average(v, window).values
    # station k uses the window starting at k - window//2, clipped to the ends
    start = np.clip(np.arange(v.size) - window // 2, 0, prof.size - 1)
    return prof[start]


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("series differ in length")
    if x.size < 2:
        raise ValueError("need at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return None
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def correlate(metrics: Sequence[StationMetrics], p1: int, p2: int) -> Correlation:
    """Pearson r between s(p1) and s(p2); ``y_lin`` is the linear expectation
    (p2/p1) * s(p1)."""
    ms = _by_rank(metrics)
    x = [_s(m, p1) for m in ms]
    y = [_s(m, p2) for m in ms]
    r = pearson(x, y)
    ratio = p2 / p1
    return Correlation(r, [(m.station, a, c, ratio * a) for m, a, c in zip(ms, x, y)])


def sync_by_quadrant(metrics: Sequence[StationMetrics],
                     classification: Classification) -> dict[str, float]:
    groups: dict[str, list[float]] = {}
    for m in metrics:
        q = classification.quadrants[m.station]
        groups.setdefault(q.label, []).append(m.sigma_star)
    return {lab: float(np.mean(groups[lab])) for lab in QUADRANT_LABELS if lab in groups}


def joint_profile(metrics: Sequence[StationMetrics], p: int,
                  window: int = DEFAULT_JOINT_WINDOW) -> JointProfile:
    ms = _by_rank(metrics)
    ranks = [m.rank for m in ms]
    b = rank_window_average([m.b for m in ms], window, ranks)
    s = rank_window_average([_s(m, p) for m in ms], window, ranks)
    z = rank_window_average([m.sigma_star for m in ms], window, ranks)
    return JointProfile(b.ranks, b.values, s.values, z.values, window, p)


def assemble_metrics(sync_rows: Iterable, buffering: Mapping[str, float],
                     sweep_rows: Iterable, measure: str = "s_total") -> list[StationMetrics]:
    """Join per-station values; only stations present in all three inputs are kept.

    ``measure`` picks the sweep column used as s(p). The default is the
    passenger-minutes per primary-delay scenario, which cannot decrease with p;
    ``s_mean`` (per affected passenger) can.
    """
    s: dict[str, dict[int, float]] = {}
    for row in sweep_rows:
        s.setdefault(row.station, {})[int(row.p)] = float(getattr(row, measure))
    out = []
    for rec in sync_rows:
        if rec.station in buffering and rec.station in s:
            out.append(StationMetrics(rec.station, rec.rank, rec.t_k,
                                      float(buffering[rec.station]), s[rec.station],
                                      rec.sigma_star))
    return _by_rank(out)
