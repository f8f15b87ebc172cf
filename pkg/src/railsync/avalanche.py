"""Threshold avalanche model of delay propagation on random graphs.

A single driver node receives delay units, either periodically or at random
times with the same mean rate. Any node whose accumulated delay exceeds the
threshold topples: each neighbor independently receives ``m`` times the
toppling node's delay with probability ``p_trans``, and the toppling node is
reset to zero. Topplings are synchronous; the cascade that follows one
insertion is one avalanche and its length is the number of topplings.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import stats

PERIODIC = "periodic"
STOCHASTIC = "stochastic"

DEFAULT_P_TRANS = 0.08
DEFAULT_TAIL_MIN_COUNT = 5


class SupercriticalError(RuntimeError):
    """A single cascade exceeded the toppling guard."""

    def __init__(self, topplings: int, step: int, params: "AvaParams"):
        self.topplings = topplings
        self.step = step
        super().__init__(
            f"cascade at step {step} exceeded {params.max_topplings} topplings "
            f"(p_trans={params.p_trans}, m={params.m}, threshold={params.threshold}); "
            "the parameters are supercritical")


@dataclass(frozen=True)
class AvaGraph:
    n: int
    m: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "neighbors", tuple(np.array(sorted(x), dtype=np.int64)
                                                    for x in nbrs))

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> "AvaGraph":
        nodes = sorted(g.nodes)
        idx = {v: k for k, v in enumerate(nodes)}
        edges = tuple(sorted(tuple(sorted((idx[a], idx[b]))) for a, b in g.edges))
        return cls(len(nodes), len(edges), edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class AvaParams:
    p_trans: float = DEFAULT_P_TRANS
    m: float = 0.9
    threshold: float = 4.0
    driver: str = PERIODIC
    period: float = 17
    unit: float = 1.0
    max_topplings: int = 10 ** 6
    driver_node: int = 0
    # fraction of accumulated delay absorbed per time step (0 = none)
    leak: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_trans <= 1.0:
            raise ValueError("p_trans must lie in [0, 1]")
        if self.m < 0 or self.threshold < 0 or self.unit <= 0:
            raise ValueError("m, threshold must be >= 0 and unit > 0")
        if self.driver not in (PERIODIC, STOCHASTIC):
            raise ValueError(f"unknown driver {self.driver!r}")
        if self.period < 1:
            raise ValueError("period must be at least 1")
        if not 0.0 <= self.leak < 1.0:
            raise ValueError("leak must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AvaRun:
    lengths: list[int] = field(default_factory=list)
    durations: list[int] = field(default_factory=list)
    # time step of the insertion that triggered each avalanche
    times: list[int] = field(default_factory=list)
    insertions: int = 0
    steps: int = 0
    final_state: Optional[np.ndarray] = None

    @property
    def mean_length(self) -> Optional[float]:
        return float(np.mean(self.lengths)) if self.lengths else None


@dataclass(frozen=True)
class AvaStats:
    n_avalanches: int
    mean_length: float
    histogram: dict[int, int]
    tail_slope: Optional[float]
    tail_goodness: Optional[float]
    tail_range: Optional[tuple[int, int]]


def random_graph(n: int, m: int, seed: int) -> AvaGraph:
    """Uniform simple graph with exactly ``m`` edges, redrawn until connected."""
    if n < 1 or m < n - 1 or m > n * (n - 1) // 2:
        raise ValueError(f"no connected simple graph with {n} nodes and {m} edges")
    ss = np.random.SeedSequence(seed)
    while True:
        child = int(ss.spawn(1)[0].generate_state(1)[0])
        g = nx.gnm_random_graph(n, m, seed=child)
        if nx.is_connected(g):
            return AvaGraph.from_networkx(g)


def insertion_times(params: AvaParams, steps: int, rng: np.random.Generator) -> np.ndarray:
    if params.driver == PERIODIC:
        return np.flatnonzero(np.arange(steps) % params.period == 0)
    return np.flatnonzero(rng.random(steps) < 1.0 / params.period)


def run(g: AvaGraph, params: AvaParams, steps: int, seed: int,
        keep_state: bool = False) -> AvaRun:
    """Drive the model for ``steps`` time steps; cascades complete between steps."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not 0 <= params.driver_node < g.n:
        raise ValueError("driver node outside the graph")
    drive_ss, coin_ss = np.random.SeedSequence(seed).spawn(2)
    coins = np.random.default_rng(coin_ss)
    times = insertion_times(params, steps, np.random.default_rng(drive_ss))

    nbrs = g.neighbors
    d = np.zeros(g.n)
    out = AvaRun(insertions=int(times.size), steps=steps)
    thr, m, p = params.threshold, params.m, params.p_trans
    last = 0
    for t in times:
        if params.leak and t > last:
            d *= (1.0 - params.leak) ** (t - last)
        last = t
        d[params.driver_node] += params.unit
        total = sub = 0
        while True:
            top = np.flatnonzero(d > thr)
            if top.size == 0:
                break
            total += top.size
            sub += 1
            if total > params.max_topplings:
                raise SupercriticalError(total, int(t), params)
            received = np.zeros(g.n)
            if m > 0 and p > 0:
                # runaway growth overflows to inf; caught right below
                with np.errstate(over="ignore", invalid="ignore"):
                    for i in top:
                        nb = nbrs[i]
                        hit = nb[coins.random(nb.size) < p]
                        received[hit] += m * d[i]
            if not np.all(np.isfinite(received)):
                raise SupercriticalError(total, int(t), params)
            d[top] = 0.0
            d += received
        if total:
            out.lengths.append(total)
            out.durations.append(sub)
            out.times.append(int(t))
    if keep_state:
        out.final_state = d.copy()
    return out


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def avalanche_stats(runs: Iterable[AvaRun] | Sequence[int],
                    min_count: int = DEFAULT_TAIL_MIN_COUNT) -> Optional[AvaStats]:
    """Mean length, histogram and a log-linear fit of the tail.

    The tail runs from just above the histogram mode up to (excluding) the
    first length whose count drops below ``min_count``; beyond that the
    counts are dominated by sampling noise. ``tail_goodness`` is the R^2 of
    the fit. Returns ``None`` when no avalanche was recorded.
    """
    lengths: list[int] = []
    for r in runs:
        if isinstance(r, AvaRun):
            lengths.extend(r.lengths)
        else:
            lengths.append(int(r))
    if not lengths:
        return None
    hist = dict(sorted(Counter(lengths).items()))
    xs = np.array(list(hist))
    ys = np.array(list(hist.values()), dtype=float)
    mode = int(xs[np.argmax(ys)])
    tail = []
    for length in range(mode + 1, int(xs.max()) + 1):
        c = hist.get(length, 0)
        if c < max(min_count, 1):
            break
        tail.append((length, c))
    slope = goodness = None
    rng_ = None
    if len(tail) >= 3:
        tx = np.array([a for a, _ in tail], dtype=float)
        ty = np.log(np.array([b for _, b in tail], dtype=float))
        slope, goodness = _fit_line(tx, ty)
        rng_ = (tail[0][0], tail[-1][0])
    return AvaStats(len(lengths), float(np.mean(lengths)), hist, slope, goodness, rng_)


@dataclass
class DriverComparison:
    seeds: list[int]
    periodic: list[Optional[float]]
    stochastic: list[Optional[float]]
    periodic_runs: list[AvaRun]
    stochastic_runs: list[AvaRun]

    def _pairs(self) -> tuple[np.ndarray, np.ndarray]:
        ok = [(a, b) for a, b in zip(self.periodic, self.stochastic)
              if a is not None and b is not None]
        arr = np.array(ok, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    @property
    def periodic_mean(self) -> Optional[float]:
        a, _ = self._pairs()
        return float(a.mean()) if a.size else None

    @property
    def stochastic_mean(self) -> Optional[float]:
        _, b = self._pairs()
        return float(b.mean()) if b.size else None

    def paired_test(self) -> Optional[float]:
        """One-sided paired t-test p-value for periodic > stochastic."""
        a, b = self._pairs()
        if a.size < 2:
            return None
        diff = a - b
        if np.allclose(diff, diff[0]):
            return 0.0 if diff[0] > 0 else 1.0
        return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


def seed_list(master_seed: int, n_seeds: int) -> list[int]:
    children = np.random.SeedSequence(master_seed).spawn(n_seeds)
    return [int(c.generate_state(1)[0]) for c in children]


def _paired_job(args):
    g, params, steps, seed = args
    per = run(g, AvaParams(**{**params.to_dict(), "driver": PERIODIC}), steps, seed)
    sto = run(g, AvaParams(**{**params.to_dict(), "driver": STOCHASTIC}), steps, seed)
    return per, sto


def compare_drivers(g: AvaGraph, params: AvaParams, n_seeds: int, steps: int,
                    master_seed: int = 0, workers: int = 1) -> DriverComparison:
    """Run both drivers on the same graph and parameters, paired by seed."""
    from .parallel import ordered_map

    if n_seeds < 2:
        raise ValueError("need at least two seeds")
    seeds = seed_list(master_seed, n_seeds)
    results = ordered_map(_paired_job, [(g, params, steps, s) for s in seeds], workers)
    per = [r[0] for r in results]
    sto = [r[1] for r in results]
    return DriverComparison(seeds, [r.mean_length for r in per], [r.mean_length for r in sto],
                            per, sto)
